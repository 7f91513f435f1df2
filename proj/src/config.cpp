#include "ncst/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ncst {

const std::map<std::string, std::string>& RunConfig::defaults() {
    // Desk-scale defaults: a fully-defaulted config drives the synthetic
    // corpus pipeline end to end. Full-scale values from the reference
    // setup are noted next to the keys they would replace.
    static const std::map<std::string, std::string> d = {
        {"paths.out_dir", ""},  // empty: $NCST_OUT_DIR or ./runs
        {"paths.corpus", ""},   // empty: <out_dir>/synth/corpus.jsonl
        {"paths.corpus_format", "jsonl"},
        {"paths.embeddings", ""},  // empty: <out_dir>/synth/embeddings.txt
        {"paths.data_dir", ""},    // empty: <out_dir>/data

        {"global.seed", "42"},
        {"global.precision", "standard"},  // standard | high

        {"corpus.min_sentences", "10"},
        {"corpus.min_sentence_tokens", "5"},
        {"corpus.max_sentence_tokens", "30"},
        {"corpus.vocab_size", "50000"},
        {"corpus.split_ratios", "0.8,0.1,0.1"},

        {"embed.dim", "0"},  // 0: infer from the embedding file (300 for GloVe)

        {"synth.reviews", "2400"},
        {"synth.topics", "12"},
        {"synth.entities", "150"},
        {"synth.embed_dim", "64"},

        {"disc.coherence.encoder", "gru"},
        {"disc.cohesion.encoder", "conv"},
        {"disc.filters", "128"},      // 512 at full scale
        {"disc.hidden", "128"},       // 1024 at full scale
        {"disc.feature_dim", "128"},  // 512 at full scale
        {"disc.lambda", "2"},
        {"disc.delta", "0.2"},
        {"disc.lr", "1e-4"},
        {"disc.epochs", "8"},  // 50 at full scale
        {"disc.batch_size", "8"},
        {"disc.dev_recall_trials", "3"},
        {"disc.max_dev_queries", "120"},

        {"gen.hidden", "128"},  // 1024 at full scale
        {"gen.lr", "2e-4"},
        {"gen.clip_norm", "1.0"},
        {"gen.epochs", "14"},  // 60 (TripAdvisor) / 30 (Yelp) at full scale
        {"gen.patience", "3"},
        {"gen.batch_size", "8"},
        {"gen.max_sentences", "5"},
        {"gen.max_tokens_per_sentence", "30"},
        {"gen.max_total_tokens", "160"},

        {"rl.gamma", "1.0"},
        {"rl.lr", "1e-5"},
        {"rl.epochs", "5"},
        {"rl.batch_size", "8"},
        {"rl.weight_coherence", "0.5"},
        {"rl.weight_cohesion", "0.5"},
        {"rl.mixing", "alternate"},

        {"eval.recall_candidates", "100"},
        {"eval.recall_trials", "20"},
        {"eval.recall_max_queries", "0"},
    };
    return d;
}

RunConfig::RunConfig() = default;

namespace {
std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}
}  // namespace

void RunConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot read " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
        set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (defaults().find(key) == defaults().end())
        throw ConfigError("config: unknown key '" + key + "'");
    values_[key] = value;
}

void RunConfig::apply_override(const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("config: override must be key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    auto dit = defaults().find(key);
    if (dit == defaults().end()) throw ConfigError("config: unknown key '" + key + "'");
    return dit->second;
}

int RunConfig::get_int(const std::string& key) const {
    try {
        return std::stoi(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: '" + get(key) + "'");
    }
}

int64_t RunConfig::get_i64(const std::string& key) const {
    try {
        return std::stoll(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: '" + get(key) + "'");
    }
}

uint64_t RunConfig::get_u64(const std::string& key) const {
    try {
        return std::stoull(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: '" + get(key) + "'");
    }
}

double RunConfig::get_double(const std::string& key) const {
    try {
        return std::stod(get(key));
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: '" + get(key) + "'");
    }
}

bool RunConfig::get_bool(const std::string& key) const {
    const std::string& v = get(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(get(key));
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            out.push_back(std::stod(trim(part)));
        } catch (const std::exception&) {
            throw ConfigError("config: key '" + key + "' has a non-numeric element: '" + part + "'");
        }
    }
    return out;
}

std::string RunConfig::out_dir() const {
    const std::string& v = get("paths.out_dir");
    if (!v.empty()) return v;
    if (const char* env = std::getenv("NCST_OUT_DIR"); env && *env) return env;
    return "runs";
}

std::string RunConfig::corpus_path() const {
    const std::string& v = get("paths.corpus");
    return v.empty() ? out_dir() + "/synth/corpus.jsonl" : v;
}

std::string RunConfig::embeddings_path() const {
    const std::string& v = get("paths.embeddings");
    return v.empty() ? out_dir() + "/synth/embeddings.txt" : v;
}

std::string RunConfig::data_dir() const {
    const std::string& v = get("paths.data_dir");
    return v.empty() ? out_dir() + "/data" : v;
}

std::map<std::string, std::string> RunConfig::resolved() const {
    std::map<std::string, std::string> out = defaults();
    for (const auto& [k, v] : values_) out[k] = v;
    return out;
}

std::string RunConfig::dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : resolved()) os << k << " = " << v << "\n";
    return os.str();
}

}  // namespace ncst
