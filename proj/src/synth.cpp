#include "ncst/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "ncst/dataio.hpp"
#include "ncst/rng.hpp"

namespace ncst {

namespace {

struct Topic {
    const char* name;
    std::vector<const char*> nouns;
    std::vector<const char*> adjs;
};

const std::vector<Topic>& topic_list() {
    static const std::vector<Topic> topics = {
        {"hotel",
         {"lobby", "room", "suite", "reception", "elevator", "balcony", "minibar", "courtyard",
          "hallway", "rooftop"},
         {"spacious", "tidy", "quiet", "elegant", "cozy", "bright"}},
        {"restaurant",
         {"menu", "kitchen", "waiter", "dessert", "appetizer", "table", "chef", "sauce", "patio",
          "wine"},
         {"delicious", "fresh", "savory", "crisp", "tender", "rich"}},
        {"museum",
         {"gallery", "exhibit", "sculpture", "painting", "archive", "curator", "atrium", "mural",
          "artifact", "fresco"},
         {"ancient", "striking", "detailed", "rare", "luminous", "grand"}},
        {"beach",
         {"shore", "dune", "boardwalk", "lagoon", "tide", "pier", "cove", "reef", "sand", "surf"},
         {"sunny", "warm", "calm", "clear", "breezy", "golden"}},
        {"airline",
         {"cabin", "runway", "terminal", "cockpit", "luggage", "aisle", "gate", "boarding", "crew",
          "seatbelt"},
         {"smooth", "punctual", "cramped", "efficient", "turbulent", "swift"}},
        {"cinema",
         {"screen", "projector", "trailer", "popcorn", "usher", "matinee", "premiere", "reel",
          "soundtrack", "curtain"},
         {"thrilling", "loud", "vivid", "dramatic", "funny", "gripping"}},
        {"gym",
         {"treadmill", "dumbbell", "locker", "trainer", "barbell", "mat", "sauna", "bench", "rack",
          "mirror"},
         {"sturdy", "clean", "modern", "heavy", "busy", "spotless"}},
        {"library",
         {"shelf", "archive", "librarian", "catalog", "reading", "manuscript", "periodical", "desk",
          "atlas", "annex"},
         {"silent", "dusty", "orderly", "vast", "scholarly", "comfortable"}},
        {"zoo",
         {"enclosure", "aviary", "keeper", "habitat", "penguin", "giraffe", "terrarium", "otter",
          "flamingo", "paddock"},
         {"playful", "exotic", "lively", "curious", "gentle", "noisy"}},
        {"market",
         {"stall", "vendor", "produce", "spices", "bazaar", "basket", "scale", "awning", "crate",
          "haggling"},
         {"bustling", "colorful", "fragrant", "crowded", "cheap", "ripe"}},
        {"theater",
         {"stage", "actor", "costume", "orchestra", "balcony", "script", "rehearsal", "spotlight",
          "prop", "intermission"},
         {"dramatic", "lavish", "moving", "bold", "classic", "splendid"}},
        {"park",
         {"meadow", "fountain", "trail", "bench", "pavilion", "pond", "grove", "lawn", "playground",
          "bridge"},
         {"green", "peaceful", "shady", "open", "scenic", "tranquil"}},
    };
    return topics;
}

const std::vector<const char*>& connective_ladder() {
    static const std::vector<const char*> ladder = {"first", "soon",       "then",       "next",
                                                    "later", "afterwards", "eventually", "lastly",
                                                    "finally", "overall"};
    return ladder;
}

std::vector<std::string> make_entities(int n, RngStream& rng) {
    static const std::vector<const char*> syllables = {
        "mar", "vel", "tor", "ina", "lo",  "ke",  "zan", "bri", "ost", "ul",
        "ser", "gan", "dor", "mi",  "tha", "ru",  "pel", "vos", "qui", "nar"};
    std::set<std::string> seen;
    std::vector<std::string> out;
    while (static_cast<int>(out.size()) < n) {
        std::string name = syllables[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(syllables.size()) - 1))];
        name += syllables[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(syllables.size()) - 1))];
        name += syllables[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(syllables.size()) - 1))];
        if (seen.insert(name).second) out.push_back(name);
    }
    return out;
}

std::string join(const std::vector<std::string>& toks) {
    std::string s;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) s += " ";
        s += toks[i];
    }
    return s;
}

}  // namespace

void write_synthetic_corpus(const SynthConfig& cfg, const std::string& corpus_path,
                            const std::string& embeddings_path) {
    if (cfg.n_topics < 2 || cfg.n_topics > static_cast<int>(topic_list().size()))
        throw std::invalid_argument("synth: n_topics must be in [2, " +
                                    std::to_string(topic_list().size()) + "]");
    if (cfg.n_reviews < 1) throw std::invalid_argument("synth: n_reviews must be positive");
    if (cfg.embed_dim < 8) throw std::invalid_argument("synth: embed_dim too small");

    RngStream rng(cfg.seed, "synth.corpus");
    const auto entities = make_entities(cfg.n_entities, rng);
    const auto& ladder = connective_ladder();

    // --- corpus ---------------------------------------------------------
    std::ofstream out(corpus_path);
    if (!out) throw std::runtime_error("synth: cannot write " + corpus_path);
    for (int r = 0; r < cfg.n_reviews; ++r) {
        const int t = rng.uniform_int(0, cfg.n_topics - 1);
        const Topic& topic = topic_list()[static_cast<size_t>(t)];
        const std::string& ent = entities[static_cast<size_t>(rng.uniform_int(0, cfg.n_entities - 1))];

        // One noun per position: a random permutation of the topic's nouns.
        std::vector<const char*> nouns = topic.nouns;
        rng.shuffle(nouns);
        auto adj = [&] { return topic.adjs[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(topic.adjs.size()) - 1))]; };

        std::vector<std::string> sentences;
        for (int p = 0; p < 10; ++p) {
            const std::string conn = ladder[static_cast<size_t>(p)];
            const std::string noun = nouns[static_cast<size_t>(p)];
            std::vector<std::string> s;
            if (p == 0) {
                // "first we visited <ent> and admired the <noun> ."
                s = {conn, "we", "visited", ent, "and", "admired", "the", noun, "."};
            } else {
                const std::string prev = nouns[static_cast<size_t>(p - 1)];
                switch (rng.uniform_int(0, 2)) {
                    case 0:
                        s = {conn, "the", prev, "at", ent, "made", "the", noun, "look", adj(), "."};
                        break;
                    case 1:
                        s = {conn, "we", "thought", "the", noun, "beside", "the", prev, "was",
                             adj(), "at", ent, "."};
                        break;
                    default:
                        s = {conn, "it", "was", "the", adj(), noun, "of", ent, "that", "matched",
                             "the", prev, "."};
                        break;
                }
            }
            sentences.push_back(join(s));
        }

        nlohmann::json rec;
        char id[32];
        std::snprintf(id, sizeof(id), "synth-%06d", r);
        rec["id"] = id;
        rec["text"] = join(sentences);
        out << rec.dump() << "\n";
    }
    out.close();

    // --- embeddings -----------------------------------------------------
    // Token set mirrors the generator above.
    std::vector<std::string> function_words = {"we",  "visited", "and", "admired", "the", "at",
                                               "made", "look",   "thought", "beside", "was", "it",
                                               "of",  "that",    "matched", "."};

    RngStream erng(cfg.seed, "synth.embeddings");
    const int d = cfg.embed_dim;
    auto gauss_vec = [&](double scale) {
        std::vector<double> v(static_cast<size_t>(d));
        for (auto& e : v) e = scale * erng.normal();
        return v;
    };
    const auto ladder_dir = gauss_vec(1.0 / std::sqrt(static_cast<double>(d)));
    const auto ladder_base = gauss_vec(0.5 / std::sqrt(static_cast<double>(d)));

    std::map<std::string, std::vector<double>> table;
    for (int t = 0; t < cfg.n_topics; ++t) {
        const Topic& topic = topic_list()[static_cast<size_t>(t)];
        const auto centroid = gauss_vec(0.8 / std::sqrt(static_cast<double>(d)));
        auto near_centroid = [&] {
            auto v = gauss_vec(0.35 / std::sqrt(static_cast<double>(d)));
            for (int i = 0; i < d; ++i) v[static_cast<size_t>(i)] += centroid[static_cast<size_t>(i)];
            return v;
        };
        for (const char* w : topic.nouns) table.emplace(w, near_centroid());
        for (const char* w : topic.adjs) table.emplace(w, near_centroid());
    }
    for (size_t p = 0; p < ladder.size(); ++p) {
        auto v = gauss_vec(0.1 / std::sqrt(static_cast<double>(d)));
        for (int i = 0; i < d; ++i)
            v[static_cast<size_t>(i)] += ladder_base[static_cast<size_t>(i)] +
                                         0.9 * static_cast<double>(p) * ladder_dir[static_cast<size_t>(i)];
        table.emplace(ladder[p], std::move(v));
    }
    for (const auto& e : entities) table.emplace(e, gauss_vec(1.0 / std::sqrt(static_cast<double>(d))));
    for (const auto& w : function_words) table.emplace(w, gauss_vec(0.4 / std::sqrt(static_cast<double>(d))));

    std::ofstream eout(embeddings_path);
    if (!eout) throw std::runtime_error("synth: cannot write " + embeddings_path);
    for (const auto& [tok, vec] : table) {
        eout << tok;
        for (double x : vec) {
            char buf[24];
            std::snprintf(buf, sizeof(buf), " %.6f", x);
            eout << buf;
        }
        eout << "\n";
    }
}

}  // namespace ncst
