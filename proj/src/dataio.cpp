#include "ncst/dataio.hpp"

#include <filesystem>
#include <iostream>

namespace ncst {

namespace {
nlohmann::json chunk_to_json(const TextChunk& c) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : c.sentences) arr.push_back(s.surface);
    return arr;
}

TextChunk chunk_from_json(const nlohmann::json& arr, const Vocab& vocab) {
    TextChunk c;
    for (const auto& sent : arr) {
        Sentence s;
        for (const auto& tok : sent) {
            s.surface.push_back(tok.get<std::string>());
            s.ids.push_back(vocab.id(s.surface.back()));
        }
        c.sentences.push_back(std::move(s));
    }
    return c;
}
}  // namespace

void ensure_dir(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw DataError("cannot create directory " + path + ": " + ec.message());
}

void write_dataset(const std::string& path, const std::vector<Example>& examples) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& ex : examples) {
        nlohmann::json rec;
        rec["review_id"] = ex.review_id;
        rec["source"] = chunk_to_json(ex.source);
        rec["target"] = chunk_to_json(ex.target);
        out << rec.dump() << "\n";
    }
}

std::vector<Example> load_dataset(const std::string& path, const Vocab& vocab) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::vector<Example> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("source") || !rec.contains("target"))
            throw DataError("malformed dataset record at line " + std::to_string(lineno) + " of " + path);
        Example ex;
        ex.review_id = rec.value("review_id", std::to_string(lineno));
        ex.source = chunk_from_json(rec["source"], vocab);
        ex.target = chunk_from_json(rec["target"], vocab);
        out.push_back(std::move(ex));
    }
    return out;
}

void write_generations(const std::string& path, const std::vector<Generation>& gens) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& g : gens) {
        nlohmann::json rec;
        rec["review_id"] = g.review_id;
        rec["generated"] = g.sentences;
        out << rec.dump() << "\n";
    }
}

std::vector<Generation> load_generations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path);
    std::vector<Generation> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.contains("generated"))
            throw DataError("malformed generations record at line " + std::to_string(lineno));
        Generation g;
        g.review_id = rec.value("review_id", std::to_string(lineno));
        for (const auto& sent : rec["generated"]) {
            std::vector<std::string> toks;
            for (const auto& t : sent) toks.push_back(t.get<std::string>());
            g.sentences.push_back(std::move(toks));
        }
        out.push_back(std::move(g));
    }
    return out;
}

RunLogger::RunLogger(const std::string& dir, const std::string& name, bool echo)
    : dir_(dir), echo_(echo) {
    ensure_dir(dir);
    log_.open(dir + "/" + name + ".jsonl");
    summary_.open(dir + "/" + name + ".txt");
    if (!log_ || !summary_) throw DataError("cannot open run logs under " + dir);
}

void RunLogger::record(const nlohmann::json& rec) {
    log_ << rec.dump() << "\n";
    log_.flush();
    if (echo_) std::cout << rec.dump() << std::endl;
}

void RunLogger::summary(const std::string& text) {
    summary_ << text << "\n";
    summary_.flush();
}

}  // namespace ncst
