#include "ncst/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "ncst/rng.hpp"

namespace ncst {

namespace {
bool sentence_lengths_ok(const std::vector<std::vector<std::string>>& sentences,
                         const CorpusFilter& f) {
    for (const auto& s : sentences) {
        const int n = static_cast<int>(s.size());
        if (n < f.min_sentence_tokens || n > f.max_sentence_tokens) return false;
    }
    return true;
}
}  // namespace

std::vector<RawReview> ingest(const std::string& path, const std::string& format,
                              IngestStats* stats, const CorpusFilter& filter) {
    if (format != "text" && format != "jsonl")
        throw std::invalid_argument("ingest: unsupported format '" + format + "'");
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest: cannot read " + path);

    IngestStats local;
    std::vector<RawReview> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ++local.total_records;

        std::string id, text;
        if (format == "jsonl") {
            auto rec = nlohmann::json::parse(line, nullptr, false);
            if (rec.is_discarded() || !rec.contains("text")) {
                ++local.malformed;
                continue;
            }
            text = rec["text"].get<std::string>();
            id = rec.contains("id") ? rec["id"].get<std::string>() : std::to_string(lineno);
        } else {
            text = line;
            id = std::to_string(lineno);
        }

        auto sentences = split_sentences(tokenize(text));
        if (static_cast<int>(sentences.size()) < filter.min_sentences) {
            ++local.dropped_too_few_sentences;
            continue;
        }
        if (!sentence_lengths_ok(sentences, filter)) {
            ++local.dropped_bad_sentence_length;
            continue;
        }
        ++local.retained;
        out.push_back({id, std::move(sentences)});
    }
    if (stats) *stats = local;
    return out;
}

Splits split(std::vector<RawReview> reviews, const std::vector<double>& ratios, uint64_t seed) {
    if (ratios.size() != 3) throw std::invalid_argument("split: need three ratios");
    double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");
    if (reviews.empty()) throw std::invalid_argument("split: empty corpus");

    RngStream rng(seed, "corpus.split");
    rng.shuffle(reviews);

    const int n = static_cast<int>(reviews.size());
    const int n_dev = static_cast<int>(ratios[1] * n);
    const int n_test = static_cast<int>(ratios[2] * n);
    const int n_train = n - n_dev - n_test;

    Splits s;
    s.train.assign(reviews.begin(), reviews.begin() + n_train);
    s.dev.assign(reviews.begin() + n_train, reviews.begin() + n_train + n_dev);
    s.test.assign(reviews.begin() + n_train + n_dev, reviews.end());
    return s;
}

Vocab build_vocab(const std::vector<RawReview>& train, int max_tokens) {
    if (train.empty()) throw std::invalid_argument("build_vocab: empty train split");
    // Ordered map gives the lexicographic tie-break for free.
    std::map<std::string, int64_t> freq;
    for (const auto& r : train)
        for (const auto& s : r.sentences)
            for (const auto& tok : s) ++freq[tok];

    std::vector<std::pair<std::string, int64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (static_cast<int>(ranked.size()) > max_tokens) ranked.resize(static_cast<size_t>(max_tokens));

    Vocab v;
    for (const auto& [tok, _] : ranked) v.add(tok);
    return v;
}

Sentence to_sentence(const std::vector<std::string>& tokens, const Vocab& vocab) {
    Sentence s;
    s.surface = tokens;
    s.ids.reserve(tokens.size());
    for (const auto& tok : tokens) s.ids.push_back(vocab.id(tok));
    return s;
}

std::vector<Example> make_examples(const std::vector<RawReview>& reviews, const Vocab& vocab) {
    std::vector<Example> out;
    out.reserve(reviews.size());
    for (const auto& r : reviews) {
        if (r.sentences.size() < 10)
            throw std::invalid_argument("make_examples: review " + r.id + " has fewer than 10 sentences");
        Example ex;
        ex.review_id = r.id;
        for (int i = 0; i < 5; ++i) ex.source.sentences.push_back(to_sentence(r.sentences[static_cast<size_t>(i)], vocab));
        for (int i = 5; i < 10; ++i) ex.target.sentences.push_back(to_sentence(r.sentences[static_cast<size_t>(i)], vocab));
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace ncst
