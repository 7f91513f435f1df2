#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncst/text.hpp"
#include "ncst/vocab.hpp"

namespace ncst {

struct RawReview {
    std::string id;
    std::vector<std::vector<std::string>> sentences;  // tokenized
};

struct IngestStats {
    int64_t total_records = 0;
    int64_t malformed = 0;
    int64_t dropped_too_few_sentences = 0;
    int64_t dropped_bad_sentence_length = 0;
    int64_t retained = 0;
};

struct CorpusFilter {
    int min_sentences = 10;
    int min_sentence_tokens = 5;
    int max_sentence_tokens = 30;
};

/// format: "text" (one review per line) or "jsonl" ({id, text} records).
/// Retains only reviews passing the filter; order preserved; malformed
/// records are skipped and counted.
std::vector<RawReview> ingest(const std::string& path, const std::string& format,
                              IngestStats* stats = nullptr, const CorpusFilter& filter = {});

/// Deterministic partition by review. Dev and test sizes are floored,
/// remainder goes to train.
struct Splits {
    std::vector<RawReview> train, dev, test;
};
Splits split(std::vector<RawReview> reviews, const std::vector<double>& ratios, uint64_t seed);

/// Rank tokens of the train split by frequency (ties broken lexicographically),
/// truncate to max_tokens, prepend specials.
Vocab build_vocab(const std::vector<RawReview>& train, int max_tokens = 50000);

/// One Example per review from its first 10 sentences: source = sentences
/// 1-5, target = sentences 6-10.
std::vector<Example> make_examples(const std::vector<RawReview>& reviews, const Vocab& vocab);

Sentence to_sentence(const std::vector<std::string>& tokens, const Vocab& vocab);

}  // namespace ncst
