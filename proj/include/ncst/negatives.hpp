#pragma once

#include <string>
#include <vector>

#include "ncst/rng.hpp"
#include "ncst/text.hpp"

namespace ncst {

enum class NegMethod { kMismatch, kShuffle, kCombined };

const char* neg_method_name(NegMethod m);

/// The 2B-1 negatives constructed for one positive pair, tagged by method.
template <class T>
struct NegativeSet {
    struct Entry {
        T item;
        NegMethod method;
    };
    std::vector<Entry> entries;

    int size() const { return static_cast<int>(entries.size()); }
};

struct NegativeDiagnostics {
    int64_t positive_collisions_resampled = 0;
    int64_t positive_collisions_kept = 0;
};
NegativeDiagnostics& negative_diagnostics();

/// Fixed-point-free permutation of [0, n) (single-cycle construction).
std::vector<int> derangement(int n, RngStream& rng);

/// Uniform permutation of the sentence's tokens, resampled until it differs
/// from the original order (for two tokens the swap is forced).
Sentence shuffle_words(const Sentence& s, RngStream& rng);

Sentence next_of_pair(const TextChunk& chunk, int k);  // helper for tests

TextChunk derange_sentences(const TextChunk& chunk, RngStream& rng);

/// Negatives for positive (S_i, T_i) of a minibatch of target chunks:
/// B-1 mismatches (S_i fixed, T_j from other indices), one derangement of
/// T_i's sentence order, and B-1 combined (other targets deranged).
NegativeSet<TextChunk> make_negatives_coherence(const std::vector<TextChunk>& batch_targets,
                                                int index, RngStream& rng);

/// Same structure for sentence pairs: the mismatch/combined pool is the
/// other pairs' next sentences and the shuffle is word-level.
NegativeSet<Sentence> make_negatives_cohesion(const std::vector<std::pair<Sentence, Sentence>>& batch_pairs,
                                              int index, RngStream& rng);

/// All consecutive sentence pairs of [S; T] in order, including the
/// (last-of-S, first-of-T) junction.
std::vector<std::pair<Sentence, Sentence>> decompose_pairs(const TextChunk& source,
                                                           const TextChunk& target);

}  // namespace ncst
