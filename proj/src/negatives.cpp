#include "ncst/negatives.hpp"

#include <stdexcept>

namespace ncst {

const char* neg_method_name(NegMethod m) {
    switch (m) {
        case NegMethod::kMismatch: return "mismatch";
        case NegMethod::kShuffle: return "shuffle";
        case NegMethod::kCombined: return "combined";
    }
    return "?";
}

NegativeDiagnostics& negative_diagnostics() {
    static NegativeDiagnostics d;
    return d;
}

std::vector<int> derangement(int n, RngStream& rng) {
    if (n < 2) throw std::invalid_argument("derangement: need at least 2 elements");
    // Sattolo's algorithm: a uniformly random single-cycle permutation,
    // which can have no fixed point.
    std::vector<int> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, i - 1);
        std::swap(p[static_cast<size_t>(i)], p[static_cast<size_t>(j)]);
    }
    return p;
}

Sentence shuffle_words(const Sentence& s, RngStream& rng) {
    const int n = static_cast<int>(s.ids.size());
    if (n < 2) throw std::invalid_argument("shuffle_words: need at least 2 tokens");
    Sentence out = s;
    if (n == 2) {
        std::swap(out.ids[0], out.ids[1]);
        if (out.surface.size() == 2) std::swap(out.surface[0], out.surface[1]);
        return out;
    }
    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    for (int attempt = 0; attempt < 64; ++attempt) {
        rng.shuffle(perm);
        bool identity = true;
        for (int i = 0; i < n && identity; ++i) identity = perm[static_cast<size_t>(i)] == i;
        if (!identity) break;
    }
    out.ids.clear();
    out.surface.clear();
    for (int i = 0; i < n; ++i) {
        out.ids.push_back(s.ids[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
        if (!s.surface.empty())
            out.surface.push_back(s.surface[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
    }
    return out;
}

Sentence next_of_pair(const TextChunk& chunk, int k) {
    return chunk.sentences.at(static_cast<size_t>(k) + 1);
}

TextChunk derange_sentences(const TextChunk& chunk, RngStream& rng) {
    if (chunk.size() < 2) throw std::invalid_argument("derange_sentences: need at least 2 sentences");
    const auto perm = derangement(chunk.size(), rng);
    TextChunk out;
    out.sentences.reserve(chunk.sentences.size());
    for (int i = 0; i < chunk.size(); ++i)
        out.sentences.push_back(chunk.sentences[static_cast<size_t>(perm[static_cast<size_t>(i)])]);
    return out;
}

namespace {
/// Picks a replacement index j' != index whose chunk differs from the
/// positive; falls back to keeping the colliding one if every other entry
/// is an exact duplicate.
template <class T, class Eq>
int resolve_collision(const std::vector<T>& pool, int index, int j, Eq equal) {
    if (!equal(pool[static_cast<size_t>(j)], pool[static_cast<size_t>(index)])) return j;
    for (int step = 1; step < static_cast<int>(pool.size()); ++step) {
        const int cand = (j + step) % static_cast<int>(pool.size());
        if (cand == index) continue;
        if (!equal(pool[static_cast<size_t>(cand)], pool[static_cast<size_t>(index)])) {
            ++negative_diagnostics().positive_collisions_resampled;
            return cand;
        }
    }
    ++negative_diagnostics().positive_collisions_kept;
    return j;
}
}  // namespace

NegativeSet<TextChunk> make_negatives_coherence(const std::vector<TextChunk>& batch_targets,
                                                int index, RngStream& rng) {
    const int B = static_cast<int>(batch_targets.size());
    if (B < 2) throw std::invalid_argument("make_negatives_coherence: batch size must be >= 2");
    for (const auto& t : batch_targets)
        if (t.size() < 2)
            throw std::invalid_argument("make_negatives_coherence: target chunk needs >= 2 sentences");

    auto chunk_eq = [](const TextChunk& a, const TextChunk& b) { return a == b; };
    NegativeSet<TextChunk> out;
    out.entries.reserve(static_cast<size_t>(2 * B - 1));
    for (int j = 0; j < B; ++j) {
        if (j == index) continue;
        const int jj = resolve_collision(batch_targets, index, j, chunk_eq);
        out.entries.push_back({batch_targets[static_cast<size_t>(jj)], NegMethod::kMismatch});
    }
    out.entries.push_back(
        {derange_sentences(batch_targets[static_cast<size_t>(index)], rng), NegMethod::kShuffle});
    for (int j = 0; j < B; ++j) {
        if (j == index) continue;
        const int jj = resolve_collision(batch_targets, index, j, chunk_eq);
        out.entries.push_back(
            {derange_sentences(batch_targets[static_cast<size_t>(jj)], rng), NegMethod::kCombined});
    }
    return out;
}

NegativeSet<Sentence> make_negatives_cohesion(
    const std::vector<std::pair<Sentence, Sentence>>& batch_pairs, int index, RngStream& rng) {
    const int B = static_cast<int>(batch_pairs.size());
    if (B < 2) throw std::invalid_argument("make_negatives_cohesion: batch size must be >= 2");
    for (const auto& p : batch_pairs)
        if (p.second.ids.size() < 2)
            throw std::invalid_argument("make_negatives_cohesion: next sentence needs >= 2 words");

    std::vector<Sentence> nexts;
    nexts.reserve(static_cast<size_t>(B));
    for (const auto& p : batch_pairs) nexts.push_back(p.second);
    auto sent_eq = [](const Sentence& a, const Sentence& b) { return a == b; };

    NegativeSet<Sentence> out;
    out.entries.reserve(static_cast<size_t>(2 * B - 1));
    for (int j = 0; j < B; ++j) {
        if (j == index) continue;
        const int jj = resolve_collision(nexts, index, j, sent_eq);
        out.entries.push_back({nexts[static_cast<size_t>(jj)], NegMethod::kMismatch});
    }
    out.entries.push_back({shuffle_words(nexts[static_cast<size_t>(index)], rng), NegMethod::kShuffle});
    for (int j = 0; j < B; ++j) {
        if (j == index) continue;
        const int jj = resolve_collision(nexts, index, j, sent_eq);
        out.entries.push_back({shuffle_words(nexts[static_cast<size_t>(jj)], rng), NegMethod::kCombined});
    }
    return out;
}

std::vector<std::pair<Sentence, Sentence>> decompose_pairs(const TextChunk& source,
                                                           const TextChunk& target) {
    std::vector<Sentence> all;
    for (const auto& s : source.sentences) all.push_back(s);
    for (const auto& s : target.sentences) all.push_back(s);
    if (all.size() < 2) throw std::invalid_argument("decompose_pairs: need at least 2 sentences");
    std::vector<std::pair<Sentence, Sentence>> pairs;
    pairs.reserve(all.size() - 1);
    for (size_t k = 0; k + 1 < all.size(); ++k) pairs.emplace_back(all[k], all[k + 1]);
    return pairs;
}

}  // namespace ncst
