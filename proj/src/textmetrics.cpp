#include "ncst/textmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace ncst {

namespace {

constexpr double kPrecisionFloor = 1e-9;

// Packs up to 5-grams of 32-bit ids into a string key.
std::string ngram_key(const std::vector<int>& toks, size_t start, int n) {
    std::string key;
    key.reserve(static_cast<size_t>(n) * 4);
    for (int k = 0; k < n; ++k) {
        const int t = toks[start + static_cast<size_t>(k)];
        key.append(reinterpret_cast<const char*>(&t), sizeof(int));
    }
    return key;
}

std::unordered_map<std::string, int64_t> ngram_counts(const std::vector<int>& toks, int n) {
    std::unordered_map<std::string, int64_t> counts;
    if (static_cast<int>(toks.size()) >= n)
        for (size_t i = 0; i + static_cast<size_t>(n) <= toks.size(); ++i) ++counts[ngram_key(toks, i, n)];
    return counts;
}

}  // namespace

double bleu_n(const std::vector<std::vector<int>>& hypotheses,
              const std::vector<std::vector<int>>& references, int n) {
    if (n < 1) throw std::invalid_argument("bleu_n: n must be >= 1");
    if (hypotheses.size() != references.size())
        throw std::invalid_argument("bleu_n: hypothesis/reference count mismatch");

    std::vector<int64_t> clipped(static_cast<size_t>(n), 0), total(static_cast<size_t>(n), 0);
    int64_t hyp_len = 0, ref_len = 0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        const auto& hyp = hypotheses[i];
        const auto& ref = references[i];
        hyp_len += static_cast<int64_t>(hyp.size());
        ref_len += static_cast<int64_t>(ref.size());
        for (int k = 1; k <= n; ++k) {
            auto hyp_counts = ngram_counts(hyp, k);
            auto ref_counts = ngram_counts(ref, k);
            for (const auto& [gram, c] : hyp_counts) {
                auto it = ref_counts.find(gram);
                const int64_t r = it == ref_counts.end() ? 0 : it->second;
                clipped[static_cast<size_t>(k - 1)] += std::min(c, r);
                total[static_cast<size_t>(k - 1)] += c;
            }
        }
    }

    if (hyp_len == 0) return 0.0;
    if (clipped[0] == 0) return 0.0;

    double log_prec = 0.0;
    for (int k = 1; k <= n; ++k) {
        const int64_t c = clipped[static_cast<size_t>(k - 1)];
        const int64_t t = total[static_cast<size_t>(k - 1)];
        const double p = (t == 0 || c == 0) ? kPrecisionFloor
                                            : static_cast<double>(c) / static_cast<double>(t);
        log_prec += std::log(p);
    }
    const double bp = hyp_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return bp * std::exp(log_prec / n);
}

double bleu_n(const std::vector<int>& hypothesis, const std::vector<int>& reference, int n) {
    return bleu_n(std::vector<std::vector<int>>{hypothesis},
                  std::vector<std::vector<int>>{reference}, n);
}

namespace {
int64_t short_text_count = 0;
}

int64_t intra_unique_short_text_count() { return short_text_count; }

double intra_unique_n(const std::vector<int>& tokens, int n) {
    if (n < 1) throw std::invalid_argument("intra_unique_n: n must be >= 1");
    if (static_cast<int>(tokens.size()) < n) {
        ++short_text_count;
        return 1.0;
    }
    auto counts = ngram_counts(tokens, n);
    int64_t total = 0;
    for (const auto& [_, c] : counts) total += c;
    return static_cast<double>(counts.size()) / static_cast<double>(total);
}

double inter_unique_n(const std::vector<std::vector<int>>& texts, int n) {
    if (texts.empty()) throw std::invalid_argument("inter_unique_n: empty corpus");
    std::unordered_map<std::string, int64_t> pooled;
    int64_t total = 0;
    for (const auto& t : texts) {
        if (static_cast<int>(t.size()) < n) continue;
        for (size_t i = 0; i + static_cast<size_t>(n) <= t.size(); ++i) {
            ++pooled[ngram_key(t, i, n)];
            ++total;
        }
    }
    if (total == 0) return 1.0;
    return static_cast<double>(pooled.size()) / static_cast<double>(total);
}

namespace {
int64_t zero_ref_count = 0;
}

double length_ratio(const std::vector<std::vector<int>>& generations,
                    const std::vector<std::vector<int>>& references) {
    if (generations.size() != references.size())
        throw std::invalid_argument("length_ratio: misaligned lists");
    double acc = 0.0;
    int64_t used = 0;
    for (size_t i = 0; i < generations.size(); ++i) {
        if (references[i].empty()) {
            ++zero_ref_count;
            continue;
        }
        acc += static_cast<double>(generations[i].size()) / static_cast<double>(references[i].size());
        ++used;
    }
    return used == 0 ? 0.0 : acc / static_cast<double>(used);
}

MetricsReport compute_metrics(double nll, const std::vector<std::vector<int>>& generations,
                              const std::vector<std::vector<int>>& references) {
    MetricsReport r;
    r.nll = nll;
    r.ppl = std::exp(nll);
    for (int n : {3, 4, 5}) r.bleu[n] = bleu_n(generations, references, n);
    for (int n : {1, 2}) {
        double acc = 0.0;
        for (const auto& g : generations) acc += intra_unique_n(g, n);
        r.intra_unique[n] = generations.empty() ? 1.0 : acc / static_cast<double>(generations.size());
    }
    for (int n : {2, 3}) r.inter_unique[n] = inter_unique_n(generations, n);
    r.length_ratio = length_ratio(generations, references);
    return r;
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    os << "metric            value\n";
    os << "NLL               " << nll << "\n";
    os << "PPL               " << ppl << "\n";
    for (const auto& [n, v] : bleu) os << "BLEU-" << n << "            " << v << "\n";
    for (const auto& [n, v] : intra_unique) os << "intra-unique-" << n << "    " << v << "\n";
    for (const auto& [n, v] : inter_unique) os << "inter-unique-" << n << "    " << v << "\n";
    os << "length-ratio      " << length_ratio << "\n";
    return os.str();
}

}  // namespace ncst
