#pragma once

#include <map>
#include <string>
#include <vector>

namespace ncst {

struct MetricsReport {
    double nll = 0.0;
    double ppl = 1.0;
    std::map<int, double> bleu;          // n in {3,4,5}
    std::map<int, double> intra_unique;  // n in {1,2}, mean over generations
    std::map<int, double> inter_unique;  // n in {2,3}
    double length_ratio = 0.0;

    std::string to_table() const;
};

/// Single-reference corpus-level BLEU-n: clipped k-gram counts are summed
/// over the corpus before dividing, geometric mean over k=1..n, brevity
/// penalty from total lengths. Zero precisions above k=1 are floored at
/// 1e-9; a corpus with no unigram match scores 0.
double bleu_n(const std::vector<std::vector<int>>& hypotheses,
              const std::vector<std::vector<int>>& references, int n);

/// Convenience single-pair form.
double bleu_n(const std::vector<int>& hypothesis, const std::vector<int>& reference, int n);

/// |distinct n-grams| / |total n-grams| within one text. Texts shorter than
/// n score 1.0 (counted for diagnostics).
double intra_unique_n(const std::vector<int>& tokens, int n);
int64_t intra_unique_short_text_count();

/// Same ratio with n-grams pooled over all generations.
double inter_unique_n(const std::vector<std::vector<int>>& texts, int n);

/// Mean over aligned examples of generation length / reference length.
/// Zero-length references are excluded (counted for diagnostics).
double length_ratio(const std::vector<std::vector<int>>& generations,
                    const std::vector<std::vector<int>>& references);

/// Full report; nll is supplied by the caller (teacher-forced evaluation)
/// and ppl is derived as exp(nll), never measured independently.
MetricsReport compute_metrics(double nll, const std::vector<std::vector<int>>& generations,
                              const std::vector<std::vector<int>>& references);

}  // namespace ncst
