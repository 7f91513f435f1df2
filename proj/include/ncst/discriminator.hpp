#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ncst/embeddings.hpp"
#include "ncst/negatives.hpp"
#include "ncst/nn.hpp"
#include "ncst/optim.hpp"
#include "ncst/rng.hpp"
#include "ncst/tensor.hpp"
#include "ncst/text.hpp"

namespace ncst {

enum class EncoderKind { kConv, kGru };

inline const char* encoder_kind_name(EncoderKind k) {
    return k == EncoderKind::kConv ? "conv" : "gru";
}
inline EncoderKind encoder_kind_from(const std::string& s) {
    if (s == "conv") return EncoderKind::kConv;
    if (s == "gru") return EncoderKind::kGru;
    throw std::invalid_argument("unknown encoder kind '" + s + "'");
}

struct EncoderSpec {
    EncoderKind kind = EncoderKind::kConv;
    std::vector<int> filter_widths = {2, 3, 4, 5};  // conv
    int filters = 512;                              // conv, per width
    int hidden = 1024;                              // gru
    int feature_dim = 512;                          // fully connected head output
};

enum class DiscKind { kCoherence, kCohesion };

inline const char* disc_kind_name(DiscKind k) {
    return k == DiscKind::kCoherence ? "coherence" : "cohesion";
}
inline DiscKind disc_kind_from(const std::string& s) {
    if (s == "coherence") return DiscKind::kCoherence;
    if (s == "cohesion") return DiscKind::kCohesion;
    throw std::invalid_argument("unknown discriminator kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// Sequence encoder: conv-maxpool or bidirectional GRU over a sequence of
// input vectors, then fully-connected -> batch-norm -> tanh.
// ---------------------------------------------------------------------------

template <class Real>
struct SeqEncoderParamsT {
    EncoderSpec spec;
    int input_dim = 0;
    // conv path
    std::vector<ParamT<Real>> conv_w, conv_b;  // one bank per width
    // gru path
    GruCellParamsT<Real> fwd, bwd;
    // shared head
    LinearParamsT<Real> fc;
    BatchNormParamsT<Real> bn;

    SeqEncoderParamsT() = default;
    SeqEncoderParamsT(const std::string& prefix, const EncoderSpec& sp, int in_dim, RngStream& rng)
        : spec(sp), input_dim(in_dim) {
        int pooled_dim = 0;
        if (spec.kind == EncoderKind::kConv) {
            for (int w : spec.filter_widths) {
                conv_w.emplace_back(prefix + ".conv" + std::to_string(w) + ".W",
                                    uniform_init<Real>({spec.filters, w * in_dim}, w * in_dim, rng));
                conv_b.emplace_back(prefix + ".conv" + std::to_string(w) + ".b",
                                    TensorT<Real>({spec.filters}));
            }
            pooled_dim = spec.filters * static_cast<int>(spec.filter_widths.size());
        } else {
            fwd = GruCellParamsT<Real>(prefix + ".fwd", in_dim, spec.hidden, rng);
            bwd = GruCellParamsT<Real>(prefix + ".bwd", in_dim, spec.hidden, rng);
            pooled_dim = 2 * spec.hidden;
        }
        fc = LinearParamsT<Real>(prefix + ".fc", spec.feature_dim, pooled_dim, rng);
        bn = BatchNormParamsT<Real>(prefix + ".bn", spec.feature_dim);
    }

    std::vector<ParamT<Real>*> params() {
        std::vector<ParamT<Real>*> out;
        for (auto& p : conv_w) out.push_back(&p);
        for (auto& p : conv_b) out.push_back(&p);
        if (spec.kind == EncoderKind::kGru) {
            for (auto* p : fwd.params()) out.push_back(p);
            for (auto* p : bwd.params()) out.push_back(p);
        }
        for (auto* p : fc.params()) out.push_back(p);
        for (auto* p : bn.params()) out.push_back(p);
        return out;
    }

    std::vector<std::pair<std::string, TensorT<Real>*>> named_tensors() {
        std::vector<std::pair<std::string, TensorT<Real>*>> out;
        for (auto* p : params()) out.emplace_back(p->name, &p->value);
        out.emplace_back(bn.gamma.name + ".running_mean", &bn.running_mean);
        out.emplace_back(bn.gamma.name + ".running_var", &bn.running_var);
        return out;
    }

    int max_filter_width() const {
        int w = 1;
        for (int fw : spec.filter_widths) w = std::max(w, fw);
        return w;
    }
};

/// Pre-head encoding of one sequence (rows of `seq` are input vectors).
/// Sequences shorter than the largest conv filter are left-padded with
/// zero vectors.
template <class Real>
Var<Real> encode_sequence_body(TapeT<Real>& tape, SeqEncoderParamsT<Real>& enc,
                               const TensorT<Real>& seq) {
    if (seq.rows() < 1) throw NumericError("encode_sequence_body: empty sequence");
    if (enc.spec.kind == EncoderKind::kConv) {
        TensorT<Real> padded = seq;
        const int need = enc.max_filter_width();
        if (seq.rows() < need) {
            padded = TensorT<Real>({need, seq.cols()});
            const int off = need - seq.rows();
            for (int r = 0; r < seq.rows(); ++r)
                for (int c = 0; c < seq.cols(); ++c) padded.at(off + r, c) = seq.at(r, c);
        }
        Var<Real> in = tape.leaf(std::move(padded));
        std::vector<Var<Real>> pooled;
        for (size_t i = 0; i < enc.spec.filter_widths.size(); ++i)
            pooled.push_back(conv1d_maxpool(tape, in, tape.param(enc.conv_w[i]),
                                            tape.param(enc.conv_b[i]), enc.spec.filter_widths[i]));
        return concat(tape, pooled);
    }
    // 1-layer bidirectional GRU; final states of both directions concatenated.
    const int L = seq.rows();
    auto fwd_cell = load_gru_cell(tape, enc.fwd);
    auto bwd_cell = load_gru_cell(tape, enc.bwd);
    Var<Real> hf = tape.leaf(TensorT<Real>({enc.spec.hidden}));
    Var<Real> hb = tape.leaf(TensorT<Real>({enc.spec.hidden}));
    for (int i = 0; i < L; ++i) {
        TensorT<Real> xf({seq.cols()}), xb({seq.cols()});
        for (int c = 0; c < seq.cols(); ++c) {
            xf[c] = seq.at(i, c);
            xb[c] = seq.at(L - 1 - i, c);
        }
        hf = gru_cell(tape, fwd_cell, tape.leaf(std::move(xf)), hf);
        hb = gru_cell(tape, bwd_cell, tape.leaf(std::move(xb)), hb);
    }
    return concat(tape, std::vector<Var<Real>>{hf, hb});
}

/// Batched head: fc -> batch-norm (over the batch) -> tanh. Returns one
/// feature vector per input sequence.
template <class Real>
std::vector<Var<Real>> encode_batch(TapeT<Real>& tape, SeqEncoderParamsT<Real>& enc,
                                    const std::vector<TensorT<Real>>& seqs, bool train_mode) {
    std::vector<Var<Real>> fc_rows;
    fc_rows.reserve(seqs.size());
    for (const auto& s : seqs) fc_rows.push_back(linear(tape, enc.fc, encode_sequence_body(tape, enc, s)));
    Var<Real> stacked = stack_rows(tape, fc_rows);
    Var<Real> normed = batch_norm(tape, stacked, enc.bn, train_mode);
    Var<Real> activated = tanh_op(tape, normed);
    std::vector<Var<Real>> out;
    out.reserve(seqs.size());
    for (size_t i = 0; i < seqs.size(); ++i) out.push_back(take_row(tape, activated, static_cast<int>(i)));
    return out;
}

// ---------------------------------------------------------------------------
// Dual encoder discriminator
// ---------------------------------------------------------------------------

/// Source and target encoders share an architecture but never parameters,
/// so scores are not symmetric in their arguments.
template <class Real>
struct DualEncoderParamsT {
    DiscKind kind = DiscKind::kCoherence;
    SeqEncoderParamsT<Real> source_enc, target_enc;
    int embed_dim = 0;

    DualEncoderParamsT() = default;
    DualEncoderParamsT(DiscKind k, const EncoderSpec& spec, int embed_dim_, uint64_t seed)
        : kind(k), embed_dim(embed_dim_) {
        RngStream rng(seed, std::string("disc.init.") + disc_kind_name(k));
        const char* base = k == DiscKind::kCoherence ? "coherence" : "cohesion";
        source_enc = SeqEncoderParamsT<Real>(std::string(base) + ".src", spec, embed_dim_, rng);
        target_enc = SeqEncoderParamsT<Real>(std::string(base) + ".tgt", spec, embed_dim_, rng);
    }

    std::vector<ParamT<Real>*> params() {
        auto out = source_enc.params();
        for (auto* p : target_enc.params()) out.push_back(p);
        return out;
    }
    std::vector<std::pair<std::string, TensorT<Real>*>> named_tensors() {
        auto out = source_enc.named_tensors();
        for (auto& t : target_enc.named_tensors()) out.push_back(t);
        return out;
    }
};

/// Coherence inputs: one BOW vector per sentence.
template <class Real>
TensorT<Real> coherence_input(const TextChunk& chunk, const EmbeddingTableT<Real>& table) {
    if (chunk.empty()) throw std::invalid_argument("coherence_input: empty chunk");
    TensorT<Real> seq({chunk.size(), table.dim});
    for (int i = 0; i < chunk.size(); ++i) {
        const auto bow = bow_embed(chunk.sentences[static_cast<size_t>(i)], table);
        for (int c = 0; c < table.dim; ++c) seq.at(i, c) = bow[c];
    }
    return seq;
}

/// Cohesion inputs: the raw word-vector sequence (order preserved).
template <class Real>
TensorT<Real> cohesion_input(const Sentence& s, const EmbeddingTableT<Real>& table) {
    return embed_sequence(s.ids, table);
}

/// Scores a batch of (source_seq, target_seq) input matrices; entries may
/// repeat. Returns the cosine of the two encodings for each pair given as
/// (source index, target index) into the two sequence lists.
template <class Real>
std::vector<Var<Real>> score_pairs(TapeT<Real>& tape, DualEncoderParamsT<Real>& d,
                                   const std::vector<TensorT<Real>>& source_seqs,
                                   const std::vector<TensorT<Real>>& target_seqs,
                                   const std::vector<std::pair<int, int>>& pairs, bool train_mode) {
    auto src = encode_batch(tape, d.source_enc, source_seqs, train_mode);
    auto tgt = encode_batch(tape, d.target_enc, target_seqs, train_mode);
    std::vector<Var<Real>> out;
    out.reserve(pairs.size());
    for (auto [i, j] : pairs) out.push_back(cosine(tape, src[static_cast<size_t>(i)], tgt[static_cast<size_t>(j)]));
    return out;
}

/// D_coherence(S, T): cosine of the two chunk encodings, in [-1, 1].
/// Evaluation path (running batch-norm statistics).
template <class Real>
double coherence_score(DualEncoderParamsT<Real>& d, const TextChunk& S, const TextChunk& T,
                       const EmbeddingTableT<Real>& table) {
    TapeT<Real> tape;
    tape.set_grad_enabled(false);
    auto scores = score_pairs(tape, d, {coherence_input(S, table)}, {coherence_input(T, table)},
                              {{0, 0}}, /*train_mode=*/false);
    return static_cast<double>(scores[0]->value[0]);
}

/// D_cohesion(s_k, s_{k+1}): order-sensitive sequence encoders.
template <class Real>
double cohesion_score(DualEncoderParamsT<Real>& d, const Sentence& s_k, const Sentence& s_next,
                      const EmbeddingTableT<Real>& table) {
    TapeT<Real> tape;
    tape.set_grad_enabled(false);
    auto scores = score_pairs(tape, d, {cohesion_input(s_k, table)}, {cohesion_input(s_next, table)},
                              {{0, 0}}, /*train_mode=*/false);
    return static_cast<double>(scores[0]->value[0]);
}

// ---------------------------------------------------------------------------
// AVG^lambda and the margin ranking loss
// ---------------------------------------------------------------------------

/// Softmax-weighted average: the mean at lambda=0, approaching the max as
/// lambda grows. Plain-number form.
inline double weighted_avg(const std::vector<double>& scores, double lambda) {
    if (scores.empty()) throw std::invalid_argument("weighted_avg: empty scores");
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double z = 0.0, acc = 0.0;
    for (double s : scores) z += std::exp(lambda * (s - mx));
    for (double s : scores) acc += std::exp(lambda * (s - mx)) / z * s;
    return acc;
}

/// Graph form: dot(softmax(lambda * x), x).
template <class Real>
Var<Real> weighted_avg(TapeT<Real>& tape, Var<Real> scores, Real lambda) {
    return dot(tape, softmax(tape, scale(tape, scores, lambda)), scores);
}

/// max(0, delta - positive + AVG^lambda(negatives)).
template <class Real>
Var<Real> ranking_loss(TapeT<Real>& tape, Var<Real> positive, Var<Real> negatives, Real delta,
                       Real lambda) {
    Var<Real> avg = weighted_avg(tape, negatives, lambda);
    Var<Real> margin = sub(tape, add(tape, tape.leaf(TensorT<Real>::scalar(delta)), avg), positive);
    return relu_op(tape, margin);
}

inline double ranking_loss(double positive, const std::vector<double>& negatives, double delta,
                           double lambda) {
    return std::max(0.0, delta - positive + weighted_avg(negatives, lambda));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct DiscTrainConfig {
    double lambda = 2.0;
    double delta = 0.2;
    double lr = 1e-5;
    int epochs = 50;
    int batch_size = 8;
    uint64_t seed = 0;
    int dev_recall_trials = 5;
    int dev_recall_candidates = 100;
    int max_dev_queries = 200;
    bool verbose = false;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double dev_r_at_1 = 0.0;
};

struct DiscTrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_dev_r1 = 0.0;
};

namespace detail {

/// Shared-encoding batch layout for one coherence minibatch: targets and
/// their deranged variants are encoded once and reused across positives.
template <class Real>
struct CoherenceBatchPlan {
    std::vector<TensorT<Real>> src_seqs;             // B
    std::vector<TensorT<Real>> tgt_seqs;             // 2B: originals then deranged
    std::vector<std::pair<int, int>> score_pairs;    // positives then per-i negatives
    int B = 0;
};

template <class Real>
CoherenceBatchPlan<Real> plan_coherence_batch(const std::vector<const Example*>& batch,
                                              const EmbeddingTableT<Real>& table, RngStream& rng) {
    CoherenceBatchPlan<Real> plan;
    plan.B = static_cast<int>(batch.size());
    std::vector<TextChunk> targets;
    targets.reserve(batch.size());
    for (const auto* ex : batch) targets.push_back(ex->target);

    for (const auto* ex : batch) plan.src_seqs.push_back(coherence_input(ex->source, table));
    for (const auto& t : targets) plan.tgt_seqs.push_back(coherence_input(t, table));
    for (const auto& t : targets)
        plan.tgt_seqs.push_back(coherence_input(derange_sentences(t, rng), table));

    // Positives first: (i, i). Then for each i the 2B-1 negatives:
    // mismatches (i, j), own derangement (i, B+i), combined (i, B+j).
    for (int i = 0; i < plan.B; ++i) plan.score_pairs.push_back({i, i});
    for (int i = 0; i < plan.B; ++i) {
        for (int j = 0; j < plan.B; ++j)
            if (j != i) plan.score_pairs.push_back({i, j});
        plan.score_pairs.push_back({i, plan.B + i});
        for (int j = 0; j < plan.B; ++j)
            if (j != i) plan.score_pairs.push_back({i, plan.B + j});
    }
    return plan;
}

template <class Real>
struct CohesionBatchPlan {
    std::vector<TensorT<Real>> src_seqs;  // B firsts
    std::vector<TensorT<Real>> tgt_seqs;  // 2B: next sentences then shuffled
    std::vector<std::pair<int, int>> score_pairs;
    int B = 0;
};

template <class Real>
CohesionBatchPlan<Real> plan_cohesion_batch(const std::vector<std::pair<Sentence, Sentence>>& pairs,
                                            const EmbeddingTableT<Real>& table, RngStream& rng) {
    CohesionBatchPlan<Real> plan;
    plan.B = static_cast<int>(pairs.size());
    for (const auto& p : pairs) plan.src_seqs.push_back(cohesion_input(p.first, table));
    for (const auto& p : pairs) plan.tgt_seqs.push_back(cohesion_input(p.second, table));
    for (const auto& p : pairs)
        plan.tgt_seqs.push_back(cohesion_input(shuffle_words(p.second, rng), table));
    for (int i = 0; i < plan.B; ++i) plan.score_pairs.push_back({i, i});
    for (int i = 0; i < plan.B; ++i) {
        for (int j = 0; j < plan.B; ++j)
            if (j != i) plan.score_pairs.push_back({i, j});
        plan.score_pairs.push_back({i, plan.B + i});
        for (int j = 0; j < plan.B; ++j)
            if (j != i) plan.score_pairs.push_back({i, plan.B + j});
    }
    return plan;
}

/// Mean ranking loss over the batch given scores laid out as in the plans:
/// B positives followed by B groups of 2B-1 negative scores.
template <class Real>
Var<Real> batch_ranking_loss(TapeT<Real>& tape, const std::vector<Var<Real>>& scores, int B,
                             Real delta, Real lambda) {
    std::vector<Var<Real>> losses;
    losses.reserve(static_cast<size_t>(B));
    const int group = 2 * B - 1;
    for (int i = 0; i < B; ++i) {
        std::vector<Var<Real>> negs(scores.begin() + B + i * group,
                                    scores.begin() + B + (i + 1) * group);
        losses.push_back(ranking_loss(tape, scores[static_cast<size_t>(i)], concat(tape, negs),
                                      delta, lambda));
    }
    return mean(tape, concat(tape, losses));
}

}  // namespace detail

// Recall evaluation --------------------------------------------------------

struct RecallConfig {
    int k = 1;
    int n_candidates = 100;
    int trials = 20;
    uint64_t seed = 0;
    int max_queries = 0;  // 0 = all
};

/// Rank the true target among itself plus n_candidates constructed
/// negatives; negatives reuse the training construction methods (roughly
/// half mismatches, one derangement of the truth, the rest combined).
/// Returns the mean over trials of the fraction of queries whose true
/// target lands in the top k.
template <class Real>
double coherence_recall_at_k(DualEncoderParamsT<Real>& d, const std::vector<Example>& eval_split,
                             const EmbeddingTableT<Real>& table, const RecallConfig& cfg) {
    const int n = static_cast<int>(eval_split.size());
    if (n < cfg.n_candidates + 1)
        throw std::invalid_argument("coherence_recall_at_k: eval split too small for candidate pool");
    const int n_queries = cfg.max_queries > 0 ? std::min(cfg.max_queries, n) : n;

    // Encode every source and every real target once (eval mode is pure).
    TapeT<Real> tape;
    tape.set_grad_enabled(false);
    std::vector<TensorT<Real>> src_feats(static_cast<size_t>(n_queries));
    std::vector<TensorT<Real>> tgt_feats(static_cast<size_t>(n));
    for (int i = 0; i < n_queries; ++i) {
        auto enc = encode_batch(tape, d.source_enc, {coherence_input(eval_split[static_cast<size_t>(i)].source, table)}, false);
        src_feats[static_cast<size_t>(i)] = enc[0]->value;
        tape.clear();
    }
    for (int i = 0; i < n; ++i) {
        auto enc = encode_batch(tape, d.target_enc, {coherence_input(eval_split[static_cast<size_t>(i)].target, table)}, false);
        tgt_feats[static_cast<size_t>(i)] = enc[0]->value;
        tape.clear();
    }
    auto cos_plain = [](const TensorT<Real>& a, const TensorT<Real>& b) {
        double ab = 0, aa = 0, bb = 0;
        for (int64_t i = 0; i < a.size(); ++i) {
            ab += static_cast<double>(a[i]) * b[i];
            aa += static_cast<double>(a[i]) * a[i];
            bb += static_cast<double>(b[i]) * b[i];
        }
        if (aa == 0 || bb == 0) return 0.0;
        return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
    };
    auto encode_target = [&](const TextChunk& c) {
        auto enc = encode_batch(tape, d.target_enc, {coherence_input(c, table)}, false);
        TensorT<Real> f = enc[0]->value;
        tape.clear();
        return f;
    };

    const int n_mismatch = cfg.n_candidates / 2;
    const int n_combined = cfg.n_candidates - n_mismatch - 1;
    double trial_acc = 0.0;
    for (int trial = 0; trial < cfg.trials; ++trial) {
        RngStream rng(cfg.seed, "recall.coherence." + std::to_string(trial));
        int hits = 0;
        for (int q = 0; q < n_queries; ++q) {
            std::vector<int> others;
            others.reserve(static_cast<size_t>(n - 1));
            for (int j = 0; j < n; ++j)
                if (j != q) others.push_back(j);
            rng.shuffle(others);

            const double true_score = cos_plain(src_feats[static_cast<size_t>(q)], tgt_feats[static_cast<size_t>(q)]);
            int better = 0;
            for (int m = 0; m < n_mismatch; ++m) {
                const double s = cos_plain(src_feats[static_cast<size_t>(q)], tgt_feats[static_cast<size_t>(others[static_cast<size_t>(m)])]);
                if (s > true_score) ++better;
            }
            {
                auto f = encode_target(derange_sentences(eval_split[static_cast<size_t>(q)].target, rng));
                if (cos_plain(src_feats[static_cast<size_t>(q)], f) > true_score) ++better;
            }
            for (int m = 0; m < n_combined; ++m) {
                const int j = others[static_cast<size_t>(n_mismatch + m)];
                auto f = encode_target(derange_sentences(eval_split[static_cast<size_t>(j)].target, rng));
                if (cos_plain(src_feats[static_cast<size_t>(q)], f) > true_score) ++better;
            }
            if (better < cfg.k) ++hits;
        }
        trial_acc += static_cast<double>(hits) / n_queries;
    }
    return trial_acc / cfg.trials;
}

template <class Real>
double cohesion_recall_at_k(DualEncoderParamsT<Real>& d,
                            const std::vector<std::pair<Sentence, Sentence>>& eval_pairs,
                            const EmbeddingTableT<Real>& table, const RecallConfig& cfg) {
    const int n = static_cast<int>(eval_pairs.size());
    if (n < cfg.n_candidates + 1)
        throw std::invalid_argument("cohesion_recall_at_k: eval split too small for candidate pool");
    const int n_queries = cfg.max_queries > 0 ? std::min(cfg.max_queries, n) : n;

    TapeT<Real> tape;
    tape.set_grad_enabled(false);
    std::vector<TensorT<Real>> src_feats(static_cast<size_t>(n_queries));
    std::vector<TensorT<Real>> tgt_feats(static_cast<size_t>(n));
    for (int i = 0; i < n_queries; ++i) {
        auto enc = encode_batch(tape, d.source_enc, {cohesion_input(eval_pairs[static_cast<size_t>(i)].first, table)}, false);
        src_feats[static_cast<size_t>(i)] = enc[0]->value;
        tape.clear();
    }
    for (int i = 0; i < n; ++i) {
        auto enc = encode_batch(tape, d.target_enc, {cohesion_input(eval_pairs[static_cast<size_t>(i)].second, table)}, false);
        tgt_feats[static_cast<size_t>(i)] = enc[0]->value;
        tape.clear();
    }
    auto cos_plain = [](const TensorT<Real>& a, const TensorT<Real>& b) {
        double ab = 0, aa = 0, bb = 0;
        for (int64_t i = 0; i < a.size(); ++i) {
            ab += static_cast<double>(a[i]) * b[i];
            aa += static_cast<double>(a[i]) * a[i];
            bb += static_cast<double>(b[i]) * b[i];
        }
        if (aa == 0 || bb == 0) return 0.0;
        return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
    };
    auto encode_next = [&](const Sentence& s) {
        auto enc = encode_batch(tape, d.target_enc, {cohesion_input(s, table)}, false);
        TensorT<Real> f = enc[0]->value;
        tape.clear();
        return f;
    };

    const int n_mismatch = cfg.n_candidates / 2;
    const int n_combined = cfg.n_candidates - n_mismatch - 1;
    double trial_acc = 0.0;
    for (int trial = 0; trial < cfg.trials; ++trial) {
        RngStream rng(cfg.seed, "recall.cohesion." + std::to_string(trial));
        int hits = 0;
        for (int q = 0; q < n_queries; ++q) {
            std::vector<int> others;
            others.reserve(static_cast<size_t>(n - 1));
            for (int j = 0; j < n; ++j)
                if (j != q) others.push_back(j);
            rng.shuffle(others);

            const double true_score = cos_plain(src_feats[static_cast<size_t>(q)], tgt_feats[static_cast<size_t>(q)]);
            int better = 0;
            for (int m = 0; m < n_mismatch; ++m)
                if (cos_plain(src_feats[static_cast<size_t>(q)], tgt_feats[static_cast<size_t>(others[static_cast<size_t>(m)])]) > true_score) ++better;
            {
                auto f = encode_next(shuffle_words(eval_pairs[static_cast<size_t>(q)].second, rng));
                if (cos_plain(src_feats[static_cast<size_t>(q)], f) > true_score) ++better;
            }
            for (int m = 0; m < n_combined; ++m) {
                const int j = others[static_cast<size_t>(n_mismatch + m)];
                auto f = encode_next(shuffle_words(eval_pairs[static_cast<size_t>(j)].second, rng));
                if (cos_plain(src_feats[static_cast<size_t>(q)], f) > true_score) ++better;
            }
            if (better < cfg.k) ++hits;
        }
        trial_acc += static_cast<double>(hits) / n_queries;
    }
    return trial_acc / cfg.trials;
}

// Trainer --------------------------------------------------------------------

/// One epoch shuffles the train examples, forms minibatches of B, scores
/// each positive against its 2B-1 constructed negatives and minimizes the
/// softmax-weighted margin ranking loss. The checkpoint with the best dev
/// R@1 is kept.
template <class Real>
DiscTrainResult train_discriminator(DualEncoderParamsT<Real>& d, const std::vector<Example>& train,
                                    const std::vector<Example>& dev,
                                    const EmbeddingTableT<Real>& table, const DiscTrainConfig& cfg,
                                    std::function<void(const EpochStats&)> on_epoch = {}) {
    if (train.empty() || dev.empty())
        throw std::invalid_argument("train_discriminator: empty split");
    if (cfg.batch_size < 2) throw std::invalid_argument("train_discriminator: batch size must be >= 2");

    auto params = d.params();
    AdamStateT<Real> opt(params, static_cast<Real>(cfg.lr));
    RngStream order_rng(cfg.seed, std::string("disc.order.") + disc_kind_name(d.kind));
    RngStream neg_rng(cfg.seed, std::string("disc.negatives.") + disc_kind_name(d.kind));

    std::vector<std::pair<Sentence, Sentence>> dev_pairs;
    if (d.kind == DiscKind::kCohesion)
        for (const auto& ex : dev)
            for (auto& p : decompose_pairs(ex.source, ex.target)) dev_pairs.push_back(std::move(p));

    DiscTrainResult result;
    std::vector<std::pair<std::string, TensorT<Real>>> best_snapshot;
    auto snapshot = [&] {
        best_snapshot.clear();
        for (auto& [name, t] : d.named_tensors()) best_snapshot.emplace_back(name, *t);
    };

    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double loss_acc = 0.0;
        int64_t n_batches = 0;
        TapeT<Real> tape;
        for (size_t start = 0; start + cfg.batch_size <= order.size(); start += cfg.batch_size) {
            tape.clear();
            Var<Real> loss = nullptr;
            const int B = cfg.batch_size;
            if (d.kind == DiscKind::kCoherence) {
                std::vector<const Example*> batch;
                for (int i = 0; i < B; ++i) batch.push_back(&train[static_cast<size_t>(order[start + static_cast<size_t>(i)])]);
                auto plan = detail::plan_coherence_batch(batch, table, neg_rng);
                auto scores = score_pairs(tape, d, plan.src_seqs, plan.tgt_seqs, plan.score_pairs, true);
                loss = detail::batch_ranking_loss(tape, scores, B, static_cast<Real>(cfg.delta),
                                                  static_cast<Real>(cfg.lambda));
            } else {
                // Decompose the B paragraphs and uniformly sample B pairs.
                std::vector<std::pair<Sentence, Sentence>> pool;
                for (int i = 0; i < B; ++i) {
                    const auto& ex = train[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
                    for (auto& p : decompose_pairs(ex.source, ex.target)) pool.push_back(std::move(p));
                }
                auto idx = neg_rng.sample_without_replacement(static_cast<int>(pool.size()), B);
                std::vector<std::pair<Sentence, Sentence>> pairs;
                pairs.reserve(static_cast<size_t>(B));
                for (int i : idx) pairs.push_back(pool[static_cast<size_t>(i)]);
                auto plan = detail::plan_cohesion_batch(pairs, table, neg_rng);
                auto scores = score_pairs(tape, d, plan.src_seqs, plan.tgt_seqs, plan.score_pairs, true);
                loss = detail::batch_ranking_loss(tape, scores, B, static_cast<Real>(cfg.delta),
                                                  static_cast<Real>(cfg.lambda));
            }
            const double loss_val = static_cast<double>(loss->value[0]);
            if (!std::isfinite(loss_val))
                throw NumericError("train_discriminator: non-finite loss (divergence)");
            loss_acc += loss_val;
            ++n_batches;
            tape.backward(loss);
            adam_step(params, opt);
            zero_grads(params);
        }

        RecallConfig rc;
        rc.k = 1;
        rc.n_candidates = cfg.dev_recall_candidates;
        rc.trials = cfg.dev_recall_trials;
        rc.seed = derive_seed(cfg.seed, "disc.devrecall");
        rc.max_queries = cfg.max_dev_queries;
        const double r1 = d.kind == DiscKind::kCoherence
                              ? coherence_recall_at_k(d, dev, table, rc)
                              : cohesion_recall_at_k(d, dev_pairs, table, rc);

        EpochStats st{epoch, n_batches ? loss_acc / n_batches : 0.0, r1};
        result.history.push_back(st);
        if (on_epoch) on_epoch(st);
        if (r1 > result.best_dev_r1 || result.best_epoch < 0) {
            result.best_dev_r1 = r1;
            result.best_epoch = epoch;
            snapshot();
        }
    }
    // Restore the checkpoint with the best dev R@1.
    if (!best_snapshot.empty()) {
        auto named = d.named_tensors();
        for (auto& [name, saved] : best_snapshot)
            for (auto& [n2, t] : named)
                if (n2 == name) *t = saved;
    }
    return result;
}

}  // namespace ncst
