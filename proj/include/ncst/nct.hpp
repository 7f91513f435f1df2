#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ncst/discriminator.hpp"
#include "ncst/generator.hpp"
#include "ncst/negatives.hpp"
#include "ncst/optim.hpp"
#include "ncst/rng.hpp"

namespace ncst {

/// Per-example rewards with their negative-ensemble baselines, itemized.
struct RewardReport {
    double coherence_raw = 0.0;
    double coherence_baseline = 0.0;
    double cohesion_raw_mean = 0.0;
    double cohesion_baseline = 0.0;
    double r_coherence = 0.0;
    double r_cohesion = 0.0;
    double r_total = 0.0;
};

struct RewardWeights {
    double coherence = 0.5;
    double cohesion = 0.5;
};

inline double combined_reward(double r_coherence, double r_cohesion, const RewardWeights& w) {
    const bool degenerate = w.coherence == 0.0 && w.cohesion == 0.0;
    if (!degenerate && std::abs(w.coherence + w.cohesion - 1.0) > 1e-9)
        throw std::invalid_argument("combined_reward: weights must sum to 1");
    return w.coherence * r_coherence + w.cohesion * r_cohesion;
}

struct RLConfig {
    double gamma = 1.0;  // episodic end-of-sequence reward; must stay 1
    double lr = 1e-5;
    int max_epochs = 5;
    int batch_size = 8;
    RewardWeights weights;
    std::string mixing = "alternate";
    double clip_norm = 1.0;
    DecodeLimits limits;
    uint64_t seed = 0;
    int max_dev_examples = 0;  // 0: all

    void validate() const {
        if (gamma != 1.0) throw std::invalid_argument("RLConfig: gamma must be 1.0");
        const bool degenerate = weights.coherence == 0.0 && weights.cohesion == 0.0;
        if (!degenerate && std::abs(weights.coherence + weights.cohesion - 1.0) > 1e-9)
            throw std::invalid_argument("RLConfig: reward weights must sum to 1");
        if (mixing != "alternate" && mixing != "none")
            throw std::invalid_argument("RLConfig: unknown mixing rule '" + mixing + "'");
    }
};

/// One sampled generation with its end-of-episode reward. gamma = 1 and a
/// single terminal reward, so the return at every step is r_total.
struct Episode {
    const Example* example = nullptr;
    DecodedSample sample;
    RewardReport reward;
};

inline int64_t& degenerate_generation_count() {
    static int64_t count = 0;
    return count;
}

// ---------------------------------------------------------------------------
// Reward scoring (frozen discriminators, eval-mode batch norm)
// ---------------------------------------------------------------------------

template <class Real>
class RewardScorerT {
  public:
    RewardScorerT(DualEncoderParamsT<Real>& coherence, DualEncoderParamsT<Real>& cohesion,
                  const EmbeddingTableT<Real>& table)
        : coherence_(coherence), cohesion_(cohesion), table_(table) {}

    TensorT<Real> coherence_src(const TextChunk& c) {
        return encode_eval(coherence_.source_enc, coherence_input(c, table_));
    }
    TensorT<Real> coherence_tgt(const TextChunk& c) {
        return encode_eval(coherence_.target_enc, coherence_input(c, table_));
    }
    TensorT<Real> cohesion_src(const Sentence& s) {
        return encode_eval(cohesion_.source_enc, cohesion_input(s, table_));
    }
    TensorT<Real> cohesion_tgt(const Sentence& s) {
        return encode_eval(cohesion_.target_enc, cohesion_input(s, table_));
    }

    static double cos(const TensorT<Real>& a, const TensorT<Real>& b) {
        double ab = 0, aa = 0, bb = 0;
        for (int64_t i = 0; i < a.size(); ++i) {
            ab += static_cast<double>(a[i]) * b[i];
            aa += static_cast<double>(a[i]) * a[i];
            bb += static_cast<double>(b[i]) * b[i];
        }
        if (aa == 0 || bb == 0) return 0.0;
        return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
    }

    double cohesion_pair(const Sentence& a, const Sentence& b) {
        return cos(cohesion_src(a), cohesion_tgt(b));
    }

    const EmbeddingTableT<Real>& table() const { return table_; }

  private:
    TensorT<Real> encode_eval(SeqEncoderParamsT<Real>& enc, const TensorT<Real>& seq) {
        TapeT<Real> tape;
        tape.set_grad_enabled(false);
        auto out = encode_batch(tape, enc, {seq}, /*train_mode=*/false);
        return out[0]->value;
    }

    DualEncoderParamsT<Real>& coherence_;
    DualEncoderParamsT<Real>& cohesion_;
    const EmbeddingTableT<Real>& table_;
};

/// R_coherence = D(S, T_gen) - mean_j D(S, T~_j). The baseline is the plain
/// mean over the ensemble, not the softmax-weighted mean used in training.
template <class Real>
RewardReport reward_coherence(RewardScorerT<Real>& scorer, const TextChunk& S,
                              const TextChunk& T_gen, const std::vector<TextChunk>& negatives) {
    if (negatives.empty()) throw std::invalid_argument("reward_coherence: empty ensemble");
    RewardReport r;
    const auto fs = scorer.coherence_src(S);
    r.coherence_raw = RewardScorerT<Real>::cos(fs, scorer.coherence_tgt(T_gen));
    double acc = 0.0;
    for (const auto& neg : negatives) acc += RewardScorerT<Real>::cos(fs, scorer.coherence_tgt(neg));
    r.coherence_baseline = acc / static_cast<double>(negatives.size());
    r.r_coherence = r.coherence_raw - r.coherence_baseline;
    return r;
}

/// Mean cohesion over the consecutive pairs of [S_-1; T_gen] (the pair
/// count equals |T_gen|), minus the mean over the negative ensemble of
/// (real s_k, constructed s~_{k+1}) scores.
template <class Real>
RewardReport reward_cohesion(RewardScorerT<Real>& scorer, const Sentence& source_last,
                             const TextChunk& T_gen,
                             const std::vector<std::pair<Sentence, Sentence>>& negative_pairs) {
    RewardReport r;
    if (T_gen.empty()) {
        ++degenerate_generation_count();
        r.cohesion_raw_mean = -1.0;
        r.r_cohesion = -1.0;
        return r;
    }
    if (negative_pairs.empty()) throw std::invalid_argument("reward_cohesion: empty ensemble");
    double acc = 0.0;
    const Sentence* prev = &source_last;
    for (const auto& s : T_gen.sentences) {
        acc += scorer.cohesion_pair(*prev, s);
        prev = &s;
    }
    r.cohesion_raw_mean = acc / static_cast<double>(T_gen.size());
    double base = 0.0;
    for (const auto& [sk, neg] : negative_pairs) base += scorer.cohesion_pair(sk, neg);
    r.cohesion_baseline = base / static_cast<double>(negative_pairs.size());
    r.r_cohesion = r.cohesion_raw_mean - r.cohesion_baseline;
    return r;
}

namespace detail {

/// Sentence-order derangement when possible, word shuffle for single-
/// sentence chunks; the fallback keeps reward scoring total.
inline TextChunk scramble_chunk(const TextChunk& c, RngStream& rng) {
    if (c.size() >= 2) return derange_sentences(c, rng);
    TextChunk out = c;
    if (c.size() == 1 && c.sentences[0].ids.size() >= 2)
        out.sentences[0] = shuffle_words(c.sentences[0], rng);
    return out;
}

}  // namespace detail

/// Itemized minibatch rewards. Coherence ensembles apply the in-batch
/// construction to the generated targets (rotations of the other rollouts,
/// a derangement of one's own); cohesion ensembles are built against real
/// consecutive pairs drawn from the minibatch's [S; T].
template <class Real>
void score_episode_batch(RewardScorerT<Real>& scorer, std::vector<Episode>& episodes,
                         const RewardWeights& weights, RngStream& rng) {
    const int B = static_cast<int>(episodes.size());
    if (B < 2) throw std::invalid_argument("score_episode_batch: need at least 2 episodes");

    // --- coherence: shared encodings over generated targets --------------
    std::vector<TensorT<Real>> f(static_cast<size_t>(B));
    std::vector<TensorT<Real>> g(static_cast<size_t>(B)), gd(static_cast<size_t>(B));
    std::vector<bool> empty_gen(static_cast<size_t>(B), false);
    for (int i = 0; i < B; ++i) {
        f[static_cast<size_t>(i)] = scorer.coherence_src(episodes[static_cast<size_t>(i)].example->source);
        const TextChunk& tg = episodes[static_cast<size_t>(i)].sample.chunk;
        if (tg.empty()) {
            empty_gen[static_cast<size_t>(i)] = true;
            continue;
        }
        g[static_cast<size_t>(i)] = scorer.coherence_tgt(tg);
        gd[static_cast<size_t>(i)] = scorer.coherence_tgt(detail::scramble_chunk(tg, rng));
    }
    for (int i = 0; i < B; ++i) {
        auto& ep = episodes[static_cast<size_t>(i)];
        if (empty_gen[static_cast<size_t>(i)]) {
            ++degenerate_generation_count();
            ep.reward.coherence_raw = -1.0;
            ep.reward.r_coherence = -1.0;
        } else {
            ep.reward.coherence_raw = RewardScorerT<Real>::cos(f[static_cast<size_t>(i)], g[static_cast<size_t>(i)]);
            double acc = 0.0;
            int n = 0;
            for (int j = 0; j < B; ++j) {
                if (j == i || empty_gen[static_cast<size_t>(j)]) continue;
                acc += RewardScorerT<Real>::cos(f[static_cast<size_t>(i)], g[static_cast<size_t>(j)]);
                ++n;
            }
            acc += RewardScorerT<Real>::cos(f[static_cast<size_t>(i)], gd[static_cast<size_t>(i)]);
            ++n;
            for (int j = 0; j < B; ++j) {
                if (j == i || empty_gen[static_cast<size_t>(j)]) continue;
                acc += RewardScorerT<Real>::cos(f[static_cast<size_t>(i)], gd[static_cast<size_t>(j)]);
                ++n;
            }
            ep.reward.coherence_baseline = acc / n;
            ep.reward.r_coherence = ep.reward.coherence_raw - ep.reward.coherence_baseline;
        }
    }

    // --- cohesion ---------------------------------------------------------
    // One real pair per batch example, then the standard 2B-1 construction.
    std::vector<std::pair<Sentence, Sentence>> real_pairs;
    real_pairs.reserve(static_cast<size_t>(B));
    for (int i = 0; i < B; ++i) {
        const auto* ex = episodes[static_cast<size_t>(i)].example;
        auto pairs = decompose_pairs(ex->source, ex->target);
        real_pairs.push_back(pairs[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pairs.size()) - 1))]);
    }
    for (int i = 0; i < B; ++i) {
        auto& ep = episodes[static_cast<size_t>(i)];
        auto negs = make_negatives_cohesion(real_pairs, i, rng);
        std::vector<std::pair<Sentence, Sentence>> neg_pairs;
        neg_pairs.reserve(negs.entries.size());
        for (auto& e : negs.entries)
            neg_pairs.emplace_back(real_pairs[static_cast<size_t>(i)].first, std::move(e.item));
        const RewardReport coh = reward_cohesion(scorer, ep.example->source.sentences.back(),
                                                 ep.sample.chunk, neg_pairs);
        ep.reward.cohesion_raw_mean = coh.cohesion_raw_mean;
        ep.reward.cohesion_baseline = coh.cohesion_baseline;
        ep.reward.r_cohesion = coh.r_cohesion;
        ep.reward.r_total = combined_reward(ep.reward.r_coherence, ep.reward.r_cohesion, weights);
    }
}

// ---------------------------------------------------------------------------
// REINFORCE
// ---------------------------------------------------------------------------

/// RL loss = -mean_i r_total_i * sum_t log pi(w_t | w_<t, S); the reward is
/// a constant, so gradients flow only through the generator's log-probs.
/// When every reward is exactly zero the update is skipped outright (the
/// gradient is identically zero).
template <class Real>
void reinforce_update(std::vector<Episode>& episodes, GeneratorParamsT<Real>& g,
                      AdamStateT<Real>& opt, double clip_norm) {
    bool any_reward = false;
    for (const auto& ep : episodes)
        if (ep.reward.r_total != 0.0) any_reward = true;
    if (!any_reward) return;

    auto params = g.params();
    TapeT<Real> tape;
    std::vector<Var<Real>> terms;
    terms.reserve(episodes.size());
    for (auto& ep : episodes) {
        if (ep.sample.stream.empty()) continue;
        std::vector<int> stream{Vocab::kBos};
        for (int id : ep.sample.stream) stream.push_back(id);
        auto enc = encode_source(tape, g, serialize_source(ep.example->source));
        auto lps = stream_log_probs(tape, g, enc, stream);
        Var<Real> sum_lp = sum(tape, concat(tape, lps));
        terms.push_back(scale(tape, sum_lp, static_cast<Real>(-ep.reward.r_total)));
    }
    if (terms.empty()) return;
    Var<Real> loss = scale(tape, sum(tape, concat(tape, terms)),
                           Real(1) / static_cast<Real>(episodes.size()));
    if (!std::isfinite(static_cast<double>(loss->value[0])))
        throw NumericError("reinforce_update: non-finite loss");
    tape.backward(loss);
    clip_global_norm(params, clip_norm);
    adam_step(params, opt);
    zero_grads(params);
}

// ---------------------------------------------------------------------------
// Fine-tuning driver
// ---------------------------------------------------------------------------

struct FinetuneEpochStats {
    int epoch = 0;  // 0 is the pre-fine-tuning state
    double mean_r_total = 0.0;
    double mean_r_coherence = 0.0;
    double mean_r_cohesion = 0.0;
    double dev_ppl = 0.0;
};

struct FinetuneResult {
    std::vector<FinetuneEpochStats> history;
    bool diverged = false;
};

/// Greedy-decodes the dev split and scores rewards with the same in-batch
/// ensemble protocol as training.
template <class Real>
FinetuneEpochStats eval_dev_rewards(GeneratorParamsT<Real>& g, RewardScorerT<Real>& scorer,
                                    const std::vector<Example>& dev, const Vocab& vocab,
                                    const RLConfig& cfg, int epoch) {
    FinetuneEpochStats st;
    st.epoch = epoch;
    const int n = cfg.max_dev_examples > 0
                      ? std::min<int>(cfg.max_dev_examples, static_cast<int>(dev.size()))
                      : static_cast<int>(dev.size());
    RngStream rng(cfg.seed, "rl.dev." + std::to_string(epoch));
    int counted = 0;
    for (int start = 0; start + cfg.batch_size <= n; start += cfg.batch_size) {
        std::vector<Episode> eps;
        for (int i = 0; i < cfg.batch_size; ++i) {
            Episode ep;
            ep.example = &dev[static_cast<size_t>(start + i)];
            ep.sample.chunk = greedy_decode(g, ep.example->source, vocab, cfg.limits);
            eps.push_back(std::move(ep));
        }
        score_episode_batch(scorer, eps, cfg.weights, rng);
        for (const auto& ep : eps) {
            st.mean_r_total += ep.reward.r_total;
            st.mean_r_coherence += ep.reward.r_coherence;
            st.mean_r_cohesion += ep.reward.r_cohesion;
            ++counted;
        }
    }
    if (counted) {
        st.mean_r_total /= counted;
        st.mean_r_coherence /= counted;
        st.mean_r_cohesion /= counted;
    }
    std::vector<Example> dev_head(dev.begin(), dev.begin() + n);
    st.dev_ppl = std::exp(corpus_nll(g, dev_head));
    return st;
}

/// Negative-critical sequence training: sample rollouts, score them with
/// the frozen discriminators against constructed-negative baselines, apply
/// REINFORCE, and alternate teacher-forced MLE minibatches to constrain the
/// policy. Divergence restores the last completed epoch's parameters.
template <class Real>
FinetuneResult finetune(GeneratorParamsT<Real>& g, DualEncoderParamsT<Real>& d_coherence,
                        DualEncoderParamsT<Real>& d_cohesion, const std::vector<Example>& train,
                        const std::vector<Example>& dev, const Vocab& vocab, const RLConfig& cfg,
                        std::function<void(const FinetuneEpochStats&)> on_epoch = {}) {
    cfg.validate();
    if (train.empty() || dev.empty()) throw std::invalid_argument("finetune: empty split");

    RewardScorerT<Real> scorer(d_coherence, d_cohesion, *g.table);
    auto params = g.params();
    AdamStateT<Real> rl_opt(params, static_cast<Real>(cfg.lr));
    AdamStateT<Real> mle_opt(params, static_cast<Real>(cfg.lr));
    RngStream order_rng(cfg.seed, "rl.order");
    RngStream sample_rng(cfg.seed, "rl.sample");
    RngStream ensemble_rng(cfg.seed, "rl.ensemble");

    FinetuneResult result;
    result.history.push_back(eval_dev_rewards(g, scorer, dev, vocab, cfg, 0));
    if (on_epoch) on_epoch(result.history.back());

    std::vector<TensorT<Real>> last_good;
    auto snapshot = [&] {
        last_good.clear();
        for (auto* p : params) last_good.push_back(p->value);
    };
    snapshot();

    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        order_rng.shuffle(order);
        try {
            bool rl_turn = true;
            for (size_t start = 0; start + cfg.batch_size <= order.size();
                 start += cfg.batch_size) {
                const int B = cfg.batch_size;
                if (rl_turn) {
                    std::vector<Episode> eps;
                    eps.reserve(static_cast<size_t>(B));
                    for (int i = 0; i < B; ++i) {
                        Episode ep;
                        ep.example = &train[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
                        ep.sample = sample_decode(g, ep.example->source, vocab, cfg.limits, sample_rng);
                        eps.push_back(std::move(ep));
                    }
                    score_episode_batch(scorer, eps, cfg.weights, ensemble_rng);
                    reinforce_update(eps, g, rl_opt, cfg.clip_norm);
                } else {
                    TapeT<Real> tape;
                    std::vector<Var<Real>> nlls;
                    for (int i = 0; i < B; ++i) {
                        const auto& ex = train[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
                        nlls.push_back(sequence_nll(tape, g, ex.source, ex.target));
                    }
                    Var<Real> loss = mean(tape, concat(tape, nlls));
                    if (!std::isfinite(static_cast<double>(loss->value[0])))
                        throw NumericError("finetune: non-finite MLE loss");
                    tape.backward(loss);
                    clip_global_norm(params, cfg.clip_norm);
                    adam_step(params, mle_opt);
                    zero_grads(params);
                }
                if (cfg.mixing == "alternate") rl_turn = !rl_turn;
            }
        } catch (const NumericError&) {
            for (size_t i = 0; i < params.size(); ++i) params[i]->value = last_good[i];
            result.diverged = true;
            break;
        }
        result.history.push_back(eval_dev_rewards(g, scorer, dev, vocab, cfg, epoch));
        if (on_epoch) on_epoch(result.history.back());
        snapshot();
    }
    return result;
}

// ---------------------------------------------------------------------------
// Itemized score report (one coherence value per chunk pair, one cohesion
// value per adjacent sentence pair of [S; T])
// ---------------------------------------------------------------------------

struct ScoreReport {
    double coherence = 0.0;
    std::vector<double> cohesion_per_pair;
    double cohesion_mean = 0.0;
};

template <class Real>
ScoreReport score_report(RewardScorerT<Real>& scorer, const TextChunk& S, const TextChunk& T) {
    ScoreReport r;
    r.coherence = RewardScorerT<Real>::cos(scorer.coherence_src(S), scorer.coherence_tgt(T));
    for (const auto& [a, b] : decompose_pairs(S, T))
        r.cohesion_per_pair.push_back(scorer.cohesion_pair(a, b));
    double acc = 0.0;
    for (double v : r.cohesion_per_pair) acc += v;
    r.cohesion_mean = r.cohesion_per_pair.empty()
                          ? 0.0
                          : acc / static_cast<double>(r.cohesion_per_pair.size());
    return r;
}

}  // namespace ncst
