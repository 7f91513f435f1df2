#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ncst/embeddings.hpp"
#include "ncst/nn.hpp"
#include "ncst/optim.hpp"
#include "ncst/rng.hpp"
#include "ncst/text.hpp"
#include "ncst/vocab.hpp"

namespace ncst {

struct DecodeLimits {
    int max_sentences = 5;
    int max_tokens_per_sentence = 30;
    int max_total_tokens = 160;
};

/// Attention seq2seq policy: 2-layer bidirectional GRU encoder, 2-layer GRU
/// decoder with additive attention, output projection over the vocabulary.
/// The embedding table is shared and never updated.
template <class Real>
struct GeneratorParamsT {
    static constexpr int kLayers = 2;

    const EmbeddingTableT<Real>* table = nullptr;
    int hidden = 0;
    int vocab_size = 0;

    GruCellParamsT<Real> enc_fwd[kLayers], enc_bwd[kLayers];
    LinearParamsT<Real> bridge[kLayers];  // [2H] -> [H] per decoder layer
    GruCellParamsT<Real> dec[kLayers];
    ParamT<Real> attn_q, attn_k, attn_v;  // [H,H], [H,2H], [H]
    LinearParamsT<Real> combine;          // [H + 2H] -> [H]
    LinearParamsT<Real> out_proj;         // [H] -> [V]

    GeneratorParamsT() = default;
    GeneratorParamsT(const EmbeddingTableT<Real>& emb, int vocab, int hidden_dim, uint64_t seed)
        : table(&emb), hidden(hidden_dim), vocab_size(vocab) {
        RngStream rng(seed, "generator.init");
        const int d = emb.dim;
        for (int l = 0; l < kLayers; ++l) {
            const int in = l == 0 ? d : 2 * hidden;
            enc_fwd[l] = GruCellParamsT<Real>("gen.enc.fwd" + std::to_string(l), in, hidden, rng);
            enc_bwd[l] = GruCellParamsT<Real>("gen.enc.bwd" + std::to_string(l), in, hidden, rng);
            bridge[l] = LinearParamsT<Real>("gen.bridge" + std::to_string(l), hidden, 2 * hidden, rng);
            dec[l] = GruCellParamsT<Real>("gen.dec" + std::to_string(l), l == 0 ? d : hidden, hidden, rng);
        }
        attn_q = ParamT<Real>("gen.attn.q", uniform_init<Real>({hidden, hidden}, hidden, rng));
        attn_k = ParamT<Real>("gen.attn.k", uniform_init<Real>({hidden, 2 * hidden}, 2 * hidden, rng));
        attn_v = ParamT<Real>("gen.attn.v", uniform_init<Real>({hidden}, hidden, rng));
        combine = LinearParamsT<Real>("gen.combine", hidden, 3 * hidden, rng);
        out_proj = LinearParamsT<Real>("gen.out", vocab, hidden, rng);
    }

    std::vector<ParamT<Real>*> params() {
        std::vector<ParamT<Real>*> out;
        for (int l = 0; l < kLayers; ++l) {
            for (auto* p : enc_fwd[l].params()) out.push_back(p);
            for (auto* p : enc_bwd[l].params()) out.push_back(p);
            for (auto* p : bridge[l].params()) out.push_back(p);
            for (auto* p : dec[l].params()) out.push_back(p);
        }
        out.push_back(&attn_q);
        out.push_back(&attn_k);
        out.push_back(&attn_v);
        for (auto* p : combine.params()) out.push_back(p);
        for (auto* p : out_proj.params()) out.push_back(p);
        return out;
    }

    std::vector<std::pair<std::string, TensorT<Real>*>> named_tensors() {
        std::vector<std::pair<std::string, TensorT<Real>*>> out;
        for (auto* p : params()) out.emplace_back(p->name, &p->value);
        return out;
    }
};

// --- token stream serialization --------------------------------------------

/// Sentences joined with <sep>.
inline std::vector<int> serialize_source(const TextChunk& chunk) {
    std::vector<int> out;
    for (int i = 0; i < chunk.size(); ++i) {
        if (i) out.push_back(Vocab::kSentSep);
        for (int id : chunk.sentences[static_cast<size_t>(i)].ids) out.push_back(id);
    }
    return out;
}

/// <bos> sentences joined with <sep> <eos>.
inline std::vector<int> serialize_target(const TextChunk& chunk) {
    std::vector<int> out{Vocab::kBos};
    for (int i = 0; i < chunk.size(); ++i) {
        if (i) out.push_back(Vocab::kSentSep);
        for (int id : chunk.sentences[static_cast<size_t>(i)].ids) out.push_back(id);
    }
    out.push_back(Vocab::kEos);
    return out;
}

// --- attention --------------------------------------------------------------

/// e_s = v · tanh(K_s + q) for every key row; the tanh is recomputed in the
/// backward pass instead of saved.
template <class Real>
Var<Real> additive_attention_scores(TapeT<Real>& t, Var<Real> K, Var<Real> q, Var<Real> v) {
    const int L = K->value.rows(), A = K->value.cols();
    if (q->value.size() != A || v->value.size() != A)
        throw NumericError("additive_attention_scores: dimension mismatch");
    TensorT<Real> out({L});
    for (int s = 0; s < L; ++s) {
        Real acc = 0;
        const Real* krow = K->value.data() + static_cast<int64_t>(s) * A;
        for (int a = 0; a < A; ++a) acc += v->value[a] * std::tanh(krow[a] + q->value[a]);
        out[s] = acc;
    }
    return t.make(std::move(out), {K, q, v},
                  [K, q, v, L, A](NodeT<Real>& n) {
                      auto& gK = K->ensure_grad();
                      auto& gq = q->ensure_grad();
                      auto& gv = v->ensure_grad();
                      for (int s = 0; s < L; ++s) {
                          const Real ge = n.grad[s];
                          if (ge == Real(0)) continue;
                          const Real* krow = K->value.data() + static_cast<int64_t>(s) * A;
                          Real* gkrow = gK.data() + static_cast<int64_t>(s) * A;
                          for (int a = 0; a < A; ++a) {
                              const Real th = std::tanh(krow[a] + q->value[a]);
                              const Real d = v->value[a] * (Real(1) - th * th) * ge;
                              gkrow[a] += d;
                              gq[a] += d;
                              gv[a] += ge * th;
                          }
                      }
                  },
                  "attn_scores");
}

// --- encoder ----------------------------------------------------------------

template <class Real>
struct EncodedSourceT {
    Var<Real> states = nullptr;  // [L, 2H] contextual state per source position
    Var<Real> keys = nullptr;    // [L, H] precomputed attention keys
    std::vector<Var<Real>> dec_init;  // decoder initial state per layer
    int length = 0;
    // decoder parameters loaded once per graph
    std::vector<GruCellVarsT<Real>> dec_cells;
    Var<Real> attn_q = nullptr, attn_v = nullptr;
    Var<Real> combine_w = nullptr, combine_b = nullptr;
    Var<Real> out_w = nullptr, out_b = nullptr;
};

/// Bidirectional 2-layer GRU over the serialized source. One contextual
/// state per token position; decoder layers start from a learned linear map
/// of the concatenated final bidirectional states.
template <class Real>
EncodedSourceT<Real> encode_source(TapeT<Real>& t, GeneratorParamsT<Real>& g,
                                   const std::vector<int>& source_ids) {
    if (source_ids.empty()) throw NumericError("encode_source: empty source");
    const int L = static_cast<int>(source_ids.size());
    const int H = g.hidden;

    std::vector<Var<Real>> layer_in;
    layer_in.reserve(static_cast<size_t>(L));
    for (int i = 0; i < L; ++i)
        layer_in.push_back(t.leaf(TensorT<Real>::vec(g.table->row(source_ids[static_cast<size_t>(i)]))));

    EncodedSourceT<Real> enc;
    enc.length = L;
    std::vector<Var<Real>> states;
    for (int l = 0; l < GeneratorParamsT<Real>::kLayers; ++l) {
        auto fwd = load_gru_cell(t, g.enc_fwd[l]);
        auto bwd = load_gru_cell(t, g.enc_bwd[l]);
        std::vector<Var<Real>> hf(static_cast<size_t>(L)), hb(static_cast<size_t>(L));
        Var<Real> h = t.leaf(TensorT<Real>({H}));
        for (int i = 0; i < L; ++i) {
            h = gru_cell(t, fwd, layer_in[static_cast<size_t>(i)], h);
            hf[static_cast<size_t>(i)] = h;
        }
        Var<Real> hb_state = t.leaf(TensorT<Real>({H}));
        for (int i = L - 1; i >= 0; --i) {
            hb_state = gru_cell(t, bwd, layer_in[static_cast<size_t>(i)], hb_state);
            hb[static_cast<size_t>(i)] = hb_state;
        }
        states.clear();
        states.reserve(static_cast<size_t>(L));
        for (int i = 0; i < L; ++i)
            states.push_back(concat(t, std::vector<Var<Real>>{hf[static_cast<size_t>(i)], hb[static_cast<size_t>(i)]}));
        enc.dec_init.push_back(tanh_op(
            t, linear(t, g.bridge[l], concat(t, std::vector<Var<Real>>{hf[static_cast<size_t>(L - 1)], hb[0]}))));
        layer_in = states;
    }
    enc.states = stack_rows(t, states);
    // attention keys are fixed per source, so compute them once here
    std::vector<Var<Real>> key_rows;
    key_rows.reserve(static_cast<size_t>(L));
    Var<Real> Wk = t.param(g.attn_k);
    for (int i = 0; i < L; ++i) key_rows.push_back(matvec(t, Wk, states[static_cast<size_t>(i)]));
    enc.keys = stack_rows(t, key_rows);

    for (int l = 0; l < GeneratorParamsT<Real>::kLayers; ++l)
        enc.dec_cells.push_back(load_gru_cell(t, g.dec[l]));
    enc.attn_q = t.param(g.attn_q);
    enc.attn_v = t.param(g.attn_v);
    enc.combine_w = t.param(g.combine.W);
    enc.combine_b = t.param(g.combine.b);
    enc.out_w = t.param(g.out_proj.W);
    enc.out_b = t.param(g.out_proj.b);
    return enc;
}

// --- decoder ----------------------------------------------------------------

template <class Real>
struct DecoderStateT {
    std::vector<Var<Real>> h;  // one per layer
};

template <class Real>
struct DecodeStepT {
    Var<Real> logits = nullptr;
    Var<Real> attention = nullptr;  // weights over source positions
    DecoderStateT<Real> state;
};

/// One decoder step: embed the previous token, run the GRU stack, attend
/// over the encoder states with the top-layer query, combine and project.
template <class Real>
DecodeStepT<Real> decode_step(TapeT<Real>& t, GeneratorParamsT<Real>& g, int prev_token,
                              const DecoderStateT<Real>& state, const EncodedSourceT<Real>& enc) {
    DecodeStepT<Real> out;
    Var<Real> x = t.leaf(TensorT<Real>::vec(g.table->row(prev_token)));
    out.state.h.resize(GeneratorParamsT<Real>::kLayers);
    for (int l = 0; l < GeneratorParamsT<Real>::kLayers; ++l) {
        x = gru_cell(t, enc.dec_cells[static_cast<size_t>(l)], x, state.h[static_cast<size_t>(l)]);
        out.state.h[static_cast<size_t>(l)] = x;
    }
    Var<Real> q = matvec(t, enc.attn_q, x);
    Var<Real> scores = additive_attention_scores(t, enc.keys, q, enc.attn_v);
    out.attention = softmax(t, scores);
    Var<Real> context = vecmat(t, out.attention, enc.states);
    Var<Real> combined = tanh_op(
        t, add(t, matvec(t, enc.combine_w, concat(t, std::vector<Var<Real>>{x, context})),
               enc.combine_b));
    out.logits = add(t, matvec(t, enc.out_w, combined), enc.out_b);
    return out;
}

/// Teacher-forced per-step log-probabilities of a serialized target stream
/// (predicting positions 1..end given the stream's own prefix).
template <class Real>
std::vector<Var<Real>> stream_log_probs(TapeT<Real>& t, GeneratorParamsT<Real>& g,
                                        const EncodedSourceT<Real>& enc,
                                        const std::vector<int>& stream) {
    if (stream.size() < 2) throw NumericError("stream_log_probs: stream too short");
    DecoderStateT<Real> state{enc.dec_init};
    std::vector<Var<Real>> out;
    out.reserve(stream.size() - 1);
    for (size_t j = 0; j + 1 < stream.size(); ++j) {
        auto step = decode_step(t, g, stream[j], state, enc);
        state = step.state;
        out.push_back(pick(t, log_softmax(t, step.logits), stream[j + 1]));
    }
    return out;
}

/// Mean negative log-likelihood per target token (teacher forced, EOS
/// included in the token count).
template <class Real>
Var<Real> sequence_nll(TapeT<Real>& t, GeneratorParamsT<Real>& g, const TextChunk& source,
                       const TextChunk& target) {
    if (target.empty()) throw NumericError("sequence_nll: empty target");
    auto enc = encode_source(t, g, serialize_source(source));
    auto lps = stream_log_probs(t, g, enc, serialize_target(target));
    Var<Real> total = sum(t, concat(t, lps));
    return scale(t, total, Real(-1) / static_cast<Real>(lps.size()));
}

// --- decoding ---------------------------------------------------------------

namespace detail {
inline bool is_boundary_token(int id, const Vocab& vocab) {
    if (id == Vocab::kSentSep) return true;
    const std::string& tok = vocab.token(id);
    return tok == "." || tok == "!" || tok == "?";
}
}  // namespace detail

/// Splits a decoded token stream into sentences at <sep> or terminal
/// punctuation (terminal punctuation stays with its sentence, <sep> is
/// dropped); empty segments are dropped.
inline TextChunk segment_stream(const std::vector<int>& stream, const Vocab& vocab) {
    TextChunk out;
    Sentence cur;
    auto close = [&] {
        if (!cur.ids.empty()) out.sentences.push_back(std::move(cur));
        cur = Sentence{};
    };
    for (int id : stream) {
        if (id == Vocab::kBos || id == Vocab::kEos) continue;
        if (id == Vocab::kSentSep) {
            close();
            continue;
        }
        cur.ids.push_back(id);
        cur.surface.push_back(vocab.token(id));
        if (detail::is_boundary_token(id, vocab)) close();
    }
    close();
    return out;
}

struct DecodedSample {
    TextChunk chunk;
    std::vector<int> stream;    // raw emitted tokens, including <sep>/<eos>
    std::vector<double> logp;   // per emitted token, log pi(w_t | prefix)
};

namespace detail {

/// Shared greedy/sampling loop. pick_token chooses the next id from the
/// logits node; emission stops on <eos> or any decode limit.
template <class Real>
DecodedSample run_decode(GeneratorParamsT<Real>& g, const TextChunk& source, const Vocab& vocab,
                         const DecodeLimits& limits,
                         const std::function<std::pair<int, double>(Var<Real>, TapeT<Real>&)>& pick_token) {
    TapeT<Real> tape;
    tape.set_grad_enabled(false);
    auto enc = encode_source(tape, g, serialize_source(source));
    DecoderStateT<Real> state{enc.dec_init};

    DecodedSample out;
    int prev = Vocab::kBos;
    int sentences_done = 0;
    int cur_sentence_len = 0;
    while (static_cast<int>(out.stream.size()) < limits.max_total_tokens) {
        auto step = decode_step(tape, g, prev, state, enc);
        state = step.state;
        auto [id, lp] = pick_token(step.logits, tape);
        out.stream.push_back(id);
        out.logp.push_back(lp);
        if (id == Vocab::kEos) break;
        if (detail::is_boundary_token(id, vocab)) {
            ++sentences_done;
            cur_sentence_len = 0;
        } else if (++cur_sentence_len >= limits.max_tokens_per_sentence) {
            ++sentences_done;
            cur_sentence_len = 0;
        }
        if (sentences_done >= limits.max_sentences) break;
        prev = id;
    }
    out.chunk = segment_stream(out.stream, vocab);
    while (out.chunk.size() > limits.max_sentences) out.chunk.sentences.pop_back();
    return out;
}

}  // namespace detail

/// Argmax decoding (ties break to the lowest id, so decoding is a fixed
/// point of itself).
template <class Real>
TextChunk greedy_decode(GeneratorParamsT<Real>& g, const TextChunk& source, const Vocab& vocab,
                        const DecodeLimits& limits) {
    auto res = detail::run_decode<Real>(
        g, source, vocab, limits, [](Var<Real> logits, TapeT<Real>& t) {
            auto lp = log_softmax(t, logits);
            int best = 0;
            for (int64_t i = 1; i < lp->value.size(); ++i)
                if (lp->value[i] > lp->value[best]) best = static_cast<int>(i);
            return std::pair<int, double>(best, static_cast<double>(lp->value[best]));
        });
    return res.chunk;
}

/// Multinomial rollout; returns the chosen tokens' log-probabilities for
/// the policy-gradient update.
template <class Real>
DecodedSample sample_decode(GeneratorParamsT<Real>& g, const TextChunk& source, const Vocab& vocab,
                            const DecodeLimits& limits, RngStream& rng) {
    return detail::run_decode<Real>(
        g, source, vocab, limits, [&rng](Var<Real> logits, TapeT<Real>& t) {
            auto lp = log_softmax(t, logits);
            const double u = rng.uniform();
            double acc = 0.0;
            int chosen = static_cast<int>(lp->value.size()) - 1;
            for (int64_t i = 0; i < lp->value.size(); ++i) {
                acc += std::exp(static_cast<double>(lp->value[i]));
                if (u < acc) {
                    chosen = static_cast<int>(i);
                    break;
                }
            }
            return std::pair<int, double>(chosen, static_cast<double>(lp->value[chosen]));
        });
}

// --- MLE training -----------------------------------------------------------

struct GenTrainConfig {
    double lr = 2e-4;
    double clip_norm = 1.0;
    int epochs = 10;
    int batch_size = 8;
    uint64_t seed = 0;
    int patience = 0;  // 0: run all epochs; else stop after this many
                       // epochs without dev improvement
    bool verbose = false;
};

struct GenEpochStats {
    int epoch = 0;
    double train_nll = 0.0;
    double dev_nll = 0.0;
};

struct GenTrainResult {
    std::vector<GenEpochStats> history;
    int best_epoch = -1;
    double best_dev_nll = 0.0;
};

/// Token-weighted corpus NLL over a split.
template <class Real>
double corpus_nll(GeneratorParamsT<Real>& g, const std::vector<Example>& split) {
    TapeT<Real> tape;
    tape.set_grad_enabled(false);
    double total = 0.0;
    int64_t tokens = 0;
    for (const auto& ex : split) {
        auto enc = encode_source(tape, g, serialize_source(ex.source));
        auto lps = stream_log_probs(tape, g, enc, serialize_target(ex.target));
        for (auto* lp : lps) total -= static_cast<double>(lp->value[0]);
        tokens += static_cast<int64_t>(lps.size());
        tape.clear();
    }
    return tokens ? total / static_cast<double>(tokens) : 0.0;
}

/// Adam with global-norm clipping, teacher forcing, dev NLL tracked per
/// epoch and the best-dev checkpoint restored at the end.
template <class Real>
GenTrainResult train_mle(GeneratorParamsT<Real>& g, const std::vector<Example>& train,
                         const std::vector<Example>& dev, const GenTrainConfig& cfg,
                         std::function<void(const GenEpochStats&)> on_epoch = {}) {
    if (train.empty() || dev.empty()) throw NumericError("train_mle: empty split");
    auto params = g.params();
    AdamStateT<Real> opt(params, static_cast<Real>(cfg.lr));
    RngStream order_rng(cfg.seed, "gen.order");

    GenTrainResult result;
    std::vector<TensorT<Real>> best;
    auto snapshot = [&] {
        best.clear();
        for (auto* p : params) best.push_back(p->value);
    };

    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    int since_best = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double nll_acc = 0.0;
        int64_t n_batches = 0;
        TapeT<Real> tape;
        for (size_t start = 0; start + cfg.batch_size <= order.size();
             start += cfg.batch_size) {
            tape.clear();
            std::vector<Var<Real>> nlls;
            for (int i = 0; i < cfg.batch_size; ++i) {
                const auto& ex = train[static_cast<size_t>(order[start + static_cast<size_t>(i)])];
                nlls.push_back(sequence_nll(tape, g, ex.source, ex.target));
            }
            Var<Real> loss = mean(tape, concat(tape, nlls));
            const double loss_val = static_cast<double>(loss->value[0]);
            if (!std::isfinite(loss_val)) throw NumericError("train_mle: non-finite loss");
            nll_acc += loss_val;
            ++n_batches;
            tape.backward(loss);
            clip_global_norm(params, cfg.clip_norm);
            adam_step(params, opt);
            zero_grads(params);
        }

        const double dev_nll = corpus_nll(g, dev);
        GenEpochStats st{epoch, n_batches ? nll_acc / n_batches : 0.0, dev_nll};
        result.history.push_back(st);
        if (on_epoch) on_epoch(st);
        if (result.best_epoch < 0 || dev_nll < result.best_dev_nll) {
            result.best_dev_nll = dev_nll;
            result.best_epoch = epoch;
            snapshot();
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }
    if (!best.empty())
        for (size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
    return result;
}

}  // namespace ncst
