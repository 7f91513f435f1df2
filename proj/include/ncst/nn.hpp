#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ncst/graph.hpp"
#include "ncst/rng.hpp"
#include "ncst/tensor.hpp"

namespace ncst {

template <class Real>
TensorT<Real> uniform_init(std::vector<int> shape, int fan_in, RngStream& rng) {
    TensorT<Real> t(std::move(shape));
    const double a = 1.0 / std::sqrt(std::max(1, fan_in));
    for (auto& e : t.v) e = static_cast<Real>(rng.uniform(-a, a));
    return t;
}

// ---------------------------------------------------------------------------
// GRU cell
// ---------------------------------------------------------------------------

/// Gate weights are fused ([z; r] rows), the candidate path is separate so
/// the reset gate can act on the recurrent term.
template <class Real>
struct GruCellParamsT {
    ParamT<Real> Wg, Ug, bg;  // [2H, X], [2H, H], [2H]
    ParamT<Real> Wc, Uc, bc;  // [H, X],  [H, H],  [H]
    int input_dim = 0, hidden_dim = 0;

    GruCellParamsT() = default;
    GruCellParamsT(const std::string& prefix, int x_dim, int h_dim, RngStream& rng)
        : Wg(prefix + ".Wg", uniform_init<Real>({2 * h_dim, x_dim}, x_dim, rng)),
          Ug(prefix + ".Ug", uniform_init<Real>({2 * h_dim, h_dim}, h_dim, rng)),
          bg(prefix + ".bg", TensorT<Real>({2 * h_dim})),
          Wc(prefix + ".Wc", uniform_init<Real>({h_dim, x_dim}, x_dim, rng)),
          Uc(prefix + ".Uc", uniform_init<Real>({h_dim, h_dim}, h_dim, rng)),
          bc(prefix + ".bc", TensorT<Real>({h_dim})),
          input_dim(x_dim),
          hidden_dim(h_dim) {}

    std::vector<ParamT<Real>*> params() { return {&Wg, &Ug, &bg, &Wc, &Uc, &bc}; }
};

template <class Real>
struct GruCellVarsT {
    Var<Real> Wg, Ug, bg, Wc, Uc, bc;
    int hidden_dim = 0;
};

template <class Real>
GruCellVarsT<Real> load_gru_cell(TapeT<Real>& t, GruCellParamsT<Real>& p) {
    return {t.param(p.Wg), t.param(p.Ug), t.param(p.bg),
            t.param(p.Wc), t.param(p.Uc), t.param(p.bc), p.hidden_dim};
}

/// Standard gated update: z,r = sigmoid, candidate = tanh,
/// h' = (1-z)∘h + z∘h̃. Fused into one node; the recurrent step is the hot
/// path of every model here.
template <class Real>
Var<Real> gru_cell(TapeT<Real>& t, const GruCellVarsT<Real>& c, Var<Real> x, Var<Real> h) {
    const int H = c.hidden_dim;
    const int X = static_cast<int>(x->value.size());
    if (h->value.size() != H) throw NumericError("gru_cell: state dimension mismatch");
    if (c.Wg->value.cols() != X) throw NumericError("gru_cell: input dimension mismatch");

    auto matvec_into = [](const TensorT<Real>& W, const Real* v, Real* out, int rows, int cols) {
        for (int i = 0; i < rows; ++i) {
            const Real* row = W.data() + static_cast<int64_t>(i) * cols;
            Real acc = 0;
            for (int j = 0; j < cols; ++j) acc += row[j] * v[j];
            out[i] += acc;
        }
    };

    TensorT<Real> zr = c.bg->value;  // [2H]
    matvec_into(c.Wg->value, x->value.data(), zr.data(), 2 * H, X);
    matvec_into(c.Ug->value, h->value.data(), zr.data(), 2 * H, H);
    for (auto& e : zr.v) e = Real(1) / (Real(1) + std::exp(-e));

    TensorT<Real> rh({H});
    for (int i = 0; i < H; ++i) rh[i] = zr[H + i] * h->value[i];
    TensorT<Real> cand = c.bc->value;  // [H]
    matvec_into(c.Wc->value, x->value.data(), cand.data(), H, X);
    matvec_into(c.Uc->value, rh.data(), cand.data(), H, H);
    for (auto& e : cand.v) e = std::tanh(e);

    TensorT<Real> out({H});
    for (int i = 0; i < H; ++i)
        out[i] = h->value[i] + zr[i] * (cand[i] - h->value[i]);

    auto Wg = c.Wg, Ug = c.Ug, bg = c.bg, Wc = c.Wc, Uc = c.Uc, bc = c.bc;
    return t.make(
        std::move(out), {x, h, Wg, Ug, bg, Wc, Uc, bc},
        [x, h, Wg, Ug, bg, Wc, Uc, bc, zr, cand, rh, H, X](NodeT<Real>& n) {
            auto& gx = x->ensure_grad();
            auto& gh = h->ensure_grad();
            auto& gWg = Wg->ensure_grad();
            auto& gUg = Ug->ensure_grad();
            auto& gbg = bg->ensure_grad();
            auto& gWc = Wc->ensure_grad();
            auto& gUc = Uc->ensure_grad();
            auto& gbc = bc->ensure_grad();

            // h' = h + z*(c - h)
            std::vector<Real> gac(static_cast<size_t>(H));   // d/d candidate preact
            std::vector<Real> gag(static_cast<size_t>(2 * H));  // d/d gate preact
            std::vector<Real> grh(static_cast<size_t>(H), Real(0));
            for (int i = 0; i < H; ++i) {
                const Real gout = n.grad[i];
                const Real z = zr[i];
                const Real gz = gout * (cand[i] - h->value[i]);
                const Real gc = gout * z;
                gh[i] += gout * (Real(1) - z);
                gac[static_cast<size_t>(i)] = gc * (Real(1) - cand[i] * cand[i]);
                gag[static_cast<size_t>(i)] = gz * z * (Real(1) - z);
            }
            // candidate path: ac = Wc x + Uc (r*h) + bc
            for (int i = 0; i < H; ++i) {
                const Real g = gac[static_cast<size_t>(i)];
                if (g == Real(0)) continue;
                gbc[i] += g;
                const Real* wrow = Wc->value.data() + static_cast<int64_t>(i) * X;
                Real* gwrow = gWc.data() + static_cast<int64_t>(i) * X;
                for (int j = 0; j < X; ++j) {
                    gwrow[j] += g * x->value[j];
                    gx[j] += g * wrow[j];
                }
                const Real* urow = Uc->value.data() + static_cast<int64_t>(i) * H;
                Real* gurow = gUc.data() + static_cast<int64_t>(i) * H;
                for (int j = 0; j < H; ++j) {
                    gurow[j] += g * rh[j];
                    grh[static_cast<size_t>(j)] += g * urow[j];
                }
            }
            for (int i = 0; i < H; ++i) {
                const Real r = zr[H + i];
                const Real gr = grh[static_cast<size_t>(i)] * h->value[i];
                gh[i] += grh[static_cast<size_t>(i)] * r;
                gag[static_cast<size_t>(H + i)] = gr * r * (Real(1) - r);
            }
            // gate path: ag = Wg x + Ug h + bg
            for (int i = 0; i < 2 * H; ++i) {
                const Real g = gag[static_cast<size_t>(i)];
                if (g == Real(0)) continue;
                gbg[i] += g;
                const Real* wrow = Wg->value.data() + static_cast<int64_t>(i) * X;
                Real* gwrow = gWg.data() + static_cast<int64_t>(i) * X;
                for (int j = 0; j < X; ++j) {
                    gwrow[j] += g * x->value[j];
                    gx[j] += g * wrow[j];
                }
                const Real* urow = Ug->value.data() + static_cast<int64_t>(i) * H;
                Real* gurow = gUg.data() + static_cast<int64_t>(i) * H;
                for (int j = 0; j < H; ++j) {
                    gurow[j] += g * h->value[j];
                    gh[j] += g * urow[j];
                }
            }
        },
        "gru_cell");
}

// ---------------------------------------------------------------------------
// 1-D convolution with max-over-time pooling
// ---------------------------------------------------------------------------

/// seq is a [L, d] matrix of token (or sentence) vectors. For each filter:
/// tanh of the response at every valid window position, then max over
/// positions. Caller pads seq to at least `width` rows beforehand.
template <class Real>
Var<Real> conv1d_maxpool(TapeT<Real>& t, Var<Real> seq, Var<Real> W, Var<Real> b, int width) {
    const int L = seq->value.rows(), d = seq->value.cols();
    const int F = W->value.rows();
    if (W->value.cols() != width * d) throw NumericError("conv1d_maxpool: filter width mismatch");
    if (L < width) throw NumericError("conv1d_maxpool: sequence shorter than filter");
    const int positions = L - width + 1;

    TensorT<Real> out({F});
    std::vector<int> argmax(static_cast<size_t>(F), 0);
    for (int f = 0; f < F; ++f) {
        const Real* wf = W->value.data() + static_cast<int64_t>(f) * width * d;
        Real best = -std::numeric_limits<Real>::infinity();
        int best_p = 0;
        for (int p = 0; p < positions; ++p) {
            const Real* win = seq->value.data() + static_cast<int64_t>(p) * d;
            Real acc = b->value[f];
            for (int k = 0; k < width * d; ++k) acc += wf[k] * win[k];
            const Real r = std::tanh(acc);
            if (r > best) {
                best = r;
                best_p = p;
            }
        }
        out[f] = best;
        argmax[static_cast<size_t>(f)] = best_p;
    }
    return t.make(std::move(out), {seq, W, b},
                  [seq, W, b, width, d, F, argmax](NodeT<Real>& n) {
                      auto& gseq = seq->ensure_grad();
                      auto& gW = W->ensure_grad();
                      auto& gb = b->ensure_grad();
                      for (int f = 0; f < F; ++f) {
                          const Real g = n.grad[f] * (Real(1) - n.value[f] * n.value[f]);
                          if (g == Real(0)) continue;
                          const int p = argmax[static_cast<size_t>(f)];
                          const Real* win = seq->value.data() + static_cast<int64_t>(p) * d;
                          const Real* wf = W->value.data() + static_cast<int64_t>(f) * width * d;
                          Real* gwf = gW.data() + static_cast<int64_t>(f) * width * d;
                          Real* gwin = gseq.data() + static_cast<int64_t>(p) * d;
                          for (int k = 0; k < width * d; ++k) {
                              gwf[k] += g * win[k];
                              gwin[k] += g * wf[k];
                          }
                          gb[f] += g;
                      }
                  },
                  "conv1d_maxpool");
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

template <class Real>
struct BatchNormParamsT {
    ParamT<Real> gamma, beta;
    TensorT<Real> running_mean, running_var;
    Real momentum = Real(0.1);
    Real eps = Real(1e-5);

    BatchNormParamsT() = default;
    BatchNormParamsT(const std::string& prefix, int features)
        : gamma(prefix + ".gamma", TensorT<Real>::full({features}, Real(1))),
          beta(prefix + ".beta", TensorT<Real>({features})),
          running_mean({features}),
          running_var(TensorT<Real>::full({features}, Real(1))) {}

    std::vector<ParamT<Real>*> params() { return {&gamma, &beta}; }
};

/// Train mode: normalize [N, F] by batch statistics (biased variance) and
/// update the running statistics. Eval mode keeps rewards and retrieval
/// scores a fixed function of the input.
template <class Real>
Var<Real> batch_norm(TapeT<Real>& t, Var<Real> X, BatchNormParamsT<Real>& bn, bool train_mode) {
    const int N = X->value.rows(), F = X->value.cols();
    Var<Real> gamma = t.param(bn.gamma);
    Var<Real> beta = t.param(bn.beta);

    TensorT<Real> mu({F}), var({F});
    if (train_mode) {
        for (int c = 0; c < F; ++c) {
            Real m = 0;
            for (int r = 0; r < N; ++r) m += X->value.at(r, c);
            m /= static_cast<Real>(N);
            Real v = 0;
            for (int r = 0; r < N; ++r) {
                const Real dd = X->value.at(r, c) - m;
                v += dd * dd;
            }
            v /= static_cast<Real>(N);
            mu[c] = m;
            var[c] = v;
            bn.running_mean[c] = (Real(1) - bn.momentum) * bn.running_mean[c] + bn.momentum * m;
            bn.running_var[c] = (Real(1) - bn.momentum) * bn.running_var[c] + bn.momentum * v;
        }
    } else {
        mu = bn.running_mean;
        var = bn.running_var;
    }

    TensorT<Real> xhat({N, F});
    TensorT<Real> out({N, F});
    TensorT<Real> istd({F});
    for (int c = 0; c < F; ++c) istd[c] = Real(1) / std::sqrt(var[c] + bn.eps);
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < F; ++c) {
            xhat.at(r, c) = (X->value.at(r, c) - mu[c]) * istd[c];
            out.at(r, c) = gamma->value[c] * xhat.at(r, c) + beta->value[c];
        }

    return t.make(std::move(out), {X, gamma, beta},
                  [X, gamma, beta, xhat, istd, N, F, train_mode](NodeT<Real>& n) {
                      auto& gX = X->ensure_grad();
                      auto& gG = gamma->ensure_grad();
                      auto& gB = beta->ensure_grad();
                      for (int c = 0; c < F; ++c) {
                          Real sum_dy = 0, sum_dy_xhat = 0;
                          for (int r = 0; r < N; ++r) {
                              const Real dy = n.grad.at(r, c);
                              sum_dy += dy;
                              sum_dy_xhat += dy * xhat.at(r, c);
                          }
                          gG[c] += sum_dy_xhat;
                          gB[c] += sum_dy;
                          if (train_mode) {
                              const Real invN = Real(1) / static_cast<Real>(N);
                              for (int r = 0; r < N; ++r) {
                                  const Real dy = n.grad.at(r, c);
                                  gX.at(r, c) += gamma->value[c] * istd[c] *
                                                 (dy - invN * sum_dy -
                                                  invN * xhat.at(r, c) * sum_dy_xhat);
                              }
                          } else {
                              for (int r = 0; r < N; ++r)
                                  gX.at(r, c) += gamma->value[c] * istd[c] * n.grad.at(r, c);
                          }
                      }
                  },
                  "batch_norm");
}

// ---------------------------------------------------------------------------
// Linear layer
// ---------------------------------------------------------------------------

template <class Real>
struct LinearParamsT {
    ParamT<Real> W, b;
    LinearParamsT() = default;
    LinearParamsT(const std::string& prefix, int out_dim, int in_dim, RngStream& rng)
        : W(prefix + ".W", uniform_init<Real>({out_dim, in_dim}, in_dim, rng)),
          b(prefix + ".b", TensorT<Real>({out_dim})) {}
    std::vector<ParamT<Real>*> params() { return {&W, &b}; }
};

template <class Real>
Var<Real> linear(TapeT<Real>& t, LinearParamsT<Real>& p, Var<Real> x) {
    return add(t, matvec(t, t.param(p.W), x), t.param(p.b));
}

}  // namespace ncst
