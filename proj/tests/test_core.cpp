#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "ncst/graph.hpp"
#include "ncst/nn.hpp"
#include "ncst/optim.hpp"
#include "ncst/rng.hpp"
#include "ncst/tensor.hpp"

using namespace ncst;

namespace {

ParamT<double> rand_param(const std::string& name, std::vector<int> shape, RngStream& rng,
                          double lo = -1.0, double hi = 1.0) {
    TensorT<double> t(std::move(shape));
    for (auto& e : t.v) e = rng.uniform(lo, hi);
    return ParamT<double>(name, std::move(t));
}

}  // namespace

TEST_CASE("backward: sum(x*x) gives 2x") {
    ParamT<double> x("x", TensorT<double>::vec({1, 2, 3}));
    TapeT<double> tape;
    auto xv = tape.param(x);
    auto loss = sum(tape, mul(tape, xv, xv));
    tape.backward(loss);
    CHECK(x.grad[0] == doctest::Approx(2.0));
    CHECK(x.grad[1] == doctest::Approx(4.0));
    CHECK(x.grad[2] == doctest::Approx(6.0));
}

TEST_CASE("backward: cosine(a,a) is constant, zero gradient") {
    ParamT<double> a("a", TensorT<double>::vec({0.3, -0.7, 1.1}));
    TapeT<double> tape;
    auto av = tape.param(a);
    auto loss = cosine(tape, av, av);
    CHECK(loss->value[0] == doctest::Approx(1.0));
    tape.backward(loss);
    for (int64_t i = 0; i < a.grad.size(); ++i) CHECK(a.grad[i] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("backward: x + x and 2x accumulate identical gradients") {
    ParamT<double> x1("x1", TensorT<double>::vec({0.5, -0.25}));
    ParamT<double> x2("x2", TensorT<double>::vec({0.5, -0.25}));
    {
        TapeT<double> tape;
        auto xv = tape.param(x1);
        tape.backward(sum(tape, mul(tape, add(tape, xv, xv), xv)));  // (x+x)·x = 2x²
    }
    {
        TapeT<double> tape;
        auto xv = tape.param(x2);
        tape.backward(sum(tape, mul(tape, scale(tape, xv, 2.0), xv)));
    }
    for (int64_t i = 0; i < x1.grad.size(); ++i) CHECK(x1.grad[i] == doctest::Approx(x2.grad[i]));
}

TEST_CASE("backward rejects non-scalar roots") {
    ParamT<double> x("x", TensorT<double>::vec({1, 2}));
    TapeT<double> tape;
    auto xv = tape.param(x);
    CHECK_THROWS_AS(tape.backward(xv), NumericError);
}

TEST_CASE("primitive gradients match finite differences") {
    RngStream rng(7, "gradcheck.primitives");

    SUBCASE("matvec + tanh + dot chain") {
        auto W = rand_param("W", {4, 3}, rng);
        auto x = rand_param("x", {3}, rng);
        auto y = rand_param("y", {4}, rng);
        auto forward = [&] {
            TapeT<double> t;
            return dot(t, tanh_op(t, matvec(t, t.param(W), t.param(x))), t.param(y))->value[0];
        };
        auto backward = [&] {
            TapeT<double> t;
            auto loss = dot(t, tanh_op(t, matvec(t, t.param(W), t.param(x))), t.param(y));
            t.backward(loss);
        };
        auto res = testing::finite_diff_check({&W, &x, &y}, forward, backward);
        CHECK_MESSAGE(res.ok(1e-4), res.worst, " rel err ", res.max_rel_err);
    }

    SUBCASE("softmax / log_softmax / pick") {
        auto z = rand_param("z", {6}, rng);
        auto forward = [&] {
            TapeT<double> t;
            auto p = softmax(t, t.param(z));
            auto lp = log_softmax(t, t.param(z));
            return add(t, pick(t, p, 2), pick(t, lp, 4))->value[0];
        };
        auto backward = [&] {
            TapeT<double> t;
            auto p = softmax(t, t.param(z));
            auto lp = log_softmax(t, t.param(z));
            t.backward(add(t, pick(t, p, 2), pick(t, lp, 4)));
        };
        auto res = testing::finite_diff_check({&z}, forward, backward);
        CHECK_MESSAGE(res.ok(1e-4), res.worst, " rel err ", res.max_rel_err);
    }

    SUBCASE("cosine") {
        auto a = rand_param("a", {5}, rng);
        auto b = rand_param("b", {5}, rng);
        auto forward = [&] {
            TapeT<double> t;
            return cosine(t, t.param(a), t.param(b))->value[0];
        };
        auto backward = [&] {
            TapeT<double> t;
            t.backward(cosine(t, t.param(a), t.param(b)));
        };
        auto res = testing::finite_diff_check({&a, &b}, forward, backward);
        CHECK_MESSAGE(res.ok(1e-4), res.worst, " rel err ", res.max_rel_err);
    }

    SUBCASE("slice / concat / vecmat") {
        auto E = rand_param("E", {4, 3}, rng);
        auto al = rand_param("al", {4}, rng);
        auto forward = [&] {
            TapeT<double> t;
            auto ctx = vecmat(t, softmax(t, t.param(al)), t.param(E));
            auto joined = concat(t, std::vector<Var<double>>{slice(t, ctx, 0, 2), slice(t, ctx, 1, 2)});
            return sum(t, mul(t, joined, joined))->value[0];
        };
        auto backward = [&] {
            TapeT<double> t;
            auto ctx = vecmat(t, softmax(t, t.param(al)), t.param(E));
            auto joined = concat(t, std::vector<Var<double>>{slice(t, ctx, 0, 2), slice(t, ctx, 1, 2)});
            t.backward(sum(t, mul(t, joined, joined)));
        };
        auto res = testing::finite_diff_check({&E, &al}, forward, backward);
        CHECK_MESSAGE(res.ok(1e-4), res.worst, " rel err ", res.max_rel_err);
    }
}

TEST_CASE("cosine basics") {
    TapeT<double> tape;
    auto a = tape.leaf(TensorT<double>::vec({1, 2, 2}));
    auto b = tape.leaf(TensorT<double>::vec({1, 2, 2}));
    CHECK(cosine(tape, a, b)->value[0] == doctest::Approx(1.0));

    auto c = tape.leaf(TensorT<double>::vec({1, 0, 0}));
    auto d = tape.leaf(TensorT<double>::vec({0, 1, 0}));
    CHECK(cosine(tape, c, d)->value[0] == doctest::Approx(0.0));

    auto e = tape.leaf(TensorT<double>::vec({-1, -2, -2}));
    CHECK(cosine(tape, a, e)->value[0] == doctest::Approx(-1.0));

    SUBCASE("symmetry on random vectors") {
        RngStream rng(3, "cosine.sym");
        for (int i = 0; i < 50; ++i) {
            TensorT<double> x({4}), y({4});
            for (auto& v : x.v) v = rng.uniform(-1, 1);
            for (auto& v : y.v) v = rng.uniform(-1, 1);
            auto xv = tape.leaf(x);
            auto yv = tape.leaf(y);
            CHECK(cosine(tape, xv, yv)->value[0] == doctest::Approx(cosine(tape, yv, xv)->value[0]));
        }
    }

    SUBCASE("zero-norm policy: score 0, diagnostic counter bumps") {
        const int64_t before = cosine_zero_norm_count();
        auto z = tape.leaf(TensorT<double>({3}));
        auto w = tape.leaf(TensorT<double>::vec({1, 2, 3}));
        CHECK(cosine(tape, z, w)->value[0] == 0.0);
        CHECK(cosine_zero_norm_count() == before + 1);
    }
}

TEST_CASE("gru_cell") {
    SUBCASE("all-zero params, h=0 -> h'=0 for any x") {
        RngStream rng(1, "gru.zero");
        GruCellParamsT<double> cell("gru", 3, 4, rng);
        for (auto* p : cell.params()) p->value.zero();
        TapeT<double> tape;
        auto cv = load_gru_cell(tape, cell);
        auto x = tape.leaf(TensorT<double>::vec({0.5, -1.0, 2.0}));
        auto h = tape.leaf(TensorT<double>({4}));
        auto hn = gru_cell(tape, cv, x, h);
        for (int i = 0; i < 4; ++i) CHECK(hn->value[i] == doctest::Approx(0.0));
    }

    SUBCASE("update gate forced to 0 -> h' ~ h") {
        RngStream rng(2, "gru.gate");
        GruCellParamsT<double> cell("gru", 3, 4, rng);
        // huge negative bias on the z half of the gate pre-activation
        for (int i = 0; i < 4; ++i) cell.bg.value[i] = -50.0;
        TapeT<double> tape;
        auto cv = load_gru_cell(tape, cell);
        auto x = tape.leaf(TensorT<double>::vec({0.1, 0.2, 0.3}));
        TensorT<double> h0 = TensorT<double>::vec({0.7, -0.4, 0.9, 0.05});
        auto h = tape.leaf(h0);
        auto hn = gru_cell(tape, cv, x, h);
        for (int i = 0; i < 4; ++i) CHECK(hn->value[i] == doctest::Approx(h0[i]).epsilon(1e-9));
    }

    SUBCASE("matches an independent scalar-by-scalar oracle") {
        RngStream rng(3, "gru.oracle");
        const int X = 3, H = 4;
        GruCellParamsT<double> cell("gru", X, H, rng);
        TensorT<double> x({X}), h({H});
        for (auto& e : x.v) e = rng.uniform(-1, 1);
        for (auto& e : h.v) e = rng.uniform(-1, 1);

        TapeT<double> tape;
        auto hn = gru_cell(tape, load_gru_cell(tape, cell), tape.leaf(x), tape.leaf(h));

        // Direct recomputation with plain scalar loops.
        auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
        for (int i = 0; i < H; ++i) {
            double zi = cell.bg.value[i], ri = cell.bg.value[H + i];
            for (int j = 0; j < X; ++j) {
                zi += cell.Wg.value.at(i, j) * x[j];
                ri += cell.Wg.value.at(H + i, j) * x[j];
            }
            for (int j = 0; j < H; ++j) {
                zi += cell.Ug.value.at(i, j) * h[j];
                ri += cell.Ug.value.at(H + i, j) * h[j];
            }
            const double z = sig(zi), r = sig(ri);
            double ci = cell.bc.value[i];
            for (int j = 0; j < X; ++j) ci += cell.Wc.value.at(i, j) * x[j];
            for (int j = 0; j < H; ++j) {
                // r gate is elementwise on h before the recurrent matmul
                double rj = cell.bg.value[H + j];
                for (int k = 0; k < X; ++k) rj += cell.Wg.value.at(H + j, k) * x[k];
                for (int k = 0; k < H; ++k) rj += cell.Ug.value.at(H + j, k) * h[k];
                ci += cell.Uc.value.at(i, j) * (sig(rj) * h[j]);
            }
            const double cand = std::tanh(ci);
            const double expected = (1.0 - z) * h[i] + z * cand;
            CHECK(hn->value[i] == doctest::Approx(expected).epsilon(1e-10));
            (void)r;
        }
    }

    SUBCASE("gradient matches finite differences") {
        RngStream rng(4, "gru.grad");
        GruCellParamsT<double> cell("gru", 3, 4, rng);
        auto x = rand_param("x", {3}, rng);
        auto h = rand_param("h", {4}, rng);
        auto run = [&](bool do_backward) {
            TapeT<double> t;
            auto hn = gru_cell(t, load_gru_cell(t, cell), t.param(x), t.param(h));
            auto loss = sum(t, mul(t, hn, hn));
            if (do_backward) t.backward(loss);
            return loss->value[0];
        };
        std::vector<ParamT<double>*> ps = cell.params();
        ps.push_back(&x);
        ps.push_back(&h);
        auto res = testing::finite_diff_check(ps, [&] { return run(false); }, [&] { run(true); });
        CHECK_MESSAGE(res.ok(1e-4), res.worst, " rel err ", res.max_rel_err);
    }
}

TEST_CASE("conv1d_maxpool") {
    RngStream rng(5, "conv");

    SUBCASE("constant sequence: pooled equals the single-window response") {
        const int d = 3, F = 2, w = 2, L = 5;
        auto W = rand_param("W", {F, w * d}, rng);
        auto b = rand_param("b", {F}, rng);
        TensorT<double> seq({L, d});
        for (int r = 0; r < L; ++r)
            for (int c = 0; c < d; ++c) seq.at(r, c) = 0.3 * (c + 1);
        TapeT<double> t;
        auto out = conv1d_maxpool(t, t.leaf(seq), t.param(W), t.param(b), w);
        for (int f = 0; f < F; ++f) {
            // every window is identical, so pooled = the first-window response
            double acc = b.value[f];
            for (int p = 0; p < w; ++p)
                for (int c = 0; c < d; ++c) acc += W.value.at(f, p * d + c) * seq.at(p, c);
            CHECK(out->value[f] == doctest::Approx(std::tanh(acc)));
        }
    }

    SUBCASE("width-1 identity-like filter pools max over time of tanh(linear)") {
        const int d = 2, L = 4;
        TensorT<double> Wt({1, d});
        Wt.at(0, 0) = 1.0;
        Wt.at(0, 1) = 0.0;
        ParamT<double> W("W", Wt);
        ParamT<double> b("b", TensorT<double>({1}));
        TensorT<double> seq({L, d});
        seq.at(0, 0) = -0.5;
        seq.at(1, 0) = 0.8;
        seq.at(2, 0) = 0.2;
        seq.at(3, 0) = -0.9;
        TapeT<double> t;
        auto out = conv1d_maxpool(t, t.leaf(seq), t.param(W), t.param(b), 1);
        CHECK(out->value[0] == doctest::Approx(std::tanh(0.8)));
    }

    SUBCASE("matches brute-force enumeration over all positions") {
        const int d = 4, F = 3, w = 3, L = 7;
        auto W = rand_param("W", {F, w * d}, rng);
        auto b = rand_param("b", {F}, rng);
        TensorT<double> seq({L, d});
        for (auto& e : seq.v) e = rng.uniform(-1, 1);
        TapeT<double> t;
        auto out = conv1d_maxpool(t, t.leaf(seq), t.param(W), t.param(b), w);
        for (int f = 0; f < F; ++f) {
            double best = -1e30;
            for (int p = 0; p + w <= L; ++p) {
                double acc = b.value[f];
                for (int q = 0; q < w; ++q)
                    for (int c = 0; c < d; ++c) acc += W.value.at(f, q * d + c) * seq.at(p + q, c);
                best = std::max(best, std::tanh(acc));
            }
            CHECK(out->value[f] == doctest::Approx(best));
        }
    }

    SUBCASE("empty sequence is rejected") {
        CHECK_THROWS(TensorT<double>({0, 3}));
    }

    SUBCASE("gradient matches finite differences") {
        const int d = 3, F = 2, w = 2, L = 5;
        auto W = rand_param("W", {F, w * d}, rng);
        auto b = rand_param("b", {F}, rng);
        auto S = rand_param("S", {L, d}, rng);
        auto run = [&](bool bw) {
            TapeT<double> t;
            auto out = conv1d_maxpool(t, t.param(S), t.param(W), t.param(b), w);
            auto loss = sum(t, mul(t, out, out));
            if (bw) t.backward(loss);
            return loss->value[0];
        };
        auto res = testing::finite_diff_check({&W, &b, &S}, [&] { return run(false); },
                                              [&] { run(true); });
        CHECK_MESSAGE(res.ok(1e-4), res.worst, " rel err ", res.max_rel_err);
    }
}

TEST_CASE("batch_norm") {
    SUBCASE("zero-variance batch, gamma=1, beta=0 -> outputs 0") {
        BatchNormParamsT<double> bn("bn", 3);
        TensorT<double> X({4, 3});
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 3; ++c) X.at(r, c) = 2.5;
        TapeT<double> t;
        auto out = batch_norm(t, t.leaf(X), bn, true);
        for (auto e : out->value.v) CHECK(e == doctest::Approx(0.0).epsilon(1e-6));
    }

    SUBCASE("gamma=0 -> outputs beta everywhere") {
        BatchNormParamsT<double> bn("bn", 2);
        bn.gamma.value.zero();
        bn.beta.value[0] = 0.7;
        bn.beta.value[1] = -0.2;
        TensorT<double> X({3, 2});
        RngStream rng(6, "bn");
        for (auto& e : X.v) e = rng.uniform(-2, 2);
        TapeT<double> t;
        auto out = batch_norm(t, t.leaf(X), bn, true);
        for (int r = 0; r < 3; ++r) {
            CHECK(out->value.at(r, 0) == doctest::Approx(0.7));
            CHECK(out->value.at(r, 1) == doctest::Approx(-0.2));
        }
    }

    SUBCASE("train mode: per-feature mean~0, variance~1") {
        BatchNormParamsT<double> bn("bn", 3);
        TensorT<double> X({16, 3});
        RngStream rng(7, "bn2");
        for (auto& e : X.v) e = rng.uniform(-3, 3);
        TapeT<double> t;
        auto out = batch_norm(t, t.leaf(X), bn, true);
        for (int c = 0; c < 3; ++c) {
            double m = 0;
            for (int r = 0; r < 16; ++r) m += out->value.at(r, c);
            m /= 16;
            double v = 0;
            for (int r = 0; r < 16; ++r) v += (out->value.at(r, c) - m) * (out->value.at(r, c) - m);
            v /= 16;
            CHECK(std::abs(m) < 1e-5);
            CHECK(std::abs(v - 1.0) < 1e-3);
        }
    }

    SUBCASE("eval mode uses running stats (pure per example)") {
        BatchNormParamsT<double> bn("bn", 2);
        RngStream rng(8, "bn3");
        // accumulate running stats over a few train batches
        for (int it = 0; it < 10; ++it) {
            TensorT<double> X({8, 2});
            for (auto& e : X.v) e = rng.uniform(-1, 3);
            TapeT<double> t;
            batch_norm(t, t.leaf(X), bn, true);
        }
        TensorT<double> probe({1, 2});
        probe.at(0, 0) = 0.4;
        probe.at(0, 1) = -1.1;
        TapeT<double> t;
        auto a = batch_norm(t, t.leaf(probe), bn, false);
        auto b = batch_norm(t, t.leaf(probe), bn, false);
        CHECK(a->value[0] == b->value[0]);
        CHECK(a->value[1] == b->value[1]);
    }

    SUBCASE("train-mode gradient matches finite differences") {
        RngStream rng(9, "bn4");
        auto X = rand_param("X", {5, 3}, rng);
        BatchNormParamsT<double> bn("bn", 3);
        for (auto& e : bn.gamma.value.v) e = rng.uniform(0.5, 1.5);
        for (auto& e : bn.beta.value.v) e = rng.uniform(-0.5, 0.5);
        auto run = [&](bool bw) {
            auto saved_mean = bn.running_mean;
            auto saved_var = bn.running_var;
            TapeT<double> t;
            auto out = batch_norm(t, t.param(X), bn, true);
            auto loss = sum(t, mul(t, out, out));
            if (bw) t.backward(loss);
            bn.running_mean = saved_mean;  // keep the oracle reruns independent
            bn.running_var = saved_var;
            return loss->value[0];
        };
        auto res = testing::finite_diff_check({&X, &bn.gamma, &bn.beta}, [&] { return run(false); },
                                              [&] { run(true); });
        CHECK_MESSAGE(res.ok(1e-4), res.worst, " rel err ", res.max_rel_err);
    }
}

TEST_CASE("adam") {
    SUBCASE("first step moves by ~lr*sign(g)") {
        ParamT<float> p("p", Tensor::vec({1.0f, -2.0f, 3.0f}));
        p.grad = Tensor::vec({0.5f, -0.1f, 2.0f});
        AdamStateT<float> st({&p}, 0.01f);
        adam_step<float>({&p}, st);
        CHECK(p.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-4));
        CHECK(p.value[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-4));
        CHECK(p.value[2] == doctest::Approx(3.0 - 0.01).epsilon(1e-4));
        CHECK(st.t == 1);
    }

    SUBCASE("zero gradients leave parameters unchanged") {
        ParamT<float> p("p", Tensor::vec({1.0f, -2.0f}));
        AdamStateT<float> st({&p}, 0.1f);
        for (int i = 0; i < 5; ++i) adam_step<float>({&p}, st);
        CHECK(p.value[0] == 1.0f);
        CHECK(p.value[1] == -2.0f);
    }

    SUBCASE("quadratic bowl: |x| decreases monotonically over 20 steps") {
        // start far enough from the minimum that 20 steps of ~lr each
        // cannot cross zero
        ParamT<double> x("x", TensorT<double>::vec({5.0}));
        AdamStateT<double> st({&x}, 0.1);
        double prev = std::abs(x.value[0]);
        for (int i = 0; i < 20; ++i) {
            x.grad[0] = 2.0 * x.value[0];  // d/dx x²
            adam_step<double>({&x}, st);
            x.zero_grad();
            const double cur = std::abs(x.value[0]);
            CHECK(cur < prev);
            prev = cur;
        }
    }

    SUBCASE("deterministic: identical inputs give bit-identical results") {
        auto run_once = [] {
            ParamT<float> p("p", Tensor::vec({0.3f, -0.8f, 0.12f}));
            AdamStateT<float> st({&p}, 0.05f);
            for (int i = 0; i < 10; ++i) {
                for (int64_t j = 0; j < p.grad.size(); ++j)
                    p.grad[j] = 0.1f * static_cast<float>(j + 1) * p.value[j];
                adam_step<float>({&p}, st);
                p.zero_grad();
            }
            return p.value;
        };
        auto a = run_once();
        auto b = run_once();
        for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
}

TEST_CASE("clip_global_norm") {
    SUBCASE("norm below the cap: unchanged") {
        ParamT<double> p("p", TensorT<double>::vec({0, 0}));
        p.grad = TensorT<double>::vec({0.3, 0.4});  // norm 0.5
        clip_global_norm<double>({&p}, 1.0);
        CHECK(p.grad[0] == 0.3);
        CHECK(p.grad[1] == 0.4);
    }

    SUBCASE("[3,4] clipped to max 1 becomes [0.6, 0.8]") {
        ParamT<double> p("p", TensorT<double>::vec({0, 0}));
        p.grad = TensorT<double>::vec({3, 4});
        clip_global_norm<double>({&p}, 1.0);
        CHECK(p.grad[0] == doctest::Approx(0.6));
        CHECK(p.grad[1] == doctest::Approx(0.8));
    }

    SUBCASE("post-clip norm <= max_norm + 1e-9 and clipping is idempotent") {
        RngStream rng(11, "clip");
        for (int it = 0; it < 100; ++it) {
            ParamT<double> a("a", TensorT<double>({3}));
            ParamT<double> b("b", TensorT<double>({2, 2}));
            for (auto& e : a.grad.v) e = rng.uniform(-5, 5);
            for (auto& e : b.grad.v) e = rng.uniform(-5, 5);
            clip_global_norm<double>({&a, &b}, 1.0);
            CHECK(global_grad_norm<double>({&a, &b}) <= 1.0 + 1e-9);
            auto a1 = a.grad, b1 = b.grad;
            clip_global_norm<double>({&a, &b}, 1.0);
            for (int64_t i = 0; i < a1.size(); ++i) CHECK(a.grad[i] == a1[i]);
            for (int64_t i = 0; i < b1.size(); ++i) CHECK(b.grad[i] == b1[i]);
        }
    }
}

TEST_CASE("tensor invariants") {
    CHECK_THROWS(TensorT<double>({2, -1}));
    TensorT<double> t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.all_finite());
    t[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
}
