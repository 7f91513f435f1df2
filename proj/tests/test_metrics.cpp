#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ncst/rng.hpp"
#include "ncst/textmetrics.hpp"

using namespace ncst;

TEST_CASE("bleu_n") {
    SUBCASE("hypothesis == reference gives 1") {
        std::vector<int> x = {1, 2, 3, 4, 5, 6};
        for (int n = 1; n <= 5; ++n) CHECK(bleu_n(x, x, n) == doctest::Approx(1.0));
    }
    SUBCASE("disjoint vocabularies give 0") {
        CHECK(bleu_n({1, 2, 3}, {4, 5, 6}, 1) == 0.0);
        CHECK(bleu_n({1, 2, 3}, {4, 5, 6}, 3) == 0.0);
    }
    SUBCASE("hand-counted: hyp 'a b a', ref 'a b', n=1") {
        // clipped unigrams: a ->min(2,1)=1, b -> 1; total 3; hyp longer so BP=1
        CHECK(bleu_n({1, 2, 1}, {1, 2}, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    }
    SUBCASE("brevity penalty: shorter hypothesis") {
        // hyp 'a b', ref 'a b c d': p1=1, BP=exp(1-4/2)=e^-1
        CHECK(bleu_n({1, 2}, {1, 2, 3, 4}, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-9));
    }
    SUBCASE("corpus-level aggregation sums counts before dividing") {
        // pair 1: hyp 'a b', ref 'a b' (2/2); pair 2: hyp 'c c c', ref 'c' (1/3)
        // pooled p1 = 3/5; lengths 5 vs 3 -> BP=1
        std::vector<std::vector<int>> hyps = {{1, 2}, {3, 3, 3}};
        std::vector<std::vector<int>> refs = {{1, 2}, {3}};
        CHECK(bleu_n(hyps, refs, 1) == doctest::Approx(3.0 / 5.0).epsilon(1e-9));
    }
    SUBCASE("invariant to bijective token relabeling") {
        RngStream rng(5, "bleu.relabel");
        std::vector<int> hyp, ref;
        for (int i = 0; i < 20; ++i) hyp.push_back(rng.uniform_int(0, 9));
        for (int i = 0; i < 18; ++i) ref.push_back(rng.uniform_int(0, 9));
        auto relabel = [](const std::vector<int>& xs) {
            std::vector<int> out;
            for (int x : xs) out.push_back(1000 + 7 * x);
            return out;
        };
        for (int n = 1; n <= 4; ++n)
            CHECK(bleu_n(hyp, ref, n) == doctest::Approx(bleu_n(relabel(hyp), relabel(ref), n)));
    }
    SUBCASE("empty hypothesis gives 0") {
        CHECK(bleu_n(std::vector<int>{}, {1, 2}, 2) == 0.0);
    }
}

TEST_CASE("intra_unique_n") {
    CHECK(intra_unique_n({1, 2, 3, 4}, 1) == doctest::Approx(1.0));
    CHECK(intra_unique_n({7, 7, 7, 7}, 1) == doctest::Approx(0.25));
    // 'a b a b' bigrams: ab, ba, ab -> 2 distinct / 3
    CHECK(intra_unique_n({1, 2, 1, 2}, 2) == doctest::Approx(2.0 / 3.0));
    SUBCASE("short text scores 1.0 and bumps the diagnostic counter") {
        const int64_t before = intra_unique_short_text_count();
        CHECK(intra_unique_n({1}, 2) == 1.0);
        CHECK(intra_unique_short_text_count() == before + 1);
    }
    SUBCASE("equals 1 iff no repeated n-gram") {
        CHECK(intra_unique_n({1, 2, 3, 1}, 2) == doctest::Approx(1.0));
        CHECK(intra_unique_n({1, 2, 1, 2, 3}, 2) < 1.0);
    }
}

TEST_CASE("inter_unique_n") {
    SUBCASE("duplicating a generation halves the ratio") {
        std::vector<std::vector<int>> one = {{1, 2, 3, 4}};
        std::vector<std::vector<int>> two = {{1, 2, 3, 4}, {1, 2, 3, 4}};
        CHECK(inter_unique_n(two, 2) == doctest::Approx(inter_unique_n(one, 2) / 2.0));
    }
    SUBCASE("pairwise disjoint and internally unique gives 1") {
        std::vector<std::vector<int>> texts = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
        CHECK(inter_unique_n(texts, 2) == doctest::Approx(1.0));
    }
    SUBCASE("hand-enumerated small corpus") {
        // texts: [a b c], [b c d]; bigrams: ab, bc | bc, cd -> 3 distinct / 4
        std::vector<std::vector<int>> texts = {{1, 2, 3}, {2, 3, 4}};
        CHECK(inter_unique_n(texts, 2) == doctest::Approx(3.0 / 4.0).epsilon(1e-9));
    }
    SUBCASE("union with itself never increases the ratio") {
        RngStream rng(11, "inter.prop");
        for (int it = 0; it < 20; ++it) {
            std::vector<std::vector<int>> corpus;
            const int m = rng.uniform_int(1, 5);
            for (int i = 0; i < m; ++i) {
                std::vector<int> t;
                const int len = rng.uniform_int(2, 8);
                for (int j = 0; j < len; ++j) t.push_back(rng.uniform_int(0, 4));
                corpus.push_back(t);
            }
            auto doubled = corpus;
            for (const auto& t : corpus) doubled.push_back(t);
            CHECK(inter_unique_n(doubled, 2) <= inter_unique_n(corpus, 2) + 1e-12);
        }
    }
}

TEST_CASE("length_ratio") {
    SUBCASE("identical lists give 1") {
        std::vector<std::vector<int>> xs = {{1, 2, 3}, {4, 5}};
        CHECK(length_ratio(xs, xs) == doctest::Approx(1.0));
    }
    SUBCASE("half-length generations give 0.5") {
        std::vector<std::vector<int>> gen = {{1}, {2, 3}};
        std::vector<std::vector<int>> ref = {{1, 9}, {2, 3, 8, 7}};
        CHECK(length_ratio(gen, ref) == doctest::Approx(0.5));
    }
    SUBCASE("zero-length references are excluded") {
        std::vector<std::vector<int>> gen = {{1, 2}, {3}};
        std::vector<std::vector<int>> ref = {{}, {3}};
        CHECK(length_ratio(gen, ref) == doctest::Approx(1.0));
    }
}

TEST_CASE("metrics report") {
    std::vector<std::vector<int>> gens = {{1, 2, 3, 4, 5}, {2, 3, 4, 5, 6}};
    auto r = compute_metrics(0.86, gens, gens);
    CHECK(r.ppl == doctest::Approx(std::exp(0.86)).epsilon(1e-12));
    // the published convention check: e^0.86 ~ 2.363
    CHECK(r.ppl == doctest::Approx(2.363).epsilon(1e-3));
    CHECK(r.bleu.at(3) == doctest::Approx(1.0));
    CHECK(r.length_ratio == doctest::Approx(1.0));
    for (const auto& [n, v] : r.intra_unique) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}
