// Python bindings over the core operations: tokenization, negative-pair
// construction, the ranking-loss math, reward arithmetic, and the automatic
// evaluation metrics.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ncst/discriminator.hpp"
#include "ncst/negatives.hpp"
#include "ncst/synth.hpp"
#include "ncst/text.hpp"
#include "ncst/textmetrics.hpp"
#include "ncst/vocab.hpp"

namespace py = pybind11;
using namespace pybind11::literals;

namespace {

ncst::Sentence sentence_from(const std::vector<std::string>& tokens) {
    ncst::Sentence s;
    s.surface = tokens;
    s.ids.reserve(tokens.size());
    // ordinal ids are enough for the operations exposed here
    for (size_t i = 0; i < tokens.size(); ++i) {
        int id = 0;
        for (char c : tokens[i]) id = id * 31 + static_cast<unsigned char>(c);
        s.ids.push_back(id & 0x7fffffff);
    }
    return s;
}

ncst::TextChunk chunk_from(const std::vector<std::vector<std::string>>& sentences) {
    ncst::TextChunk c;
    for (const auto& s : sentences) c.sentences.push_back(sentence_from(s));
    return c;
}

std::vector<std::vector<std::string>> chunk_to(const ncst::TextChunk& c) {
    std::vector<std::vector<std::string>> out;
    for (const auto& s : c.sentences) out.push_back(s.surface);
    return out;
}

double cosine_py(const std::vector<double>& a, const std::vector<double>& b) {
    ncst::TapeT<double> t;
    auto av = t.leaf(ncst::TensorT<double>::vec(std::vector<double>(a)));
    auto bv = t.leaf(ncst::TensorT<double>::vec(std::vector<double>(b)));
    return ncst::cosine(t, av, bv)->value[0];
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "coherence/cohesion sequence-training core operations";

    m.def("tokenize", &ncst::tokenize, "text"_a,
          "Lowercase, separate punctuation, split on whitespace.");
    m.def(
        "split_sentences",
        [](const std::string& text) { return ncst::split_sentences(ncst::tokenize(text)); },
        "text"_a, "Tokenize and group into sentences at terminal punctuation.");

    m.def("cosine", &cosine_py, "a"_a, "b"_a,
          "Cosine similarity, clamped to [-1, 1]; zero-norm inputs score 0.");
    m.def(
        "weighted_avg",
        [](const std::vector<double>& scores, double lam) { return ncst::weighted_avg(scores, lam); },
        "scores"_a, "lam"_a,
        "Softmax-weighted average: the mean at lam=0, approaching max as lam grows.");
    m.def(
        "ranking_loss",
        [](double positive, const std::vector<double>& negatives, double delta, double lam) {
            return ncst::ranking_loss(positive, negatives, delta, lam);
        },
        "positive"_a, "negatives"_a, "delta"_a, "lam"_a,
        "max(0, delta - positive + weighted_avg(negatives, lam))");

    m.def(
        "derangement",
        [](int n, uint64_t seed) {
            ncst::RngStream rng(seed, "py.derangement");
            return ncst::derangement(n, rng);
        },
        "n"_a, "seed"_a = 0, "Fixed-point-free permutation of range(n).");

    m.def(
        "make_negatives_coherence",
        [](const std::vector<std::vector<std::vector<std::string>>>& batch_targets, int index,
           uint64_t seed) {
            std::vector<ncst::TextChunk> targets;
            for (const auto& t : batch_targets) targets.push_back(chunk_from(t));
            ncst::RngStream rng(seed, "py.neg.coherence");
            auto negs = ncst::make_negatives_coherence(targets, index, rng);
            std::vector<std::pair<std::vector<std::vector<std::string>>, std::string>> out;
            for (const auto& e : negs.entries)
                out.emplace_back(chunk_to(e.item), ncst::neg_method_name(e.method));
            return out;
        },
        "batch_targets"_a, "index"_a, "seed"_a = 0,
        "The 2B-1 tagged negatives for one positive in a batch of target chunks.");

    m.def(
        "make_negatives_cohesion",
        [](const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>& pairs,
           int index, uint64_t seed) {
            std::vector<std::pair<ncst::Sentence, ncst::Sentence>> batch;
            for (const auto& [a, b] : pairs)
                batch.emplace_back(sentence_from(a), sentence_from(b));
            ncst::RngStream rng(seed, "py.neg.cohesion");
            auto negs = ncst::make_negatives_cohesion(batch, index, rng);
            std::vector<std::pair<std::vector<std::string>, std::string>> out;
            for (const auto& e : negs.entries)
                out.emplace_back(e.item.surface, ncst::neg_method_name(e.method));
            return out;
        },
        "pairs"_a, "index"_a, "seed"_a = 0,
        "The 2B-1 tagged negative next-sentences for one positive pair.");

    m.def(
        "decompose_pairs",
        [](const std::vector<std::vector<std::string>>& source,
           const std::vector<std::vector<std::string>>& target) {
            auto pairs = ncst::decompose_pairs(chunk_from(source), chunk_from(target));
            std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> out;
            for (const auto& [a, b] : pairs) out.emplace_back(a.surface, b.surface);
            return out;
        },
        "source"_a, "target"_a,
        "All consecutive sentence pairs of [source; target], junction included.");

    m.def(
        "bleu",
        [](const std::vector<std::vector<int>>& hyp, const std::vector<std::vector<int>>& ref,
           int n) { return ncst::bleu_n(hyp, ref, n); },
        "hypotheses"_a, "references"_a, "n"_a, "Corpus-level single-reference BLEU-n.");
    m.def("intra_unique", &ncst::intra_unique_n, "tokens"_a, "n"_a);
    m.def("inter_unique", &ncst::inter_unique_n, "texts"_a, "n"_a);
    m.def("length_ratio", &ncst::length_ratio, "generations"_a, "references"_a);

    m.def(
        "write_synthetic_corpus",
        [](const std::string& corpus_path, const std::string& embeddings_path, int n_reviews,
           int n_topics, int n_entities, int embed_dim, uint64_t seed) {
            ncst::SynthConfig cfg;
            cfg.n_reviews = n_reviews;
            cfg.n_topics = n_topics;
            cfg.n_entities = n_entities;
            cfg.embed_dim = embed_dim;
            cfg.seed = seed;
            ncst::write_synthetic_corpus(cfg, corpus_path, embeddings_path);
        },
        "corpus_path"_a, "embeddings_path"_a, "n_reviews"_a = 2400, "n_topics"_a = 12,
        "n_entities"_a = 150, "embed_dim"_a = 64, "seed"_a = 42,
        "Write the synthetic topic-keyed corpus and its embedding file.");

    m.attr("__version__") = "0.1.0";
}
