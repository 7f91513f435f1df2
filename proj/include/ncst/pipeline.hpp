#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncst/checkpoint.hpp"
#include "ncst/config.hpp"
#include "ncst/corpus.hpp"
#include "ncst/dataio.hpp"
#include "ncst/discriminator.hpp"
#include "ncst/generator.hpp"
#include "ncst/nct.hpp"
#include "ncst/synth.hpp"
#include "ncst/textmetrics.hpp"

namespace ncst {

/// File layout under the output directory.
struct RunPaths {
    std::string out;
    explicit RunPaths(const RunConfig& cfg) : out(cfg.out_dir()) {}

    std::string data_dir(const RunConfig& cfg) const { return cfg.data_dir(); }
    std::string vocab(const RunConfig& cfg) const { return cfg.data_dir() + "/vocab.txt"; }
    std::string dataset(const RunConfig& cfg, const std::string& split) const {
        return cfg.data_dir() + "/" + split + ".jsonl";
    }
    std::string models_dir() const { return out + "/models"; }
    std::string disc_ckpt(DiscKind k) const {
        return models_dir() + "/disc_" + disc_kind_name(k) + ".ckpt";
    }
    std::string gen_mle_ckpt() const { return models_dir() + "/generator_mle.ckpt"; }
    std::string gen_rl_ckpt() const { return models_dir() + "/generator_rl.ckpt"; }
    std::string logs_dir() const { return out + "/logs"; }
    std::string gen_dir() const { return out + "/gen"; }
    std::string score_dir() const { return out + "/score"; }
    std::string eval_dir() const { return out + "/eval"; }
};

inline void store_resolved_config(const RunConfig& cfg, const std::string& dir,
                                  const std::string& command) {
    ensure_dir(dir);
    std::ofstream out(dir + "/" + command + "_config.txt");
    out << cfg.dump();
}

// --- corpus-side commands (precision independent) ---------------------------

inline void cmd_synth_corpus(const RunConfig& cfg) {
    SynthConfig sc;
    sc.n_reviews = cfg.get_int("synth.reviews");
    sc.n_topics = cfg.get_int("synth.topics");
    sc.n_entities = cfg.get_int("synth.entities");
    sc.embed_dim = cfg.get_int("synth.embed_dim");
    sc.seed = derive_seed(cfg.get_u64("global.seed"), "synth");
    const std::string corpus = cfg.corpus_path();
    const std::string emb = cfg.embeddings_path();
    ensure_dir(std::filesystem::path(corpus).parent_path().string());
    ensure_dir(std::filesystem::path(emb).parent_path().string());
    write_synthetic_corpus(sc, corpus, emb);
    store_resolved_config(cfg, RunPaths(cfg).logs_dir(), "synth-corpus");
    std::cout << "wrote " << corpus << " (" << sc.n_reviews << " reviews) and " << emb << "\n";
}

inline void cmd_preprocess(const RunConfig& cfg) {
    RunPaths paths(cfg);
    CorpusFilter filter;
    filter.min_sentences = cfg.get_int("corpus.min_sentences");
    filter.min_sentence_tokens = cfg.get_int("corpus.min_sentence_tokens");
    filter.max_sentence_tokens = cfg.get_int("corpus.max_sentence_tokens");

    IngestStats stats;
    auto reviews = ingest(cfg.corpus_path(), cfg.get("paths.corpus_format"), &stats, filter);
    if (reviews.empty()) throw DataError("preprocess: no reviews retained from " + cfg.corpus_path());

    auto splits = split(reviews, cfg.get_doubles("corpus.split_ratios"),
                        derive_seed(cfg.get_u64("global.seed"), "split"));
    auto vocab = build_vocab(splits.train, cfg.get_int("corpus.vocab_size"));

    ensure_dir(cfg.data_dir());
    vocab.save(paths.vocab(cfg));
    write_dataset(paths.dataset(cfg, "train"), make_examples(splits.train, vocab));
    write_dataset(paths.dataset(cfg, "dev"), make_examples(splits.dev, vocab));
    write_dataset(paths.dataset(cfg, "test"), make_examples(splits.test, vocab));
    store_resolved_config(cfg, paths.logs_dir(), "preprocess");

    nlohmann::json rec;
    rec["retained"] = stats.retained;
    rec["malformed"] = stats.malformed;
    rec["dropped_too_few_sentences"] = stats.dropped_too_few_sentences;
    rec["dropped_bad_sentence_length"] = stats.dropped_bad_sentence_length;
    rec["train"] = splits.train.size();
    rec["dev"] = splits.dev.size();
    rec["test"] = splits.test.size();
    rec["vocab"] = vocab.regular_size();
    std::cout << rec.dump() << "\n";
}

// --- precision-templated pipeline -------------------------------------------

template <class Real>
struct PipelineT {
    RunConfig cfg;
    RunPaths paths;
    Vocab vocab;
    EmbeddingTableT<Real> table;

    explicit PipelineT(const RunConfig& c) : cfg(c), paths(c) {
        vocab = Vocab::load(paths.vocab(cfg));
        table = load_embeddings<Real>(cfg.embeddings_path(), vocab, cfg.get_int("embed.dim"));
    }

    std::vector<Example> load_split(const std::string& name) const {
        return load_dataset(paths.dataset(cfg, name), vocab);
    }

    EncoderSpec disc_spec(DiscKind kind) const {
        EncoderSpec spec;
        spec.kind = encoder_kind_from(cfg.get(kind == DiscKind::kCoherence
                                                  ? "disc.coherence.encoder"
                                                  : "disc.cohesion.encoder"));
        spec.filter_widths = kind == DiscKind::kCoherence ? std::vector<int>{2, 3, 4, 5}
                                                          : std::vector<int>{3, 4, 5, 6};
        spec.filters = cfg.get_int("disc.filters");
        spec.hidden = cfg.get_int("disc.hidden");
        spec.feature_dim = cfg.get_int("disc.feature_dim");
        return spec;
    }

    DiscTrainConfig disc_train_config() const {
        DiscTrainConfig tc;
        tc.lambda = cfg.get_double("disc.lambda");
        tc.delta = cfg.get_double("disc.delta");
        tc.lr = cfg.get_double("disc.lr");
        tc.epochs = cfg.get_int("disc.epochs");
        tc.batch_size = cfg.get_int("disc.batch_size");
        tc.seed = cfg.get_u64("global.seed");
        tc.dev_recall_trials = cfg.get_int("disc.dev_recall_trials");
        tc.max_dev_queries = cfg.get_int("disc.max_dev_queries");
        return tc;
    }

    DecodeLimits decode_limits() const {
        DecodeLimits lim;
        lim.max_sentences = cfg.get_int("gen.max_sentences");
        lim.max_tokens_per_sentence = cfg.get_int("gen.max_tokens_per_sentence");
        lim.max_total_tokens = cfg.get_int("gen.max_total_tokens");
        return lim;
    }

    nlohmann::json base_meta(const std::string& model) const {
        nlohmann::json meta;
        meta["model"] = model;
        meta["embed_dim"] = table.dim;
        meta["vocab_hash"] = ckpt::hash_hex(vocab.hash());
        return meta;
    }

    void save_disc(DualEncoderParamsT<Real>& d, const std::string& path) const {
        auto meta = base_meta("discriminator");
        meta["kind"] = disc_kind_name(d.kind);
        meta["encoder"] = encoder_kind_name(d.source_enc.spec.kind);
        meta["feature_dim"] = d.source_enc.spec.feature_dim;
        std::vector<std::pair<std::string, const TensorT<Real>*>> tensors;
        for (auto& [name, t] : d.named_tensors()) tensors.emplace_back(name, t);
        ckpt::save<Real>(path, meta, tensors);
    }

    DualEncoderParamsT<Real> load_disc(DiscKind kind, const std::string& path) const {
        DualEncoderParamsT<Real> d(kind, disc_spec(kind), table.dim, 0);
        ckpt::load<Real>(path, d.named_tensors(), vocab.hash());
        return d;
    }

    void save_gen(GeneratorParamsT<Real>& g, const std::string& path,
                  const std::string& stage) const {
        auto meta = base_meta("generator");
        meta["stage"] = stage;
        meta["hidden"] = g.hidden;
        std::vector<std::pair<std::string, const TensorT<Real>*>> tensors;
        for (auto& [name, t] : g.named_tensors()) tensors.emplace_back(name, t);
        ckpt::save<Real>(path, meta, tensors);
    }

    GeneratorParamsT<Real> load_gen(const std::string& path) const {
        GeneratorParamsT<Real> g(table, vocab.size(), cfg.get_int("gen.hidden"),
                                 cfg.get_u64("global.seed"));
        ckpt::load<Real>(path, g.named_tensors(), vocab.hash());
        return g;
    }

    /// Picks the fine-tuned generator when present, the MLE one otherwise.
    std::string default_gen_ckpt() const {
        if (std::filesystem::exists(paths.gen_rl_ckpt())) return paths.gen_rl_ckpt();
        return paths.gen_mle_ckpt();
    }

    void train_disc(DiscKind kind) {
        auto train = load_split("train");
        auto dev = load_split("dev");
        DualEncoderParamsT<Real> d(kind, disc_spec(kind), table.dim, cfg.get_u64("global.seed"));
        RunLogger log(paths.logs_dir(), std::string("train_disc_") + disc_kind_name(kind));
        auto result = train_discriminator<Real>(d, train, dev, table, disc_train_config(),
                                                [&](const EpochStats& st) {
                                                    nlohmann::json rec;
                                                    rec["epoch"] = st.epoch;
                                                    rec["train_loss"] = st.train_loss;
                                                    rec["dev_r_at_1"] = st.dev_r_at_1;
                                                    log.record(rec);
                                                });
        ensure_dir(paths.models_dir());
        save_disc(d, paths.disc_ckpt(kind));
        log.summary("best epoch " + std::to_string(result.best_epoch) + " dev R@1 " +
                    std::to_string(result.best_dev_r1));
        store_resolved_config(cfg, paths.logs_dir(), std::string("train_disc_") + disc_kind_name(kind));
    }

    void train_gen() {
        auto train = load_split("train");
        auto dev = load_split("dev");
        GeneratorParamsT<Real> g(table, vocab.size(), cfg.get_int("gen.hidden"),
                                 cfg.get_u64("global.seed"));
        GenTrainConfig tc;
        tc.lr = cfg.get_double("gen.lr");
        tc.clip_norm = cfg.get_double("gen.clip_norm");
        tc.epochs = cfg.get_int("gen.epochs");
        tc.batch_size = cfg.get_int("gen.batch_size");
        tc.patience = cfg.get_int("gen.patience");
        tc.seed = cfg.get_u64("global.seed");
        RunLogger log(paths.logs_dir(), "train_gen");
        auto result = train_mle<Real>(g, train, dev, tc, [&](const GenEpochStats& st) {
            nlohmann::json rec;
            rec["epoch"] = st.epoch;
            rec["train_nll"] = st.train_nll;
            rec["dev_nll"] = st.dev_nll;
            rec["dev_ppl"] = std::exp(st.dev_nll);
            log.record(rec);
        });
        ensure_dir(paths.models_dir());
        save_gen(g, paths.gen_mle_ckpt(), "mle");
        log.summary("best epoch " + std::to_string(result.best_epoch) + " dev NLL " +
                    std::to_string(result.best_dev_nll));
        store_resolved_config(cfg, paths.logs_dir(), "train_gen");
    }

    RLConfig rl_config() const {
        RLConfig rc;
        rc.gamma = cfg.get_double("rl.gamma");
        rc.lr = cfg.get_double("rl.lr");
        rc.max_epochs = cfg.get_int("rl.epochs");
        rc.batch_size = cfg.get_int("rl.batch_size");
        rc.weights.coherence = cfg.get_double("rl.weight_coherence");
        rc.weights.cohesion = cfg.get_double("rl.weight_cohesion");
        rc.mixing = cfg.get("rl.mixing");
        rc.clip_norm = cfg.get_double("gen.clip_norm");
        rc.limits = decode_limits();
        rc.seed = cfg.get_u64("global.seed");
        return rc;
    }

    void finetune_rl() {
        auto train = load_split("train");
        auto dev = load_split("dev");
        auto g = load_gen(paths.gen_mle_ckpt());
        auto d_coh = load_disc(DiscKind::kCoherence, paths.disc_ckpt(DiscKind::kCoherence));
        auto d_cohesion = load_disc(DiscKind::kCohesion, paths.disc_ckpt(DiscKind::kCohesion));
        RunLogger log(paths.logs_dir(), "finetune_rl");
        auto result =
            finetune<Real>(g, d_coh, d_cohesion, train, dev, vocab, rl_config(),
                           [&](const FinetuneEpochStats& st) {
                               nlohmann::json rec;
                               rec["epoch"] = st.epoch;
                               rec["mean_R_total"] = st.mean_r_total;
                               rec["mean_R_coherence"] = st.mean_r_coherence;
                               rec["mean_R_cohesion"] = st.mean_r_cohesion;
                               rec["dev_ppl"] = st.dev_ppl;
                               log.record(rec);
                           });
        if (result.diverged) {
            log.summary("diverged; last-good checkpoint retained");
            throw NumericError("finetune-rl: training diverged");
        }
        ensure_dir(paths.models_dir());
        save_gen(g, paths.gen_rl_ckpt(), "rl");
        store_resolved_config(cfg, paths.logs_dir(), "finetune_rl");
    }

    void generate(const std::string& ckpt_path, const std::string& input,
                  const std::string& output) {
        auto g = load_gen(ckpt_path);
        auto examples = load_dataset(input, vocab);
        const DecodeLimits limits = decode_limits();
        std::vector<Generation> gens;
        gens.reserve(examples.size());
        for (const auto& ex : examples) {
            auto chunk = greedy_decode(g, ex.source, vocab, limits);
            Generation gen;
            gen.review_id = ex.review_id;
            for (const auto& s : chunk.sentences) gen.sentences.push_back(s.surface);
            gens.push_back(std::move(gen));
        }
        ensure_dir(std::filesystem::path(output).parent_path().string());
        write_generations(output, gens);
        std::cout << "wrote " << gens.size() << " generations to " << output << "\n";
    }

    void score(const std::string& input, const std::string& output) {
        auto d_coh = load_disc(DiscKind::kCoherence, paths.disc_ckpt(DiscKind::kCoherence));
        auto d_cohesion = load_disc(DiscKind::kCohesion, paths.disc_ckpt(DiscKind::kCohesion));
        RewardScorerT<Real> scorer(d_coh, d_cohesion, table);
        auto examples = load_dataset(input, vocab);
        ensure_dir(std::filesystem::path(output).parent_path().string());
        std::ofstream out(output);
        if (!out) throw DataError("score: cannot write " + output);
        for (const auto& ex : examples) {
            auto report = score_report(scorer, ex.source, ex.target);
            nlohmann::json rec;
            rec["review_id"] = ex.review_id;
            rec["coherence"] = report.coherence;
            rec["cohesion_per_pair"] = report.cohesion_per_pair;
            rec["cohesion_mean"] = report.cohesion_mean;
            out << rec.dump() << "\n";
        }
        std::cout << "wrote scores for " << examples.size() << " examples to " << output << "\n";
    }

    void evaluate(const std::string& generations_path, const std::string& references_path,
                  const std::string& gen_ckpt, const std::string& output) {
        auto refs = load_dataset(references_path, vocab);
        auto gens = load_generations(generations_path);
        if (gens.size() != refs.size())
            throw DataError("eval: generations/references size mismatch");

        auto flatten_gen = [&](const Generation& g) {
            std::vector<int> ids;
            for (const auto& s : g.sentences)
                for (const auto& tok : s) ids.push_back(vocab.id(tok));
            return ids;
        };
        auto flatten_ref = [&](const TextChunk& c) {
            std::vector<int> ids;
            for (const auto& s : c.sentences)
                for (int id : s.ids) ids.push_back(id);
            return ids;
        };
        std::vector<std::vector<int>> hyp, ref;
        for (size_t i = 0; i < gens.size(); ++i) {
            hyp.push_back(flatten_gen(gens[i]));
            ref.push_back(flatten_ref(refs[i].target));
        }

        auto g = load_gen(gen_ckpt);
        const double nll = corpus_nll(g, refs);
        auto report = compute_metrics(nll, hyp, ref);

        nlohmann::json rec;
        rec["nll"] = report.nll;
        rec["ppl"] = report.ppl;
        for (const auto& [n, v] : report.bleu) rec["bleu_" + std::to_string(n)] = v;
        for (const auto& [n, v] : report.intra_unique) rec["intra_unique_" + std::to_string(n)] = v;
        for (const auto& [n, v] : report.inter_unique) rec["inter_unique_" + std::to_string(n)] = v;
        rec["length_ratio"] = report.length_ratio;

        ensure_dir(std::filesystem::path(output).parent_path().string());
        std::ofstream out(output);
        out << rec.dump(2) << "\n";
        std::cout << rec.dump() << "\n" << report.to_table();
    }

    double recall_eval(DiscKind kind, const std::string& split_name, int k) {
        auto d = load_disc(kind, paths.disc_ckpt(kind));
        auto split_data = load_split(split_name);
        RecallConfig rc;
        rc.k = k;
        rc.n_candidates = cfg.get_int("eval.recall_candidates");
        rc.trials = cfg.get_int("eval.recall_trials");
        rc.max_queries = cfg.get_int("eval.recall_max_queries");
        rc.seed = derive_seed(cfg.get_u64("global.seed"), "recall.eval");
        if (kind == DiscKind::kCoherence) return coherence_recall_at_k(d, split_data, table, rc);
        std::vector<std::pair<Sentence, Sentence>> pairs;
        for (const auto& ex : split_data)
            for (auto& p : decompose_pairs(ex.source, ex.target)) pairs.push_back(std::move(p));
        return cohesion_recall_at_k(d, pairs, table, rc);
    }
};

}  // namespace ncst
