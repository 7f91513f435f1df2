// ncst: train and evaluate coherence/cohesion discriminators, an MLE
// seq2seq generator, and the negative-critical fine-tuning step, end to end.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ncst/pipeline.hpp"

namespace {

using namespace ncst;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct GlobalOpts {
    std::string config_file;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::string seed;
};

RunConfig make_config(const GlobalOpts& g) {
    RunConfig cfg;
    if (!g.config_file.empty()) cfg.load_file(g.config_file);
    for (const auto& o : g.overrides) cfg.apply_override(o);
    if (!g.out_dir.empty()) cfg.set("paths.out_dir", g.out_dir);
    if (!g.seed.empty()) cfg.set("global.seed", g.seed);
    return cfg;
}

template <class Fn>
int with_pipeline(const RunConfig& cfg, Fn&& fn) {
    if (cfg.get("global.precision") == "high") {
        PipelineT<double> p(cfg);
        fn(p);
    } else if (cfg.get("global.precision") == "standard") {
        PipelineT<float> p(cfg);
        fn(p);
    } else {
        throw ConfigError("config: global.precision must be standard or high");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coherence/cohesion discriminators, MLE seq2seq generator, and "
                 "negative-critical fine-tuning"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_file, "key = value configuration file");
    app.add_option("--set", g.overrides, "override a config key (key=value), repeatable");
    app.add_option("--out", g.out_dir, "output directory (default $NCST_OUT_DIR or ./runs)");
    app.add_option("--seed", g.seed, "global random seed");

    auto* synth = app.add_subcommand("synth-corpus", "write the synthetic topic-keyed corpus");
    auto* prep = app.add_subcommand("preprocess", "filter, split, and tokenize the raw corpus");
    auto* tdisc = app.add_subcommand("train-disc", "train a discriminator");
    std::string disc_kind = "both";
    tdisc->add_option("--kind", disc_kind, "coherence | cohesion | both")
        ->check(CLI::IsMember({"coherence", "cohesion", "both"}));
    auto* tgen = app.add_subcommand("train-gen", "train the generator with teacher forcing");
    auto* ft = app.add_subcommand("finetune-rl", "negative-critical fine-tuning of the generator");
    std::string ft_weights;
    ft->add_option("--weights", ft_weights, "reward weights as coherence,cohesion (default 0.5,0.5)");
    std::string ft_mixing;
    ft->add_option("--mixing", ft_mixing, "alternate | none");
    std::string ft_epochs;
    ft->add_option("--epochs", ft_epochs, "fine-tune epochs (max 5 by default)");
    std::string ft_batch;
    ft->add_option("--ensemble-batch", ft_batch,
                   "minibatch size B; the negative ensemble size is 2B-1");

    auto* gen = app.add_subcommand("generate", "greedy-decode a processed dataset");
    std::string gen_input, gen_output, gen_ckpt;
    gen->add_option("--input", gen_input, "processed dataset (default <data>/test.jsonl)");
    gen->add_option("--output", gen_output, "generations file (default <out>/gen/test_generations.jsonl)");
    gen->add_option("--checkpoint", gen_ckpt, "generator checkpoint (default: rl if present, else mle)");

    auto* score = app.add_subcommand("score", "per-review coherence and per-pair cohesion scores");
    std::string score_input, score_output;
    score->add_option("--input", score_input, "processed dataset (default <data>/test.jsonl)");
    score->add_option("--output", score_output, "scores file (default <out>/score/scores.jsonl)");

    auto* eval = app.add_subcommand("eval", "NLL/PPL/BLEU/unique-n/length-ratio report");
    std::string eval_gens, eval_refs, eval_ckpt, eval_out;
    eval->add_option("--generations", eval_gens, "generations file");
    eval->add_option("--references", eval_refs, "processed dataset with references");
    eval->add_option("--generator", eval_ckpt, "generator checkpoint for NLL");
    eval->add_option("--output", eval_out, "metrics JSON output path");

    auto* recall = app.add_subcommand("recall", "discriminator R@K retrieval evaluation");
    std::string recall_kind = "coherence", recall_split = "test";
    int recall_k = 1;
    recall->add_option("--kind", recall_kind)->check(CLI::IsMember({"coherence", "cohesion"}));
    recall->add_option("--split", recall_split)->check(CLI::IsMember({"train", "dev", "test"}));
    recall->add_option("--k", recall_k, "K in R@K");

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = make_config(g);

        if (synth->parsed()) {
            cmd_synth_corpus(cfg);
            return kExitOk;
        }
        if (prep->parsed()) {
            cmd_preprocess(cfg);
            return kExitOk;
        }
        if (tdisc->parsed()) {
            return with_pipeline(cfg, [&](auto& p) {
                if (disc_kind == "coherence" || disc_kind == "both")
                    p.train_disc(DiscKind::kCoherence);
                if (disc_kind == "cohesion" || disc_kind == "both")
                    p.train_disc(DiscKind::kCohesion);
            });
        }
        if (tgen->parsed()) {
            return with_pipeline(cfg, [&](auto& p) { p.train_gen(); });
        }
        if (ft->parsed()) {
            if (!ft_weights.empty()) {
                const auto comma = ft_weights.find(',');
                if (comma == std::string::npos)
                    throw ConfigError("--weights must be coherence,cohesion");
                cfg.set("rl.weight_coherence", ft_weights.substr(0, comma));
                cfg.set("rl.weight_cohesion", ft_weights.substr(comma + 1));
            }
            if (!ft_mixing.empty()) cfg.set("rl.mixing", ft_mixing);
            if (!ft_epochs.empty()) cfg.set("rl.epochs", ft_epochs);
            if (!ft_batch.empty()) cfg.set("rl.batch_size", ft_batch);
            return with_pipeline(cfg, [&](auto& p) { p.finetune_rl(); });
        }
        if (gen->parsed()) {
            return with_pipeline(cfg, [&](auto& p) {
                const std::string input =
                    gen_input.empty() ? p.paths.dataset(cfg, "test") : gen_input;
                const std::string output =
                    gen_output.empty() ? p.paths.gen_dir() + "/test_generations.jsonl" : gen_output;
                const std::string ckpt = gen_ckpt.empty() ? p.default_gen_ckpt() : gen_ckpt;
                p.generate(ckpt, input, output);
            });
        }
        if (score->parsed()) {
            return with_pipeline(cfg, [&](auto& p) {
                const std::string input =
                    score_input.empty() ? p.paths.dataset(cfg, "test") : score_input;
                const std::string output =
                    score_output.empty() ? p.paths.score_dir() + "/scores.jsonl" : score_output;
                p.score(input, output);
            });
        }
        if (eval->parsed()) {
            return with_pipeline(cfg, [&](auto& p) {
                const std::string gens =
                    eval_gens.empty() ? p.paths.gen_dir() + "/test_generations.jsonl" : eval_gens;
                const std::string refs =
                    eval_refs.empty() ? p.paths.dataset(cfg, "test") : eval_refs;
                const std::string ckpt = eval_ckpt.empty() ? p.default_gen_ckpt() : eval_ckpt;
                const std::string output =
                    eval_out.empty() ? p.paths.eval_dir() + "/metrics.json" : eval_out;
                p.evaluate(gens, refs, ckpt, output);
            });
        }
        if (recall->parsed()) {
            return with_pipeline(cfg, [&](auto& p) {
                const double r = p.recall_eval(disc_kind_from(recall_kind), recall_split, recall_k);
                std::cout << "R@" << recall_k << " (" << recall_kind << ", " << recall_split
                          << ") = " << r << "\n";
            });
        }
        std::cerr << app.help() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
