#pragma once

#include <cstdint>
#include <string>

namespace ncst {

/// Desk-scale corpus with learnable structure: every review is keyed to one
/// topic and one named entity, sentences open with a position-graded
/// connective, and each sentence introduces a topic noun that the next
/// sentence refers back to. Coherence signal: topic/entity match plus the
/// connective ladder; cohesion signal: the noun chain plus grammatical
/// word order.
struct SynthConfig {
    int n_reviews = 2400;
    int n_topics = 12;  // capped by the built-in topic list
    int n_entities = 150;
    int embed_dim = 64;
    uint64_t seed = 42;
};

/// Writes `corpus_path` (line-delimited {id, text}) and `embeddings_path`
/// (token + embed_dim floats per line). The embedding geometry mirrors the
/// corpus structure: topic words cluster, connectives advance along a
/// fixed direction, entities are mutually distinct.
void write_synthetic_corpus(const SynthConfig& cfg, const std::string& corpus_path,
                            const std::string& embeddings_path);

}  // namespace ncst
