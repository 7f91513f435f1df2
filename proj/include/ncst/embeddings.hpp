#pragma once

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ncst/tensor.hpp"
#include "ncst/text.hpp"
#include "ncst/vocab.hpp"

namespace ncst {

/// |Vocab| x d table, frozen for the lifetime of every training run.
/// Rows for words missing from the file get the mean of the loaded vectors,
/// which keeps UNK-heavy bag-of-words vectors off the zero-norm guard.
/// The PAD row stays zero.
template <class Real>
struct EmbeddingTableT {
    TensorT<Real> matrix;  // [vocab, d]
    int dim = 0;
    double coverage = 0.0;  // fraction of regular vocab found in the file
    bool frozen = true;

    std::vector<Real> row(int id) const {
        std::vector<Real> out(static_cast<size_t>(dim));
        for (int c = 0; c < dim; ++c) out[static_cast<size_t>(c)] = matrix.at(id, c);
        return out;
    }
};

/// Whitespace text format: token then d floats per line.
template <class Real>
EmbeddingTableT<Real> load_embeddings(const std::string& path, const Vocab& vocab,
                                      int expected_dim = 0) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("embeddings: cannot read " + path);

    int d = expected_dim;
    std::vector<std::vector<Real>> file_rows(static_cast<size_t>(vocab.size()));
    std::vector<double> mean_acc;
    int64_t loaded = 0;
    int found = 0;

    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        ss >> tok;
        std::vector<Real> vec;
        double x;
        while (ss >> x) vec.push_back(static_cast<Real>(x));
        if (vec.empty()) continue;
        if (d == 0) d = static_cast<int>(vec.size());
        if (static_cast<int>(vec.size()) != d)
            throw std::runtime_error("embeddings: dimension mismatch at token '" + tok + "'");
        if (mean_acc.empty()) mean_acc.assign(static_cast<size_t>(d), 0.0);
        for (int c = 0; c < d; ++c) mean_acc[static_cast<size_t>(c)] += static_cast<double>(vec[static_cast<size_t>(c)]);
        ++loaded;
        if (vocab.contains(tok)) {
            const int id = vocab.id(tok);
            if (file_rows[static_cast<size_t>(id)].empty()) {
                file_rows[static_cast<size_t>(id)] = std::move(vec);
                ++found;
            }
        }
    }
    if (d == 0 || loaded == 0) throw std::runtime_error("embeddings: no vectors in " + path);

    std::vector<Real> mean_row(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c)
        mean_row[static_cast<size_t>(c)] = static_cast<Real>(mean_acc[static_cast<size_t>(c)] / static_cast<double>(loaded));

    EmbeddingTableT<Real> table;
    table.dim = d;
    table.matrix = TensorT<Real>({vocab.size(), d});
    for (int id = 0; id < vocab.size(); ++id) {
        if (id == Vocab::kPad) continue;  // stays zero
        const auto& src = file_rows[static_cast<size_t>(id)].empty() ? mean_row : file_rows[static_cast<size_t>(id)];
        for (int c = 0; c < d; ++c) table.matrix.at(id, c) = src[static_cast<size_t>(c)];
    }
    table.coverage =
        vocab.regular_size() > 0 ? static_cast<double>(found) / vocab.regular_size() : 0.0;
    return table;
}

template <class Real>
uint64_t embedding_hash(const EmbeddingTableT<Real>& table) {
    uint64_t h = 1469598103934665603ULL;
    for (Real e : table.matrix.v) {
        uint64_t bits = 0;
        double dv = static_cast<double>(e);
        static_assert(sizeof(dv) == sizeof(bits));
        std::memcpy(&bits, &dv, sizeof(bits));
        h ^= bits;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Arithmetic mean of the sentence's token vectors; order-invariant.
template <class Real>
TensorT<Real> bow_embed(const Sentence& sentence, const EmbeddingTableT<Real>& table) {
    if (sentence.ids.empty()) throw std::invalid_argument("bow_embed: empty sentence");
    TensorT<Real> out({table.dim});
    for (int id : sentence.ids)
        for (int c = 0; c < table.dim; ++c) out[c] += table.matrix.at(id, c);
    const Real inv = Real(1) / static_cast<Real>(sentence.ids.size());
    for (auto& e : out.v) e *= inv;
    return out;
}

/// [len, d] matrix of the sentence's token vectors in order.
template <class Real>
TensorT<Real> embed_sequence(const std::vector<int>& ids, const EmbeddingTableT<Real>& table) {
    if (ids.empty()) throw std::invalid_argument("embed_sequence: empty token list");
    TensorT<Real> out({static_cast<int>(ids.size()), table.dim});
    for (size_t r = 0; r < ids.size(); ++r)
        for (int c = 0; c < table.dim; ++c) out.at(static_cast<int>(r), c) = table.matrix.at(ids[r], c);
    return out;
}

}  // namespace ncst
