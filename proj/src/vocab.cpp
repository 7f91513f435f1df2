#include "ncst/vocab.hpp"

#include <fstream>
#include <stdexcept>

#include "ncst/rng.hpp"

namespace ncst {

const std::vector<std::string>& Vocab::special_tokens() {
    static const std::vector<std::string> specials = {"<pad>", "<unk>", "<bos>", "<eos>", "<sep>"};
    return specials;
}

Vocab::Vocab() {
    for (const auto& s : special_tokens()) {
        token_to_id_.emplace(s, static_cast<int>(id_to_token_.size()));
        id_to_token_.push_back(s);
    }
}

int Vocab::add(const std::string& token) {
    auto [it, inserted] = token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
    if (!inserted) throw std::invalid_argument("vocab: duplicate token '" + token + "'");
    id_to_token_.push_back(token);
    return it->second;
}

int Vocab::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab: id out of range");
    return id_to_token_[static_cast<size_t>(id)];
}

bool Vocab::contains(const std::string& token) const {
    return token_to_id_.find(token) != token_to_id_.end();
}

uint64_t Vocab::hash() const {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& tok : id_to_token_) {
        h = splitmix64(h ^ fnv1a64(tok));
    }
    return h;
}

void Vocab::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("vocab: cannot write " + path);
    for (int i = first_regular_id(); i < size(); ++i) out << id_to_token_[static_cast<size_t>(i)] << "\n";
}

Vocab Vocab::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("vocab: cannot read " + path);
    Vocab v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        v.add(line);
    }
    return v;
}

}  // namespace ncst
