#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace ncst {

/// Token ids. The reserved specials occupy the lowest ids; file line k of a
/// vocab file maps to id first_regular_id() + k.
class Vocab {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kBos = 2;
    static constexpr int kEos = 3;
    static constexpr int kSentSep = 4;

    static const std::vector<std::string>& special_tokens();
    static int first_regular_id() { return static_cast<int>(special_tokens().size()); }

    Vocab();

    /// Appends a non-special token; returns its id. Duplicates are an error.
    int add(const std::string& token);

    int id(const std::string& token) const;  // kUnk when absent
    const std::string& token(int id) const;
    bool contains(const std::string& token) const;

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int regular_size() const { return size() - first_regular_id(); }

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    /// Stable content hash used to pair checkpoints with the vocabulary
    /// they were trained against.
    uint64_t hash() const;

    void save(const std::string& path) const;
    static Vocab load(const std::string& path);

  private:
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

}  // namespace ncst
