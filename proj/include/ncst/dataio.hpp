#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ncst/text.hpp"
#include "ncst/vocab.hpp"

namespace ncst {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Processed dataset: line-delimited {review_id, source, target} with
/// tokens as strings. Ids are assigned at load time against the vocab.
void write_dataset(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> load_dataset(const std::string& path, const Vocab& vocab);

struct Generation {
    std::string review_id;
    std::vector<std::vector<std::string>> sentences;
};

/// Generations: line-delimited {review_id, generated: [[token, ...], ...]}.
void write_generations(const std::string& path, const std::vector<Generation>& gens);
std::vector<Generation> load_generations(const std::string& path);

/// Structured line-delimited run log plus a plain-text summary alongside.
class RunLogger {
  public:
    RunLogger() = default;
    RunLogger(const std::string& dir, const std::string& name, bool echo = true);
    void record(const nlohmann::json& rec);
    void summary(const std::string& text);
    const std::string& dir() const { return dir_; }

  private:
    std::string dir_;
    std::ofstream log_;
    std::ofstream summary_;
    bool echo_ = true;
};

void ensure_dir(const std::string& path);

}  // namespace ncst
