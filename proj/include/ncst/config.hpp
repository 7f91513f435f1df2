#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncst {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Flat key-value run configuration with dotted section keys. Every key has
/// a default; file values and then command-line overrides are layered on
/// top. Unknown keys are rejected with the offending field path.
class RunConfig {
  public:
    RunConfig();

    static const std::map<std::string, std::string>& defaults();

    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    void apply_override(const std::string& assignment);  // "key=value"

    const std::string& get(const std::string& key) const;
    int get_int(const std::string& key) const;
    int64_t get_i64(const std::string& key) const;
    uint64_t get_u64(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_doubles(const std::string& key) const;  // comma separated

    /// Paths that default to locations under the output directory.
    std::string out_dir() const;
    std::string corpus_path() const;
    std::string embeddings_path() const;
    std::string data_dir() const;

    /// The fully resolved key-value map (defaults overlaid with overrides).
    std::map<std::string, std::string> resolved() const;

    std::string dump() const;

  private:
    std::map<std::string, std::string> values_;
};

}  // namespace ncst
