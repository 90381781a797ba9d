#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "hhkg/bench.hpp"
#include "hhkg/hypergraph.hpp"
#include "hhkg/ingest.hpp"
#include "hhkg/model.hpp"
#include "hhkg/synthetic.hpp"
#include "hhkg/train.hpp"

namespace hhkg {

// Flat `key = value` settings grouped in [section]s. Keys are addressed as
// `section.key`; a file may use either a [section] header or the dotted
// form. Every key has a default and a value type checked on assignment;
// unknown keys and malformed values are UsageErrors.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  void parse(std::istream& in, const std::string& source);
  // Parses the output of echo().
  static RunConfig from_echo(const std::string& echo);

  void set(const std::string& key, const std::string& value);
  // `section.key=value`
  void set_assignment(const std::string& assignment);
  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  // Canonical `section.key = value` lines for every setting that can
  // influence results (run.out and run.jobs are left out).
  std::string echo() const;

  static std::vector<std::string> keys();

  ModelConfig model_config() const;
  TrainConfig train_config() const;
  SplitRatios split_ratios() const;
  SyntheticConfig synthetic_config() const;
  BenchConfig bench_config() const;
  Grouping grouping() const;
  std::uint64_t seed() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace hhkg
