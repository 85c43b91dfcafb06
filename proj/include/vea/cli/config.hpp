#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vea/data/dataset.hpp"
#include "vea/model/backbone.hpp"
#include "vea/train/train.hpp"

namespace vea::cli {

/// Invalid, incomplete or inconsistent run configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { FashionMnist, OracleMnist, ImageFolder };

struct ConfigKey {
  const char* name;
  const char* help;
};

/// Every accepted key, in canonical order.
const std::vector<ConfigKey>& config_keys();

/// Flat `key = value` configuration. Keys are validated on every set.
class RunConfig {
 public:
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Canonical text: known keys in config_keys() order, one per line.
  std::string serialize() const;

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  /// Checks that every key the dataset and model need is present and parses.
  void validate() const;

  DatasetKind dataset() const;
  model::Architecture architecture() const;
  std::size_t num_classes() const;
  std::size_t image_size() const;
  std::vector<std::string> class_names() const;
  train::TrainConfig train_config() const;
  std::filesystem::path output_dir() const;
  std::filesystem::path path(const std::string& key) const;

  /// Input files or directories the run reads, keyed by config key.
  std::vector<std::pair<std::string, std::filesystem::path>> input_files() const;

  bool operator==(const RunConfig& other) const { return values_ == other.values_; }

 private:
  std::string required(const std::string& key) const;
  std::optional<std::string> optional(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

std::string to_string(DatasetKind kind);

/// Train and test datasets as the configuration describes them.
struct DataPair {
  data::Dataset train;
  data::Dataset test;
};

DataPair load_datasets(const RunConfig& cfg);
data::Dataset load_test_dataset(const RunConfig& cfg);

model::Model build_model(const RunConfig& cfg);

}  // namespace vea::cli
