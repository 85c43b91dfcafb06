#include "vea/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace vea::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kFashionClasses{"T-shirt/top", "Trouser", "Pullover", "Dress", "Coat",
                                               "Sandal",      "Shirt",   "Sneaker",  "Bag",   "Ankle boot"};
const std::vector<std::string> kOracleClasses{"big", "sun", "moon", "cattle", "next",
                                              "field", "not", "arrow", "time", "wood"};
const std::vector<std::string> kIdxKeys{"train_images", "train_labels", "test_images", "test_labels"};
const std::vector<std::string> kFolderKeys{"train_dir", "test_dir"};
const std::vector<std::string> kIntegerKeys{"num_classes", "image_size", "lr_halving_period_epochs",
                                            "epochs", "batch_size", "seed"};
const std::vector<std::string> kRealKeys{"initial_lr", "lr_factor", "momentum", "weight_decay"};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool known_key(const std::string& key) {
  const auto& keys = config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return key == k.name; });
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys{
      {"dataset", "fashionmnist, oraclemnist or imagefolder"},
      {"model", "resnet18 or vea_resnet18"},
      {"num_classes", "classifier outputs; must match the dataset"},
      {"image_size", "square input size (default 28 for fashionmnist, 100 otherwise)"},
      {"class_names", "comma-separated names (IDX datasets only)"},
      {"train_images", "IDX training images (.gz accepted)"},
      {"train_labels", "IDX training labels"},
      {"test_images", "IDX test images"},
      {"test_labels", "IDX test labels"},
      {"train_dir", "image folder with one directory per class"},
      {"test_dir", "image folder with one directory per class"},
      {"output_dir", "where CSVs, checkpoints and manifests are written"},
      {"initial_lr", "initial learning rate"},
      {"lr_halving_period_epochs", "epochs between learning-rate cuts"},
      {"lr_factor", "learning-rate multiplier at each cut"},
      {"epochs", "number of epochs"},
      {"batch_size", "mini-batch size"},
      {"momentum", "SGD momentum"},
      {"weight_decay", "L2 penalty added to the gradient"},
      {"seed", "initialization and shuffling seed"},
  };
  return keys;
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::FashionMnist: return "fashionmnist";
    case DatasetKind::OracleMnist: return "oraclemnist";
    case DatasetKind::ImageFolder: return "imagefolder";
  }
  return "?";
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  for (int number = 1; std::getline(in, line); ++number) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '#' && (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.erase(i);
        break;
      }
    }
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (cfg.has(key)) throw ConfigError("line " + std::to_string(number) + ": duplicate key '" + key + "'");
    try {
      cfg.set(key, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& key : config_keys()) {
    const auto it = values_.find(key.name);
    if (it != values_.end()) out += it->first + " = " + it->second + "\n";
  }
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known_key(key)) throw ConfigError("unknown key '" + key + "'");
  if (value.empty()) throw ConfigError("key '" + key + "' has an empty value");
  // Syntax only; ranges and cross-key rules are checked by validate().
  if (std::find(kIntegerKeys.begin(), kIntegerKeys.end(), key) != kIntegerKeys.end()) {
    parse_number<std::uint64_t>(key, value);
  } else if (std::find(kRealKeys.begin(), kRealKeys.end(), key) != kRealKeys.end()) {
    parse_number<double>(key, value);
  }
  values_[key] = value;
}

std::string RunConfig::required(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

std::optional<std::string> RunConfig::optional(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

DatasetKind RunConfig::dataset() const {
  const std::string v = required("dataset");
  if (v == "fashionmnist") return DatasetKind::FashionMnist;
  if (v == "oraclemnist") return DatasetKind::OracleMnist;
  if (v == "imagefolder") return DatasetKind::ImageFolder;
  throw ConfigError("key 'dataset': unknown dataset '" + v + "'");
}

model::Architecture RunConfig::architecture() const {
  const std::string v = required("model");
  if (v == "resnet18") return model::Architecture::ResNet18;
  if (v == "vea_resnet18") return model::Architecture::VeaResNet18;
  throw ConfigError("key 'model': unknown model '" + v + "'");
}

std::size_t RunConfig::num_classes() const {
  const auto k = parse_number<std::size_t>("num_classes", required("num_classes"));
  if (k < 2) throw ConfigError("key 'num_classes': need at least 2 classes");
  return k;
}

std::size_t RunConfig::image_size() const {
  if (const auto v = optional("image_size")) {
    const auto size = parse_number<std::size_t>("image_size", *v);
    if (size < model::kMinInputExtent) {
      throw ConfigError("key 'image_size': " + *v + " is below the minimum of " +
                        std::to_string(model::kMinInputExtent));
    }
    return size;
  }
  return dataset() == DatasetKind::FashionMnist ? 28 : 100;
}

std::vector<std::string> RunConfig::class_names() const {
  if (const auto v = optional("class_names")) {
    std::vector<std::string> names;
    std::stringstream in(*v);
    std::string name;
    while (std::getline(in, name, ',')) names.push_back(trim(name));
    return names;
  }
  switch (dataset()) {
    case DatasetKind::FashionMnist: return kFashionClasses;
    case DatasetKind::OracleMnist: return kOracleClasses;
    case DatasetKind::ImageFolder: return {};
  }
  return {};
}

train::TrainConfig RunConfig::train_config() const {
  train::TrainConfig t;
  if (auto v = optional("initial_lr")) t.initial_lr = parse_number<double>("initial_lr", *v);
  if (auto v = optional("lr_halving_period_epochs")) {
    t.lr_halving_period_epochs = parse_number<int>("lr_halving_period_epochs", *v);
  }
  if (auto v = optional("lr_factor")) t.lr_factor = parse_number<double>("lr_factor", *v);
  if (auto v = optional("epochs")) t.epochs = parse_number<int>("epochs", *v);
  if (auto v = optional("batch_size")) t.batch_size = parse_number<std::size_t>("batch_size", *v);
  if (auto v = optional("momentum")) t.momentum = parse_number<double>("momentum", *v);
  if (auto v = optional("weight_decay")) t.weight_decay = parse_number<double>("weight_decay", *v);
  if (auto v = optional("seed")) t.seed = parse_number<std::uint64_t>("seed", *v);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

fs::path RunConfig::output_dir() const { return required("output_dir"); }

fs::path RunConfig::path(const std::string& key) const { return required(key); }

std::vector<std::pair<std::string, fs::path>> RunConfig::input_files() const {
  std::vector<std::pair<std::string, fs::path>> out;
  for (const auto& key : dataset() == DatasetKind::ImageFolder ? kFolderKeys : kIdxKeys) {
    out.emplace_back(key, path(key));
  }
  return out;
}

void RunConfig::validate() const {
  const DatasetKind kind = dataset();
  architecture();
  const std::size_t k = num_classes();
  image_size();
  train_config();
  output_dir();
  const auto& needed = kind == DatasetKind::ImageFolder ? kFolderKeys : kIdxKeys;
  const auto& foreign = kind == DatasetKind::ImageFolder ? kIdxKeys : kFolderKeys;
  for (const auto& key : needed) required(key);
  for (const auto& key : foreign) {
    if (has(key)) throw ConfigError("key '" + key + "' does not apply to dataset " + to_string(kind));
  }
  if (kind == DatasetKind::ImageFolder) {
    if (has("class_names")) throw ConfigError("key 'class_names' does not apply to dataset imagefolder");
  } else if (class_names().size() != k) {
    throw ConfigError("num_classes is " + std::to_string(k) + " but " + std::to_string(class_names().size()) +
                      " class names are configured");
  }
}

namespace {

data::PreprocessSpec preprocess_for(const RunConfig& cfg) {
  data::PreprocessSpec spec;
  spec.height = spec.width = cfg.image_size();
  return spec;
}

data::Dataset load_split(const RunConfig& cfg, const std::string& split) {
  const data::PreprocessSpec spec = preprocess_for(cfg);
  data::Dataset ds = cfg.dataset() == DatasetKind::ImageFolder
                         ? data::load_image_folder(cfg.path(split + "_dir"), spec)
                         : data::load_idx_dataset(cfg.path(split + "_images"), cfg.path(split + "_labels"),
                                                  cfg.class_names(), spec);
  if (ds.num_classes() != cfg.num_classes()) {
    throw ConfigError("num_classes is " + std::to_string(cfg.num_classes()) + " but the " + split + " data has " +
                      std::to_string(ds.num_classes()) + " classes");
  }
  return ds;
}

}  // namespace

DataPair load_datasets(const RunConfig& cfg) {
  cfg.validate();
  DataPair pair{load_split(cfg, "train"), load_split(cfg, "test")};
  if (pair.train.class_names() != pair.test.class_names()) {
    throw data::DataError("train and test class sets differ");
  }
  return pair;
}

data::Dataset load_test_dataset(const RunConfig& cfg) {
  cfg.validate();
  return load_split(cfg, "test");
}

model::Model build_model(const RunConfig& cfg) {
  const std::uint64_t seed = cfg.train_config().seed;
  if (cfg.architecture() == model::Architecture::ResNet18) return model::build_resnet18(cfg.num_classes(), seed);
  return model::build_vea_resnet18(model::VeaConfig::standard(cfg.num_classes()), seed);
}

}  // namespace vea::cli
