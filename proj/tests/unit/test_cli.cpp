#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "vea/cli/commands.hpp"
#include "vea/cli/config.hpp"
#include "vea/data/idx.hpp"
#include "vea/model/backbone.hpp"
#include "vea/train/checkpoint.hpp"

namespace {

namespace fs = std::filesystem;
using namespace vea;

// Rows are true classes; reference OracleMNIST confusion matrix.
const std::vector<std::vector<int>> kTable{{293, 0, 1, 0, 0, 0, 0, 4, 1, 1},   {0, 296, 1, 0, 0, 3, 0, 0, 0, 0},
                                           {1, 1, 295, 0, 0, 0, 2, 1, 0, 0},   {0, 0, 0, 285, 4, 0, 1, 0, 5, 5},
                                           {0, 0, 2, 2, 293, 2, 0, 0, 1, 0},   {0, 3, 0, 0, 1, 296, 0, 0, 0, 0},
                                           {0, 0, 2, 0, 0, 0, 294, 1, 3, 0},   {6, 0, 1, 0, 3, 0, 2, 286, 0, 2},
                                           {0, 2, 1, 1, 1, 0, 0, 1, 291, 3},   {0, 0, 0, 8, 2, 0, 0, 1, 2, 287}};

struct Result {
  int code;
  std::string out, err;
};

Result vea_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vea");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

void write_idx(const fs::path& p, std::vector<std::uint32_t> dims, std::vector<std::uint8_t> payload) {
  const auto bytes = data::encode_idx({data::IdxDtype::U8, std::move(dims), std::move(payload)});
  spit(p, std::string(bytes.begin(), bytes.end()));
}

// Every image is flat grey at a level that identifies `shown[i]`.
void write_flat_split(const fs::path& dir, const std::string& stem, const std::vector<int>& shown,
                      const std::vector<int>& labels) {
  std::vector<std::uint8_t> pixels;
  for (int c : shown) pixels.insert(pixels.end(), 28 * 28, static_cast<std::uint8_t>(140 + 12 * c));
  write_idx(dir / (stem + "-images.idx"), {static_cast<std::uint32_t>(shown.size()), 28, 28}, pixels);
  write_idx(dir / (stem + "-labels.idx"), {static_cast<std::uint32_t>(labels.size())},
            std::vector<std::uint8_t>(labels.begin(), labels.end()));
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("vea_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  // Random 28x28 digits-like noise with random labels.
  void write_random_idx(const std::string& stem, std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::vector<std::uint8_t> pixels(n * 28 * 28), labels(n);
    for (auto& p : pixels) p = static_cast<std::uint8_t>(rng() & 0xFF);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<std::uint8_t>(i % 10);
    write_idx(dir_ / (stem + "-images.idx"), {static_cast<std::uint32_t>(n), 28, 28}, pixels);
    write_idx(dir_ / (stem + "-labels.idx"), {static_cast<std::uint32_t>(n)}, labels);
  }

  std::string idx_config(const std::string& dataset, const std::string& out, const std::string& extra = "") {
    return "dataset = " + dataset + "\nmodel = resnet18\nnum_classes = 10\n" +
           "train_images = " + (dir_ / "train-images.idx").string() + "\n" +
           "train_labels = " + (dir_ / "train-labels.idx").string() + "\n" +
           "test_images = " + (dir_ / "test-images.idx").string() + "\n" +
           "test_labels = " + (dir_ / "test-labels.idx").string() + "\n" + "output_dir = " + (dir_ / out).string() +
           "\n" + extra;
  }

  // ResNet-18 that carries the mean normalized intensity through channel 0
  // and scores class k by -(f - c_k)^2 + f^2, so flat images of level k map to k.
  void write_perfect_checkpoint(const fs::path& path) {
    auto net = model::build_resnet18(10, 3);
    std::vector<nn::NamedParam> params;
    net.collect_parameters("", params);
    auto find = [&](const std::string& name) -> Tensor& {
      for (auto& p : params)
        if (p.name == name) return p.param->value;
      throw std::runtime_error("no " + name);
    };
    for (auto& p : params) {
      if (p.param->value.rank() == 4) p.param->value.fill(0.0f);
    }
    find("stem.conv.weight").at(0, 0, 3, 3) = 1.0f;
    for (const char* s : {"stage2", "stage3", "stage4"}) find(std::string(s) + ".0.downsample.conv.weight").at(0, 0, 0, 0) = 1.0f;

    Tensor& w = find("fc.weight");
    Tensor& b = find("fc.bias");
    w.fill(0.0f);
    b.fill(0.0f);
    w[0] = 1.0f;
    Tensor probe({10, 3, 28, 28});
    for (std::size_t c = 0; c < 10; ++c)
      for (std::size_t i = 0; i < 3 * 28 * 28; ++i) probe[c * 3 * 28 * 28 + i] = 2.0f * (140 + 12 * c) / 255.0f - 1.0f;
    const Tensor feature = model::forward(net, probe, nn::Mode::Eval);
    w[0] = 0.0f;
    for (std::size_t c = 0; c < 10; ++c) {
      const float ck = feature[c * 10];
      ASSERT_GT(ck, 0.0f);
      w[c * 512] = 2.0f * ck;
      b[c] = -ck * ck;
    }
    train::save_checkpoint(path, train::make_checkpoint(net, nullptr, "", 0, 3, 0));
  }

  fs::path dir_;
};

TEST_F(CliTest, ConfigRoundTripIsIdentityOnCanonicalText) {
  const std::string canonical = idx_config("oraclemnist", "out", "epochs = 5\nbatch_size = 64\nseed = 7\n");
  const auto cfg = cli::RunConfig::parse(canonical);
  EXPECT_EQ(cfg.serialize(), canonical);
  EXPECT_EQ(cli::RunConfig::parse(cfg.serialize()), cfg);
}

TEST_F(CliTest, ConfigSerializesInCanonicalOrderAndDropsComments) {
  const auto cfg = cli::RunConfig::parse("# run\nseed = 3   # fixed\n\nmodel=vea_resnet18\n");
  EXPECT_EQ(cfg.serialize(), "model = vea_resnet18\nseed = 3\n");
}

TEST_F(CliTest, ConfigRejectsDuplicatesAndMalformedLines) {
  EXPECT_THROW(cli::RunConfig::parse("seed = 1\nseed = 2\n"), cli::ConfigError);
  EXPECT_THROW(cli::RunConfig::parse("seed 1\n"), cli::ConfigError);
  EXPECT_THROW(cli::RunConfig::parse("seed =\n"), cli::ConfigError);
  try {
    cli::RunConfig::parse("seed = 1\nepochs = x\n");
    FAIL();
  } catch (const cli::ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST_F(CliTest, UnknownConfigKeyExitsOneNamingTheKey) {
  write_random_idx("train", 16, 1);
  write_random_idx("test", 16, 2);
  spit(dir_ / "cfg.txt", idx_config("fashionmnist", "out", "learning_rte = 0.1\n"));
  const auto r = vea_cli({"train", (dir_ / "cfg.txt").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("learning_rte"), std::string::npos);
  EXPECT_EQ(r.err.rfind("vea: error: ", 0), 0u);
  EXPECT_EQ(lines(r.err).size(), 1u);
}

TEST_F(CliTest, UnknownOverrideFlagExitsOne) {
  spit(dir_ / "cfg.txt", idx_config("fashionmnist", "out"));
  EXPECT_EQ(vea_cli({"train", (dir_ / "cfg.txt").string(), "--learning_rte", "0.1"}).code, cli::kExitConfig);
}

TEST_F(CliTest, MissingRequiredKeyExitsOne) {
  spit(dir_ / "cfg.txt", "dataset = fashionmnist\nmodel = resnet18\n");
  const auto r = vea_cli({"train", (dir_ / "cfg.txt").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("missing required key"), std::string::npos);
}

TEST_F(CliTest, MissingLabelsFileExitsTwo) {
  write_random_idx("train", 16, 1);
  write_random_idx("test", 16, 2);
  fs::remove(dir_ / "train-labels.idx");
  spit(dir_ / "cfg.txt", idx_config("fashionmnist", "out", "epochs = 1\n"));
  const auto r = vea_cli({"train", (dir_ / "cfg.txt").string()});
  EXPECT_EQ(r.code, cli::kExitData);
  EXPECT_NE(r.err.find("train-labels.idx"), std::string::npos);
  EXPECT_EQ(lines(r.err).size(), 1u);
}

TEST_F(CliTest, CorruptImagesFileExitsTwo) {
  write_random_idx("train", 16, 1);
  write_random_idx("test", 16, 2);
  spit(dir_ / "train-images.idx", std::string("\x01\x00\x08\x03", 4));
  spit(dir_ / "cfg.txt", idx_config("fashionmnist", "out", "epochs = 1\n"));
  EXPECT_EQ(vea_cli({"train", (dir_ / "cfg.txt").string()}).code, cli::kExitData);
}

TEST_F(CliTest, TrainSmokeWithOverridesWritesOneEpoch) {
  write_random_idx("train", 128, 1);
  write_random_idx("test", 32, 2);
  // The overrides replace both the dataset and the epoch count.
  spit(dir_ / "cfg.txt", idx_config("oraclemnist", "out", "epochs = 3\nseed = 11\n"));
  const auto r = vea_cli({"train", (dir_ / "cfg.txt").string(), "--epochs", "1", "--dataset", "fashionmnist"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = lines(slurp(dir_ / "out" / "epochs.csv"));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[0], "epoch,lr,mean_train_loss,train_acc,test_acc,epoch_seconds");
  EXPECT_EQ(csv[1].rfind("0,0.01,", 0), 0u);
  EXPECT_TRUE(fs::exists(dir_ / "out" / "model.veac"));

  const std::string manifest = slurp(dir_ / "out" / "manifest.json");
  EXPECT_NE(manifest.find("\"seed\": 11"), std::string::npos);
  EXPECT_NE(manifest.find("dataset = fashionmnist\\nmodel = resnet18"), std::string::npos);
  EXPECT_NE(manifest.find("epochs = 1\\n"), std::string::npos);
  EXPECT_NE(manifest.find(cli::content_hash(dir_ / "train-images.idx")), std::string::npos);

  const auto ckpt = train::read_checkpoint(dir_ / "out" / "model.veac");
  EXPECT_EQ(ckpt.epochs_completed, 1);
  EXPECT_EQ(ckpt.seed, 11u);
  EXPECT_EQ(ckpt.steps, 2u);
}

TEST_F(CliTest, RerunIsByteIdenticalApartFromWallClock) {
  write_random_idx("train", 64, 1);
  write_random_idx("test", 16, 2);
  spit(dir_ / "cfg.txt", idx_config("fashionmnist", "a", "epochs = 2\nbatch_size = 16\n"));
  ASSERT_EQ(vea_cli({"train", (dir_ / "cfg.txt").string()}).code, 0);
  ASSERT_EQ(vea_cli({"train", (dir_ / "cfg.txt").string(), "--output_dir", (dir_ / "b").string()}).code, 0);

  auto strip_seconds = [](const std::string& csv) {
    std::string out;
    for (const auto& l : lines(csv)) out += l.substr(0, l.rfind(',')) + "\n";
    return out;
  };
  EXPECT_EQ(strip_seconds(slurp(dir_ / "a" / "epochs.csv")), strip_seconds(slurp(dir_ / "b" / "epochs.csv")));
  // The stored config differs only in output_dir, so compare the tensors.
  const auto a = train::read_checkpoint(dir_ / "a" / "model.veac");
  const auto b = train::read_checkpoint(dir_ / "b" / "model.veac");
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].first, b.tensors[i].first);
    const auto x = a.tensors[i].second.data(), y = b.tensors[i].second.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end())) << a.tensors[i].first;
  }
}

TEST_F(CliTest, DivergingRunExitsThree) {
  write_random_idx("train", 64, 1);
  write_random_idx("test", 16, 2);
  spit(dir_ / "cfg.txt", idx_config("fashionmnist", "out", "epochs = 1\nbatch_size = 16\ninitial_lr = 1e30\n"));
  const auto r = vea_cli({"train", (dir_ / "cfg.txt").string()});
  EXPECT_EQ(r.code, cli::kExitNumerical) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos);
}

TEST(ContentHash, MatchesGitBlobHashes) {
  const fs::path dir = fs::temp_directory_path() / "vea_hash";
  fs::create_directories(dir);
  spit(dir / "empty", "");
  spit(dir / "hello", "hello\n");
  // `git hash-object` of an empty file and of "hello\n"
  EXPECT_EQ(cli::content_hash(dir / "empty"), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(cli::content_hash(dir / "hello"), "ce013625030ba8dba906f756967f9e9ca394464a");
  const std::string tree = cli::content_hash(dir);
  spit(dir / "hello", "hello!\n");
  EXPECT_NE(cli::content_hash(dir), tree);
  fs::remove_all(dir);
}

TEST_F(CliTest, EvalOfPerfectModelPrintsUnitAccuracy) {
  std::vector<int> classes;
  for (int i = 0; i < 40; ++i) classes.push_back(i % 10);
  write_flat_split(dir_, "train", classes, classes);
  write_flat_split(dir_, "test", classes, classes);
  write_perfect_checkpoint(dir_ / "perfect.veac");
  spit(dir_ / "cfg.txt", idx_config("fashionmnist", "eval"));
  const auto r = vea_cli({"eval", (dir_ / "perfect.veac").string(), (dir_ / "cfg.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out,
            "accuracy=1.0000 precision=1.0000 sensitivity=1.0000 specificity=1.0000 f1=1.0000 mcc=1.0000\n");
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "metrics.csv"));
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "eval.json"));
}

TEST_F(CliTest, EvalReproducesReferenceConfusionMatrix) {
  // Each (true, predicted) cell becomes that many images that look like `predicted` but carry label `true`.
  std::vector<int> shown, labels;
  for (int t = 0; t < 10; ++t)
    for (int p = 0; p < 10; ++p)
      for (int n = 0; n < kTable[t][p]; ++n) {
        shown.push_back(p);
        labels.push_back(t);
      }
  ASSERT_EQ(shown.size(), 3000u);
  write_flat_split(dir_, "train", shown, labels);
  write_flat_split(dir_, "test", shown, labels);
  write_perfect_checkpoint(dir_ / "perfect.veac");
  spit(dir_ / "cfg.txt", idx_config("oraclemnist", "eval", "image_size = 28\nbatch_size = 100\n"));
  const auto r = vea_cli({"eval", (dir_ / "perfect.veac").string(), (dir_ / "cfg.txt").string()});
  ASSERT_EQ(r.code, 0) << r.err;

  const auto csv = lines(slurp(dir_ / "eval" / "confusion.csv"));
  ASSERT_EQ(csv.size(), 11u);
  EXPECT_EQ(csv[0], "true\\predicted,big,sun,moon,cattle,next,field,not,arrow,time,wood");
  const std::vector<std::string> names{"big", "sun", "moon", "cattle", "next", "field", "not", "arrow", "time", "wood"};
  for (int t = 0; t < 10; ++t) {
    std::string row = names[t];
    for (int p = 0; p < 10; ++p) row += "," + std::to_string(kTable[t][p]);
    EXPECT_EQ(csv[t + 1], row);
  }
  EXPECT_EQ(r.out.rfind("accuracy=0.9720 precision=0.9720 sensitivity=0.9720 specificity=0.9969 f1=0.9720 mcc=0.9689", 0),
            0u)
      << r.out;
  EXPECT_EQ(lines(slurp(dir_ / "eval" / "metrics.csv"))[1].rfind("accuracy,0.972000,", 0), 0u);
}

TEST_F(CliTest, CheckpointClassCountMismatchExitsOne) {
  std::vector<int> classes{0, 1, 2, 3, 4, 5};
  write_flat_split(dir_, "train", classes, classes);
  write_flat_split(dir_, "test", classes, classes);
  write_perfect_checkpoint(dir_ / "perfect.veac");
  spit(dir_ / "cfg.txt", "dataset = oraclemnist\nmodel = resnet18\nnum_classes = 6\nclass_names = a,b,c,d,e,f\n"
                         "image_size = 28\ntrain_images = " + (dir_ / "train-images.idx").string() +
                             "\ntrain_labels = " + (dir_ / "train-labels.idx").string() +
                             "\ntest_images = " + (dir_ / "test-images.idx").string() +
                             "\ntest_labels = " + (dir_ / "test-labels.idx").string() +
                             "\noutput_dir = " + (dir_ / "eval").string() + "\n");
  const auto r = vea_cli({"eval", (dir_ / "perfect.veac").string(), (dir_ / "cfg.txt").string()});
  EXPECT_EQ(r.code, cli::kExitConfig);
  EXPECT_NE(r.err.find("fc.weight"), std::string::npos) << r.err;
}

TEST_F(CliTest, TruncatedCheckpointExitsTwo) {
  write_perfect_checkpoint(dir_ / "perfect.veac");
  const std::string bytes = slurp(dir_ / "perfect.veac");
  spit(dir_ / "cut.veac", bytes.substr(0, bytes.size() / 2));
  std::vector<int> classes{0, 1};
  write_flat_split(dir_, "train", classes, classes);
  write_flat_split(dir_, "test", classes, classes);
  spit(dir_ / "cfg.txt", idx_config("fashionmnist", "eval"));
  EXPECT_EQ(vea_cli({"eval", (dir_ / "cut.veac").string(), (dir_ / "cfg.txt").string()}).code, cli::kExitData);
}

TEST(Verify, AllSuitesPass) {
  const auto r = vea_cli({"verify"});
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_EQ(r.out,
            "metrics-oracle: PASS (acc=0.9720, mcc=0.9689)\n"
            "gradcheck: PASS\n"
            "bypass-equivalence: PASS\n");
}

class ReportTest : public CliTest {
 protected:
  void add_run(const std::string& name, const std::string& model, double acc, bool with_manifest = true) {
    const fs::path run = dir_ / name;
    fs::create_directories(run);
    std::ostringstream m;
    m << "{\"accuracy\": " << acc << ", \"precision\": 0.5, \"sensitivity\": 0.25, \"specificity\": 0.125, "
      << "\"f1\": 0.0625, \"mcc\": -0.5}";
    spit(run / "eval.json", "{\"model\": \"" + model + "\", \"dataset\": \"oraclemnist\", \"inference_seconds\": 1.5, " +
                                "\"macro\": " + m.str() + "}");
    if (with_manifest) spit(run / "manifest.json", "{\"train_seconds\": 12.25}");
  }
};

TEST_F(ReportTest, TwoRunsGiveTwoRowsInMetricColumnOrder) {
  add_run("base", "resnet18", 0.9);
  add_run("vea", "vea_resnet18", 0.95);
  const auto r = vea_cli({"report", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = lines(slurp(dir_ / "report.csv"));
  ASSERT_EQ(csv.size(), 3u);
  EXPECT_EQ(csv[0], "model,dataset,Accuracy,Precision,Sensitivity,Specificity,F1,MCC,train_seconds,inference_seconds");
  EXPECT_EQ(csv[1], "resnet18,oraclemnist,0.9000,0.5000,0.2500,0.1250,0.0625,-0.5000,12.2500,1.5000");
  EXPECT_EQ(csv[2], "vea_resnet18,oraclemnist,0.9500,0.5000,0.2500,0.1250,0.0625,-0.5000,12.2500,1.5000");

  const auto table = lines(r.out);
  ASSERT_EQ(table.size(), 3u);
  EXPECT_EQ(table[0].size(), table[1].size());
  EXPECT_EQ(table[1].size(), table[2].size());
  EXPECT_NE(table[2].find("0.9500"), std::string::npos);
}

TEST_F(ReportTest, SingleRunWithoutManifestLeavesTrainTimeBlank) {
  add_run("only", "vea_resnet18", 1.0, false);
  const auto r = vea_cli({"report", dir_.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = lines(slurp(dir_ / "report.csv"));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[1], "vea_resnet18,oraclemnist,1.0000,0.5000,0.2500,0.1250,0.0625,-0.5000,,1.5000");
}

TEST_F(ReportTest, EmptyOrMissingDirectoryExitsTwo) {
  EXPECT_EQ(vea_cli({"report", dir_.string()}).code, cli::kExitData);
  EXPECT_EQ(vea_cli({"report", (dir_ / "absent").string()}).code, cli::kExitData);
}

TEST(Cli, NoSubcommandIsAUsageError) { EXPECT_EQ(vea_cli({}).code, cli::kExitConfig); }

}  // namespace
