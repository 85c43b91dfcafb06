#include "vea/cli/commands.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "vea/cli/config.hpp"
#include "vea/cli/suites.hpp"
#include "vea/nn/functional.hpp"
#include "vea/train/checkpoint.hpp"

namespace vea::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string sha1_hex(const std::string& prefix, const std::string& body) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, prefix.data(), prefix.size());
  EVP_DigestUpdate(ctx, body.data(), body.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data::DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw fs::filesystem_error("cannot write", path, std::make_error_code(std::errc::io_error));
}

RunConfig resolve_config(const fs::path& config_path, const Overrides& overrides) {
  RunConfig cfg = RunConfig::load(config_path);
  for (const auto& [key, value] : overrides) cfg.set(key, value);
  cfg.validate();
  return cfg;
}

json metrics_json(const metrics::MetricReport& r) {
  return {{"accuracy", r.accuracy}, {"precision", r.precision}, {"sensitivity", r.sensitivity},
          {"specificity", r.specificity}, {"f1", r.f1}, {"mcc", r.mcc}};
}

// Maps an exception to an exit code and a one-line diagnostic.
int report_error(std::ostream& err) {
  int code = kExitInternal;
  std::string message;
  try {
    throw;
  } catch (const ConfigError& e) {
    code = kExitConfig;
    message = e.what();
  } catch (const train::CheckpointError& e) {
    const bool incompatible = e.kind() == train::CheckpointErrorKind::ShapeMismatch ||
                              e.kind() == train::CheckpointErrorKind::MissingTensor;
    code = incompatible ? kExitConfig : kExitData;
    message = e.what();
  } catch (const ShapeError& e) {
    code = kExitConfig;
    message = e.what();
  } catch (const data::DataError& e) {
    code = kExitData;
    message = e.what();
  } catch (const fs::filesystem_error& e) {
    code = kExitData;
    message = e.what();
  } catch (const train::NumericalError& e) {
    code = kExitNumerical;
    message = e.what();
  } catch (const std::exception& e) {
    message = std::string("internal: ") + e.what();
  }
  std::replace(message.begin(), message.end(), '\n', ' ');
  err << "vea: error: " << message << "\n";
  return code;
}

}  // namespace

std::string content_hash(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::string listing;
    for (const auto& f : files) {
      listing += content_hash(f) + " " + fs::relative(f, path).generic_string() + "\n";
    }
    return sha1_hex("tree " + std::to_string(listing.size()) + '\0', listing);
  }
  const std::string body = read_all(path);
  return sha1_hex("blob " + std::to_string(body.size()) + '\0', body);
}

int cmd_train(const fs::path& config_path, const Overrides& overrides, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig cfg = resolve_config(config_path, overrides);
    const train::TrainConfig tc = cfg.train_config();
    DataPair data = load_datasets(cfg);
    model::Model net = build_model(cfg);

    const fs::path dir = cfg.output_dir();
    fs::create_directories(dir);
    const std::string config_text = cfg.serialize();

    json inputs = json::object();
    for (const auto& [key, path] : cfg.input_files()) {
      inputs[key] = {{"path", path.string()}, {"sha1", content_hash(path)}};
    }

    std::vector<train::EpochStats> history;
    write_text(dir / "epochs.csv", train::epoch_stats_csv(history));
    train::TrainState state{train::Sgd(tc.momentum, tc.weight_decay), 0, 0};
    auto on_epoch = [&](const train::EpochStats& s, const train::TrainState&) {
      history.push_back(s);
      write_text(dir / "epochs.csv", train::epoch_stats_csv(history));
      out << "epoch " << s.epoch + 1 << "/" << tc.epochs << "  lr=" << s.lr << "  loss=" << fixed4(s.mean_train_loss)
          << "  train_acc=" << fixed4(s.train_accuracy) << "  test_acc=" << fixed4(s.test_accuracy) << "  ("
          << fixed4(s.epoch_seconds) << " s)\n"
          << std::flush;
    };
    const train::TrainResult result = train::train(net, data.train, &data.test, tc, state, on_epoch);

    train::save_checkpoint(dir / "model.veac",
                           train::make_checkpoint(net, &state.optimizer, config_text, tc.epochs, tc.seed, state.steps));

    const json manifest{{"config", config_text},
                        {"model", std::string(model::to_string(cfg.architecture()))},
                        {"dataset", to_string(cfg.dataset())},
                        {"seed", tc.seed},
                        {"epochs", tc.epochs},
                        {"steps", result.steps},
                        {"train_seconds", result.train_seconds},
                        {"inputs", inputs},
                        {"checkpoint", {{"path", "model.veac"}, {"sha1", content_hash(dir / "model.veac")}}}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    out << "wrote " << (dir / "epochs.csv").string() << ", " << (dir / "model.veac").string() << ", "
        << (dir / "manifest.json").string() << "\n";
    return kExitOk;
  } catch (...) {
    return report_error(err);
  }
}

int cmd_eval(const fs::path& checkpoint_path, const fs::path& config_path, const Overrides& overrides,
             std::ostream& out, std::ostream& err) {
  try {
    const RunConfig cfg = resolve_config(config_path, overrides);
    const train::Checkpoint ckpt = train::read_checkpoint(checkpoint_path);
    model::Model net = build_model(cfg);
    train::restore(ckpt, net);
    const data::Dataset test = load_test_dataset(cfg);
    const train::EvalResult result = train::evaluate(net, test, cfg.train_config().batch_size);

    const fs::path dir = cfg.output_dir();
    fs::create_directories(dir);
    write_text(dir / "metrics.csv", metrics::report_csv(result.confusion));
    write_text(dir / "confusion.csv", metrics::confusion_csv(result.confusion));
    const json summary{{"model", std::string(model::to_string(cfg.architecture()))},
                       {"dataset", to_string(cfg.dataset())},
                       {"checkpoint", checkpoint_path.string()},
                       {"samples", test.size()},
                       {"inference_seconds", result.inference_seconds},
                       {"macro", metrics_json(result.report)},
                       {"micro", metrics_json(metrics::aggregate(result.confusion, metrics::Averaging::Micro))}};
    write_text(dir / "eval.json", summary.dump(2) + "\n");

    const auto& r = result.report;
    out << "accuracy=" << fixed4(r.accuracy) << " precision=" << fixed4(r.precision)
        << " sensitivity=" << fixed4(r.sensitivity) << " specificity=" << fixed4(r.specificity)
        << " f1=" << fixed4(r.f1) << " mcc=" << fixed4(r.mcc) << "\n";
    return kExitOk;
  } catch (...) {
    return report_error(err);
  }
}

int cmd_verify(std::ostream& out, std::ostream& err) {
  try {
    bool all = true;

    const auto cm = reference_confusion();
    const auto r = metrics::aggregate(cm, metrics::Averaging::Macro);
    const bool metrics_ok = cm.trace() == 2916 && cm.total() == 3000 && std::abs(r.precision - 0.9720) <= 5e-4 &&
                            std::abs(r.sensitivity - 0.9720) <= 5e-4 && std::abs(r.f1 - 0.9720) <= 5e-4 &&
                            std::abs(r.specificity - 0.9969) <= 5e-4 && std::abs(r.mcc - 0.9689) <= 5e-4;
    out << "metrics-oracle: " << (metrics_ok ? "PASS" : "FAIL") << " (acc=" << fixed4(r.accuracy)
        << ", mcc=" << fixed4(r.mcc) << ")\n";
    all = all && metrics_ok;

    bool grad_ok = true;
    std::string failed;
    for (const auto& c : gradient_suite()) {
      if (!c.report.pass) {
        grad_ok = false;
        failed += " " + c.name;
      }
    }
    bool fault_caught = true;
    for (const auto& c : gradient_suite(1e-3, 1e-3, 0.1f)) fault_caught = fault_caught && !c.report.pass;
    if (!fault_caught) failed += " (injected fault not detected)";
    grad_ok = grad_ok && fault_caught;
    out << "gradcheck: " << (grad_ok ? "PASS" : "FAIL" + (failed.empty() ? "" : " (" + failed.substr(1) + ")")) << "\n";
    all = all && grad_ok;

    const double small = bypass_max_abs_diff(10, 28, 16, 5);
    const double large = bypass_max_abs_diff(6, 100, 16, 6);
    const bool bypass_ok = small <= 1e-6 && large <= 1e-6;
    out << "bypass-equivalence: " << (bypass_ok ? "PASS" : "FAIL");
    if (!bypass_ok) out << " (max diff " << std::max(small, large) << ")";
    out << "\n";
    all = all && bypass_ok;

    return all ? kExitOk : kExitVerifyFailed;
  } catch (...) {
    return report_error(err);
  }
}

int cmd_report(const fs::path& run_dir, std::ostream& out, std::ostream& err) {
  try {
    if (!fs::is_directory(run_dir)) throw data::DataError("run directory " + run_dir.string() + " does not exist");
    std::vector<fs::path> evals;
    for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
      if (entry.is_regular_file() && entry.path().filename() == "eval.json") evals.push_back(entry.path());
    }
    std::sort(evals.begin(), evals.end());
    if (evals.empty()) throw data::DataError("no eval.json found under " + run_dir.string());

    const std::vector<std::string> header{"model",       "dataset",     "Accuracy", "Precision",     "Sensitivity",
                                          "Specificity", "F1",          "MCC",      "train_seconds", "inference_seconds"};
    std::vector<std::vector<std::string>> rows;
    for (const auto& path : evals) {
      json e;
      try {
        e = json::parse(read_all(path));
      } catch (const json::exception& ex) {
        throw data::DataError(path.string() + ": " + ex.what());
      }
      std::string train_seconds;
      const fs::path manifest = path.parent_path() / "manifest.json";
      if (fs::exists(manifest)) {
        try {
          train_seconds = fixed4(json::parse(read_all(manifest)).at("train_seconds").get<double>());
        } catch (const json::exception& ex) {
          throw data::DataError(manifest.string() + ": " + ex.what());
        }
      }
      try {
        const json& m = e.at("macro");
        rows.push_back({e.at("model").get<std::string>(), e.at("dataset").get<std::string>(),
                        fixed4(m.at("accuracy").get<double>()), fixed4(m.at("precision").get<double>()),
                        fixed4(m.at("sensitivity").get<double>()), fixed4(m.at("specificity").get<double>()),
                        fixed4(m.at("f1").get<double>()), fixed4(m.at("mcc").get<double>()), train_seconds,
                        fixed4(e.at("inference_seconds").get<double>())});
      } catch (const json::exception& ex) {
        throw data::DataError(path.string() + ": " + ex.what());
      }
    }

    std::string csv;
    auto csv_line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) csv += (i ? "," : "") + cells[i];
      csv += "\n";
    };
    csv_line(header);
    for (const auto& row : rows) csv_line(row);
    write_text(run_dir / "report.csv", csv);

    std::vector<std::size_t> width(header.size());
    for (std::size_t c = 0; c < header.size(); ++c) {
      width[c] = header[c].size();
      for (const auto& row : rows) width[c] = std::max(width[c], std::max<std::size_t>(row[c].size(), 1));
    }
    auto text_line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::string cell = cells[c].empty() ? "-" : cells[c];
        if (c) out << "  ";
        // names left, numbers right
        if (c < 2) {
          out << std::left << std::setw(static_cast<int>(width[c])) << cell;
        } else {
          out << std::right << std::setw(static_cast<int>(width[c])) << cell;
        }
      }
      out << "\n";
    };
    text_line(header);
    for (const auto& row : rows) text_line(row);
    return kExitOk;
  } catch (...) {
    return report_error(err);
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train and evaluate ResNet-18 and VEA-ResNet-18 image classifiers"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // Every config key is also a `--key value` flag on train and eval.
  std::map<std::string, std::string> flag_values;
  auto add_overrides = [&](CLI::App* cmd) {
    for (const auto& key : config_keys()) cmd->add_option(std::string("--") + key.name, flag_values[key.name], key.help);
  };
  auto collect = [&](CLI::App* cmd) {
    Overrides overrides;
    for (const auto& key : config_keys()) {
      if (cmd->count(std::string("--") + key.name) > 0) overrides.emplace_back(key.name, flag_values[key.name]);
    }
    return overrides;
  };

  std::string config_path, checkpoint_path, run_dir;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write epochs.csv, model.veac and manifest.json");
  train_cmd->add_option("config", config_path, "Run configuration file")->required();
  add_overrides(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the configured test split");
  eval_cmd->add_option("checkpoint", checkpoint_path, "Checkpoint written by train")->required();
  eval_cmd->add_option("config", config_path, "Run configuration file")->required();
  add_overrides(eval_cmd);

  auto* verify_cmd = app.add_subcommand("verify", "Run the built-in metric, gradient and gating checks");

  auto* report_cmd = app.add_subcommand("report", "Tabulate every evaluated run under a directory");
  report_cmd->add_option("run_dir", run_dir, "Directory holding run outputs")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "vea: error: " << e.what() << "\n";
    return kExitConfig;
  }

  nn::apply_thread_env();
  if (*train_cmd) return cmd_train(config_path, collect(train_cmd), out, err);
  if (*eval_cmd) return cmd_eval(checkpoint_path, config_path, collect(eval_cmd), out, err);
  if (*verify_cmd) return cmd_verify(out, err);
  return cmd_report(run_dir, out, err);
}

}  // namespace vea::cli
