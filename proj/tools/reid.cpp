// reid: synthesize identity data, split it, train an embedding with the
// triplet objective, evaluate verification, and probe frozen embeddings.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reid/config.hpp"
#include "reid/error.hpp"
#include "reid/pipeline.hpp"

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::vector<std::string> overrides;
};

void add_global_options(CLI::App& cmd, GlobalOptions& g) {
  cmd.add_option("--config", g.config, "INI run configuration")->required()->check(CLI::ExistingFile);
  cmd.add_option("--seed", g.seed, "override every sampling seed in the config");
  cmd.add_option("--out", g.out, "output directory")->capture_default_str();
  cmd.add_option("--set", g.overrides, "override a config field: section.key=value (repeatable)");
}

reid::RunConfig load(const GlobalOptions& g) { return reid::RunConfig::from_file(g.config, g.overrides, g.seed); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patient re-identification toolkit: triplet-loss embeddings and verification metrics"};
  app.require_subcommand(1);

  GlobalOptions g;
  std::string data;
  std::string val;
  std::string ood;
  std::string checkpoint;

  auto* synth = app.add_subcommand("synth", "generate a synthetic identity manifest (data.csv, ood.csv)");
  add_global_options(*synth, g);

  auto* split = app.add_subcommand("split", "patient-disjoint train/val/test split (train.csv, val.csv, test.csv)");
  add_global_options(*split, g);
  split->add_option("--data", data, "input manifest")->required()->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "train the encoder (encoder.ckpt, history.csv)");
  add_global_options(*train, g);
  train->add_option("--data", data, "training manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--val", val, "validation manifest (patient-disjoint)")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "verification reports (report.json, roc_<setting>.csv)");
  add_global_options(*eval, g);
  eval->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "test manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--val", val, "validation manifest for threshold calibration")->required()->check(CLI::ExistingFile);
  eval->add_option("--ood", ood, "shifted manifest for the 'ood' setting")->check(CLI::ExistingFile);

  auto* probe = app.add_subcommand("probe", "linear probe on frozen embeddings (probe.json)");
  add_global_options(*probe, g);
  probe->add_option("--checkpoint", checkpoint, "encoder checkpoint")->required()->check(CLI::ExistingFile);
  probe->add_option("--data", data, "manifest with the task attribute")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto config = load(g);
    const std::filesystem::path out(g.out);
    if (synth->parsed()) {
      reid::cmd_synth(config, out);
    } else if (split->parsed()) {
      reid::cmd_split(config, data, out);
    } else if (train->parsed()) {
      reid::cmd_train(config, data, val.empty() ? std::nullopt : std::optional<std::filesystem::path>(val), out);
    } else if (eval->parsed()) {
      reid::cmd_eval(config, checkpoint, data, val,
                     ood.empty() ? std::nullopt : std::optional<std::filesystem::path>(ood), out);
    } else if (probe->parsed()) {
      reid::cmd_probe(config, checkpoint, data, out);
    }
  } catch (const reid::Error& e) {
    std::cerr << "reid: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "reid: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
