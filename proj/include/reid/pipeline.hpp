#pragma once

// The end-to-end commands behind the `reid` executable. Each command stages
// its outputs and publishes them only after every one was produced and
// re-validated.

#include <cctype>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reid/config.hpp"
#include "reid/dataset.hpp"
#include "reid/encoder.hpp"
#include "reid/eval.hpp"
#include "reid/io.hpp"
#include "reid/probe.hpp"
#include "reid/trainer.hpp"

namespace reid {

namespace fs = std::filesystem;

namespace detail {

inline void stage_manifest(OutputBatch& batch, const DataSet& dataset, const fs::path& path) {
  auto csv = manifest_to_csv(dataset);
  auto schema = schema_to_json(dataset);
  // reload the exact bytes before publishing them
  const auto reloaded = parse_manifest(csv, parse_schema_json(schema, "schema"), path.string());
  require(reloaded == dataset, ErrorKind::io, "manifest '" + path.string() + "' does not round-trip");
  batch.add(path, std::move(csv));
  batch.add(schema_path_for(path), std::move(schema));
}

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), ErrorKind::io, "cannot create output directory '" + dir.string() + "'");
}

inline std::string file_stem_for(const std::string& setting) {
  std::string out;
  for (char c : setting) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '_';
  return out;
}

}  // namespace detail

// Writes data.csv (+ ood.csv when an [ood] section is present).
inline void cmd_synth(const RunConfig& config, const fs::path& out_dir) {
  const auto synth = config.synthetic();
  const auto ood = config.ood();
  detail::ensure_dir(out_dir);
  OutputBatch batch;
  detail::stage_manifest(batch, generate_synthetic(synth), out_dir / "data.csv");
  if (ood) {
    auto shifted = synth;
    shifted.sample_seed = ood->sample_seed;
    if (ood->num_identities > 0) shifted.num_identities = ood->num_identities;
    shifted.ood_shift = ood->shift;
    shifted.id_prefix = "OOD" + synth.id_prefix;
    detail::stage_manifest(batch, generate_synthetic(shifted), out_dir / "ood.csv");
  }
  batch.commit();
}

// Writes train.csv, val.csv and test.csv.
inline void cmd_split(const RunConfig& config, const fs::path& data_path, const fs::path& out_dir) {
  const auto spec = config.split();
  const auto dataset = load_manifest(data_path);
  const auto parts = split_by_patient(dataset, spec);
  detail::ensure_dir(out_dir);
  OutputBatch batch;
  detail::stage_manifest(batch, parts.train, out_dir / "train.csv");
  detail::stage_manifest(batch, parts.validation, out_dir / "val.csv");
  detail::stage_manifest(batch, parts.test, out_dir / "test.csv");
  batch.commit();
}

// Writes encoder.ckpt and history.csv.
inline void cmd_train(const RunConfig& config, const fs::path& data_path, const std::optional<fs::path>& val_path,
                      const fs::path& out_dir) {
  auto encoder_config = config.encoder();
  const auto train_config = config.train();
  const auto train_set = load_manifest(data_path);
  const DataSet val_set = val_path ? load_manifest(*val_path) : DataSet{{}, train_set.ambient_dim, train_set.schema};
  encoder_config.input_dim = train_set.ambient_dim;
  const auto initial = init_params(encoder_config);
  const auto result = train(train_config, initial, train_set, val_set);

  detail::ensure_dir(out_dir);
  auto bytes = checkpoint_bytes(result.params);
  require(parse_checkpoint(bytes) == result.params, ErrorKind::io, "checkpoint does not round-trip");
  OutputBatch batch;
  batch.add(out_dir / "encoder.ckpt", std::move(bytes));
  batch.add(out_dir / "history.csv", history_csv(result.history));
  batch.commit();
}

inline std::vector<PairSetting> parse_settings(const std::vector<std::string>& names, const DataSet* ood) {
  std::vector<PairSetting> settings;
  for (const auto& name : names) {
    if (name == "random") {
      settings.push_back(PairSetting::random());
    } else if (name.rfind("same_attribute:", 0) == 0) {
      settings.push_back(PairSetting::same_attribute(name.substr(15)));
    } else if (name == "ood") {
      require(ood != nullptr, ErrorKind::invalid_argument, "setting 'ood' needs an OOD manifest (--ood)");
      settings.push_back(PairSetting::ood(*ood));
    } else {
      fail(ErrorKind::invalid_argument, "unknown evaluation setting '" + name + "' (random|same_attribute:<name>|ood)");
    }
  }
  return settings;
}

// Writes report.json (one object per setting) and roc_<setting>.csv.
inline void cmd_eval(const RunConfig& config, const fs::path& checkpoint, const fs::path& data_path,
                     const fs::path& val_path, const std::optional<fs::path>& ood_path, const fs::path& out_dir) {
  const auto eval_settings = config.eval();
  const auto params = load_checkpoint(checkpoint);
  const auto test_set = load_manifest(data_path);
  const auto val_set = load_manifest(val_path);
  std::optional<DataSet> ood_set;
  if (ood_path) ood_set = load_manifest(*ood_path);
  const auto settings = parse_settings(eval_settings.settings, ood_set ? &*ood_set : nullptr);
  const auto reports = evaluate(params, test_set, settings, eval_settings.config, val_set);

  detail::ensure_dir(out_dir);
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  OutputBatch batch;
  for (const auto& report : reports) {
    require(report.auroc >= 0.0 && report.auroc <= 1.0 && std::isfinite(report.threshold), ErrorKind::non_finite,
            "report for '" + report.setting + "' failed validation");
    doc.push_back(report_json(report));
    batch.add(out_dir / ("roc_" + detail::file_stem_for(report.setting) + ".csv"), roc_csv(report.curve));
  }
  batch.add(out_dir / "report.json", doc.dump(2) + "\n");
  batch.commit();
}

struct ProbeRun {
  ProbeReport report;
  LinearProbe probe;
};

// Fits the probe on a patient-disjoint share of `dataset` and reports on the rest.
inline ProbeRun run_probe(const EncoderParams& params, const DataSet& dataset, const ProbeConfig& config) {
  require(config.train_fraction > 0.0 && config.train_fraction < 1.0, ErrorKind::invalid_argument,
          "probe.train_fraction must be in (0, 1)");
  require(dataset.schema.count(config.task_attribute) == 1, ErrorKind::invalid_argument,
          "unknown attribute '" + config.task_attribute + "'; available: " + available_attributes(dataset));
  const auto parts =
      partition_by_patient(dataset, {config.train_fraction, 1.0 - config.train_fraction}, derive_seed(config.seed, 0x9B));
  const auto fit = extract_embeddings(params, parts[0], config.task_attribute, config.bucket_boundaries);
  const auto held_out = extract_embeddings(params, parts[1], config.task_attribute, config.bucket_boundaries);
  auto probe = train_probe(fit, config);
  auto report = probe_metrics(probe, held_out, config.task_attribute);
  return {std::move(report), std::move(probe)};
}

// Writes probe.json.
inline void cmd_probe(const RunConfig& config, const fs::path& checkpoint, const fs::path& data_path,
                      const fs::path& out_dir) {
  const auto probe_config = config.probe();
  const auto params = load_checkpoint(checkpoint);
  const auto dataset = load_manifest(data_path);
  const auto run = run_probe(params, dataset, probe_config);
  detail::ensure_dir(out_dir);
  write_file_atomic(out_dir / "probe.json", probe_report_json(run.report).dump(2) + "\n");
}

}  // namespace reid
