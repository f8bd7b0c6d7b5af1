#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "reid/config.hpp"
#include "reid/pipeline.hpp"
#include "test_support.hpp"

using namespace reid;
using reid::testing::TempDir;

namespace {

const char* kConfig = R"(
[synthetic]
num_identities = 16
visits_per_identity = 3
latent_dim = 4
ambient_dim = 10
visit_noise_sigma = 0.5
projection_seed = 1
sample_seed = 2

[attribute:gender]
kind = categorical
values = F, M
signal_strength = 2.0

[attribute:age]
kind = numeric
signal_strength = 1.0

[ood]
sample_seed = 3
offset_scale = 1.0
noise_multiplier = 2.0

[split]
train = 0.5
validation = 0.25
test = 0.25
seed = 4

[encoder]
hidden_dims = 12
output_dim = 6
init_seed = 5

[train]
batch_size = 12
epochs = 3
triplets_per_batch = 24
seed = 6
val_pairs = 20
val_triplets = 20

[eval]
settings = random, same_attribute:gender, ood
n_pos = 10
n_neg = 20
seed = 7
clamp_to_available = true

[probe]
task_attribute = gender
epochs = 100
seed = 8
)";

struct CommandResult {
  int status = 0;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  const std::string cmd = std::string(REID_CLI_PATH) + " " + args + " 2>&1";
  CommandResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return {-1, "popen failed"};
  char buf[4096];
  while (std::fgets(buf, sizeof(buf), pipe)) r.output += buf;
  const int status = pclose(pipe);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) { return read_file(p); }

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

// Runs synth -> split -> train -> eval -> probe in `dir`.
void run_all(const TempDir& dir, const std::string& cfg, const std::string& extra = "") {
  const auto d = dir.path().string();
  const std::string common = " --config " + cfg + " --out " + d + extra;
  ASSERT_EQ(run_cli("synth" + common).status, 0);
  ASSERT_EQ(run_cli("split --data " + d + "/data.csv" + common).status, 0);
  const auto train = run_cli("train --data " + d + "/train.csv --val " + d + "/val.csv" + common);
  ASSERT_EQ(train.status, 0) << train.output;
  const auto eval = run_cli("eval --checkpoint " + d + "/encoder.ckpt --data " + d + "/test.csv --val " + d +
                            "/val.csv --ood " + d + "/ood.csv" + common);
  ASSERT_EQ(eval.status, 0) << eval.output;
  const auto probe = run_cli("probe --checkpoint " + d + "/encoder.ckpt --data " + d + "/test.csv" + common);
  ASSERT_EQ(probe.status, 0) << probe.output;
}

}  // namespace

TEST(Config, ParsesSectionsAndOverrides) {
  const auto cfg = RunConfig::from_text(kConfig);
  const auto s = cfg.synthetic();
  EXPECT_EQ(s.num_identities, 16u);
  EXPECT_EQ(s.visits_min, 3u);
  ASSERT_EQ(s.attributes.size(), 2u);
  EXPECT_EQ(cfg.encoder().hidden_dims, (std::vector<std::size_t>{12}));
  EXPECT_EQ(cfg.eval().settings.size(), 3u);
  EXPECT_EQ(cfg.train().mining, MiningStrategy::semi_hard_negative);

  TempDir dir;
  write_text(dir / "c.ini", kConfig);
  const auto over = RunConfig::from_file(dir / "c.ini", {"synthetic.visits_per_identity=2-5", "train.mining=hardest"}, 99);
  EXPECT_EQ(over.synthetic().visits_min, 2u);
  EXPECT_EQ(over.synthetic().visits_max, 5u);
  EXPECT_EQ(over.train().mining, MiningStrategy::hardest_negative);
  EXPECT_EQ(over.train().seed, 99u);
  EXPECT_EQ(over.synthetic().projection_seed, 1u);
}

TEST(Config, RejectsUnknownAndMissingFields) {
  EXPECT_THROW(RunConfig::from_text(std::string(kConfig) + "\n[train2]\nx = 1\n"), Error);
  EXPECT_THROW(RunConfig::from_text("[train]\nepochz = 3\n"), Error);
  try {
    RunConfig::from_text("[synthetic]\nnum_identities = 3\n").synthetic();
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("synthetic.visits_per_identity"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunConfig::from_text("[eval]\ncriterion = best\nseed = 1\n").eval(), Error);
  EXPECT_THROW(RunConfig::from_text("[train]\nseed = 1\nepochs = -2\n").train(), Error);
}

TEST(Cli, SynthIsDeterministicAndReloads) {
  TempDir a, b;
  write_text(a / "c.ini", kConfig);
  ASSERT_EQ(run_cli("synth --config " + (a / "c.ini").string() + " --out " + a.path().string()).status, 0);
  ASSERT_EQ(run_cli("synth --config " + (a / "c.ini").string() + " --out " + b.path().string()).status, 0);
  for (const char* f : {"data.csv", "data.schema.json", "ood.csv", "ood.schema.json"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const auto d = load_manifest(a / "data.csv");
  EXPECT_EQ(d.size(), 48u);
  EXPECT_EQ(d, generate_synthetic(RunConfig::from_text(kConfig).synthetic()));
}

TEST(Cli, MissingFieldIsNamed) {
  TempDir dir;
  std::string text = kConfig;
  text.erase(text.find("latent_dim = 4\n"), 15);
  write_text(dir / "c.ini", text);
  const auto r = run_cli("synth --config " + (dir / "c.ini").string() + " --out " + dir.path().string());
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("synthetic.latent_dim"), std::string::npos) << r.output;
  EXPECT_FALSE(std::filesystem::exists(dir / "data.csv"));
}

TEST(Cli, HelpAndUnknownFlags) {
  const auto top = run_cli("--help");
  EXPECT_EQ(top.status, 0);
  for (const char* sub : {"synth", "split", "train", "eval", "probe"}) {
    EXPECT_NE(top.output.find(sub), std::string::npos) << sub;
    const auto h = run_cli(std::string(sub) + " --help");
    EXPECT_EQ(h.status, 0) << sub;
    for (const char* flag : {"--config", "--seed", "--out", "--set"}) {
      EXPECT_NE(h.output.find(flag), std::string::npos) << sub << " " << flag;
    }
  }
  EXPECT_NE(run_cli("eval --help").output.find("--ood"), std::string::npos);
  EXPECT_NE(run_cli("synth --bogus").status, 0);
  EXPECT_NE(run_cli("").status, 0);
}

TEST(Cli, ZeroEpochsWritesInitialization) {
  TempDir dir;
  write_text(dir / "c.ini", kConfig);
  const auto cfg = (dir / "c.ini").string();
  const auto d = dir.path().string();
  ASSERT_EQ(run_cli("synth --config " + cfg + " --out " + d).status, 0);
  const auto r = run_cli("train --config " + cfg + " --out " + d + " --data " + d + "/data.csv --set train.epochs=0");
  ASSERT_EQ(r.status, 0) << r.output;
  auto enc = RunConfig::from_text(kConfig).encoder();
  enc.input_dim = 10;
  EXPECT_EQ(load_checkpoint(dir / "encoder.ckpt"), init_params(enc));
  EXPECT_EQ(slurp(dir / "history.csv"), "epoch,train_loss,val_loss,val_auroc\n");
}

TEST(Cli, FullPipelineOutputsAndDeterminism) {
  TempDir a, b;
  write_text(a / "c.ini", kConfig);
  run_all(a, (a / "c.ini").string());
  run_all(b, (a / "c.ini").string());
  for (const char* f : {"data.csv", "ood.csv", "train.csv", "val.csv", "test.csv", "encoder.ckpt", "history.csv",
                        "report.json", "roc_random.csv", "roc_same_attribute_gender.csv", "roc_ood.csv", "probe.json"}) {
    ASSERT_TRUE(std::filesystem::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }

  std::istringstream history(slurp(a / "history.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(history, line)) ++rows;
  EXPECT_EQ(rows, 1u + 3u);

  const auto report = nlohmann::json::parse(slurp(a / "report.json"));
  ASSERT_TRUE(report.is_array());
  ASSERT_EQ(report.size(), 3u);
  EXPECT_EQ(report[0]["setting"], "random");
  EXPECT_EQ(report[1]["setting"], "same_attribute:gender");
  EXPECT_EQ(report[2]["setting"], "ood");
  for (const auto& r : report) {
    EXPECT_TRUE(r["setting"].is_string());
    EXPECT_TRUE(r["n_pos"].is_number_unsigned());
    EXPECT_TRUE(r["n_neg"].is_number_unsigned());
    EXPECT_GE(r["auroc"].get<double>(), 0.0);
    EXPECT_LE(r["auroc"].get<double>(), 1.0);
    EXPECT_TRUE(r["eer"].is_number());
    EXPECT_TRUE(r["tpr_at_fpr"].contains("0.01"));
    EXPECT_TRUE(r["threshold"].is_number());
    EXPECT_TRUE(r["test_accuracy"].is_number());
  }
  const auto probe = nlohmann::json::parse(slurp(a / "probe.json"));
  EXPECT_EQ(probe["task"], "gender");
  EXPECT_TRUE(probe["majority_baseline"].is_number());
  EXPECT_TRUE(probe["accuracy"].is_number());
  EXPECT_TRUE(probe["per_class_auroc"].contains("F"));

  // a different seed changes the outputs
  TempDir c;
  run_all(c, (a / "c.ini").string(), " --seed 123");
  EXPECT_NE(slurp(a / "data.csv"), slurp(c / "data.csv"));
}

TEST(Cli, ProbeUnknownAttributeListsSchema) {
  TempDir dir;
  write_text(dir / "c.ini", kConfig);
  const auto cfg = (dir / "c.ini").string();
  const auto d = dir.path().string();
  ASSERT_EQ(run_cli("synth --config " + cfg + " --out " + d).status, 0);
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + d + " --data " + d + "/data.csv").status, 0);
  const auto r = run_cli("probe --config " + cfg + " --out " + d + " --checkpoint " + d + "/encoder.ckpt --data " + d +
                         "/data.csv --set probe.task_attribute=species");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("species"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("age, gender"), std::string::npos) << r.output;
  EXPECT_FALSE(std::filesystem::exists(dir / "probe.json"));
}

TEST(Cli, FailedEvalLeavesNoOutputs) {
  TempDir dir;
  write_text(dir / "c.ini", kConfig);
  const auto cfg = (dir / "c.ini").string();
  const auto d = dir.path().string();
  ASSERT_EQ(run_cli("synth --config " + cfg + " --out " + d).status, 0);
  ASSERT_EQ(run_cli("split --config " + cfg + " --out " + d + " --data " + d + "/data.csv").status, 0);
  ASSERT_EQ(run_cli("train --config " + cfg + " --out " + d + " --data " + d + "/train.csv").status, 0);
  // ood requested but no --ood manifest given
  const auto r = run_cli("eval --config " + cfg + " --out " + d + "/rep --checkpoint " + d + "/encoder.ckpt --data " +
                         d + "/test.csv --val " + d + "/val.csv");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("ood"), std::string::npos) << r.output;
  EXPECT_FALSE(std::filesystem::exists(dir / "rep" / "report.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "rep" / "roc_random.csv"));
}
