#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <unistd.h>

#include "racdnn/data.h"
#include "racdnn/error.h"
#include "racdnn/network.h"
#include "racdnn_cli/checkpoint.h"
#include "racdnn_cli/commands.h"
#include "racdnn_cli/config.h"
#include "racdnn_cli/errors.h"

namespace racdnn::cli {
namespace {

namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

struct CliResult {
  int status = 0;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "racdnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.status = run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("racdnn_cli_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Checkpoint sample_checkpoint() {
  Checkpoint ckpt;
  ckpt.put("a/weight", Tensor::from({2, 3}, {1, -2, 3.5, 0, 1e-300, -7}));
  ckpt.put("a/step", Tensor::from({1}, {4}));
  ckpt.config = {{"initial", {{"preset", "tiny"}, {"seed", 3}}}};
  return ckpt;
}

TEST(Checkpoint, EncodeDecodeEncodeIsByteIdentical) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  const Checkpoint decoded = decode_checkpoint(bytes);
  ASSERT_EQ(decoded.records.size(), 2u);
  EXPECT_EQ(decoded.records[0].name, "a/weight");
  EXPECT_EQ(decoded.records[0].shape, (Shape{2, 3}));
  EXPECT_EQ(decoded.records[0].values[4], 1e-300);
  EXPECT_EQ(decoded.config["initial"]["preset"], "tiny");
  EXPECT_EQ(encode_checkpoint(decoded), bytes);
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  ASSERT_GE(bytes.size(), 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RACD");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  EXPECT_EQ(bytes[8], 2);
}

void expect_checkpoint_error(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint(bytes);
    ADD_FAILURE() << "decode accepted malformed bytes";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCheckpoint) << e.what();
  }
}

TEST(Checkpoint, RejectsBadMagic) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[0] = 'X';
  expect_checkpoint_error(bytes);
}

TEST(Checkpoint, RejectsOtherVersion) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[4] = 2;
  expect_checkpoint_error(bytes);
}

TEST(Checkpoint, RejectsEveryTruncation) {
  const auto bytes = encode_checkpoint(sample_checkpoint());
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    expect_checkpoint_error(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n)));
  }
}

TEST(Checkpoint, RejectsTrailingBytes) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes.push_back(0);
  expect_checkpoint_error(bytes);
}

TEST(Checkpoint, RejectsImplausibleShape) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  // First record: name length at 16, name (8 bytes), rank at 28, dims from 32.
  for (int k = 0; k < 8; ++k) bytes[32 + k] = 0xff;
  expect_checkpoint_error(bytes);
}

TEST(Checkpoint, ParametersRestoreIntoFreshNetwork) {
  const Preset preset = make_preset("tiny");
  SaliencyNet source(preset, 1), target(preset, 2);
  Checkpoint ckpt;
  store_parameters(ckpt, "init", source.parameters());
  auto params = target.parameters();
  restore_parameters(ckpt, "init", params);
  const Tensor images = Tensor::from({2, 3, 16, 16}, std::vector<double>(2 * 3 * 16 * 16, 0.25));
  const Tensor a = source.forward(images, Mode::kInfer), b = target.forward(images, Mode::kInfer);
  ASSERT_EQ(a.numel(), b.numel());
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Checkpoint, RestoreRejectsMissingOrMisshapenRecords) {
  const Preset preset = make_preset("tiny");
  SaliencyNet net(preset, 1);
  auto params = net.parameters();
  Checkpoint empty;
  EXPECT_THROW(restore_parameters(empty, "init", params), Error);
  Checkpoint ckpt;
  store_parameters(ckpt, "init", params);
  ckpt.records.front().shape.push_back(1);
  EXPECT_THROW(restore_parameters(ckpt, "init", params), Error);
}

TEST(Config, JsonOverlayRecordsExplicitKeys) {
  RunConfig config;
  apply_json({{"preset", "tiny"}, {"epochs", 3}, {"lr_refine", 5e-5}}, config);
  EXPECT_EQ(config.preset, "tiny");
  EXPECT_EQ(config.epochs, 3u);
  EXPECT_EQ(config.lr_refine, 5e-5);
  EXPECT_EQ(config.batch_size, 8u);
  EXPECT_TRUE(config.explicit_keys.count("epochs"));
  EXPECT_FALSE(config.explicit_keys.count("batch_size"));
}

TEST(Config, RejectsUnknownKeysAndTypeMismatches) {
  RunConfig config;
  EXPECT_THROW(apply_json({{"learning_rate", 1.0}}, config), UsageError);
  EXPECT_THROW(apply_json({{"epochs", "ten"}}, config), UsageError);
}

TEST(Config, ValidateRejectsOutOfRangeFields) {
  auto invalid = [](auto mutate) {
    RunConfig c;
    mutate(c);
    EXPECT_THROW(validate(c), UsageError);
  };
  invalid([](RunConfig& c) { c.preset = "huge"; });
  invalid([](RunConfig& c) { c.iterations = 0; });
  invalid([](RunConfig& c) { c.batch_size = 1; });
  invalid([](RunConfig& c) { c.optimizer_refine = "sgd"; });
  invalid([](RunConfig& c) { c.lr_initial = 0; });
  invalid([](RunConfig& c) { c.patience = 0; });
  invalid([](RunConfig& c) { c.stage = "final"; });
  EXPECT_NO_THROW(validate(RunConfig{}));
}

TEST(Config, JsonRoundTrip) {
  RunConfig a;
  a.preset = "tiny";
  a.seed = 77;
  a.optimizer_initial = "rmsprop";
  RunConfig b;
  apply_json(to_json(a), b);
  EXPECT_EQ(to_json(b), to_json(a));
  EXPECT_FALSE(model_json(a).contains("out_ckpt"));
}

class CliExit : public ::testing::Test {
 protected:
  void SetUp() override { ::unsetenv("RACDNN_SEED"); }
  void TearDown() override { ::unsetenv("RACDNN_SEED"); }
};

TEST_F(CliExit, NoSubcommandIsUsageError) {
  const auto r = cli({});
  EXPECT_EQ(r.status, kExitUsage);
  EXPECT_EQ(r.err.rfind("racdnn: usage error:", 0), 0u) << r.err;
}

TEST_F(CliExit, UnknownFlagIsUsageError) { EXPECT_EQ(cli({"gen-data", "--bogus", "1"}).status, kExitUsage); }

TEST_F(CliExit, OutOfRangeValueIsUsageError) {
  const auto r = cli({"train-init", "--batch-size", "1", "--data", "x", "--out-ckpt", "y"});
  EXPECT_EQ(r.status, kExitUsage);
}

TEST_F(CliExit, MissingInitCheckpointIsUsageError) {
  const auto dir = fresh_dir("missing_init");
  const auto r = cli({"train-refine", "--data", (dir / "manifest.tsv").string(), "--out-ckpt",
                      (dir / "r.ckpt").string()});
  EXPECT_EQ(r.status, kExitUsage);
  EXPECT_NE(r.err.find("--init-ckpt"), std::string::npos) << r.err;
}

TEST_F(CliExit, MissingDataIsDataError) {
  const auto dir = fresh_dir("missing_data");
  const auto r = cli({"train-init", "--data", (dir / "absent.tsv").string(), "--out-ckpt", (dir / "i.ckpt").string()});
  EXPECT_EQ(r.status, kExitData);
  EXPECT_EQ(r.err.rfind("racdnn: data error:", 0), 0u) << r.err;
  EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST_F(CliExit, CorruptCheckpointIsDataError) {
  const auto dir = fresh_dir("corrupt");
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  const auto r = cli({"infer", "--ckpt", (dir / "bad.ckpt").string(), "--image", "x.ppm", "--out", "y.pgm"});
  EXPECT_EQ(r.status, kExitData);
}

TEST_F(CliExit, MalformedConfigFileIsUsageError) {
  const auto dir = fresh_dir("config");
  std::ofstream(dir / "c.json") << R"({"epochs": 2, "unknown": 1})";
  EXPECT_EQ(cli({"--config", (dir / "c.json").string(), "gen-data", "--out", dir.string()}).status, kExitUsage);
}

TEST_F(CliExit, BadSeedEnvironmentIsUsageError) {
  ::setenv("RACDNN_SEED", "12x", 1);
  const auto dir = fresh_dir("bad_env");
  EXPECT_EQ(cli({"gen-data", "--count", "1", "--out", dir.string()}).status, kExitUsage);
}

TEST_F(CliExit, HelpExitsZero) { EXPECT_EQ(cli({"--help"}).status, kExitOk); }

class GenData : public CliExit {};

TEST_F(GenData, ZeroCountWritesEmptyManifest) {
  const auto dir = fresh_dir("gen_empty");
  ASSERT_EQ(cli({"gen-data", "--count", "0", "--out", dir.string()}).status, kExitOk);
  ASSERT_TRUE(fs::exists(dir / "manifest.tsv"));
  EXPECT_TRUE(read_manifest(dir / "manifest.tsv").empty());
}

TEST_F(GenData, SameFlagsGiveIdenticalBytes) {
  const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  for (const auto& dir : {a, b}) {
    ASSERT_EQ(cli({"gen-data", "--count", "3", "--size", "24", "--seed", "9", "--out", dir.string()}).status,
              kExitOk);
  }
  EXPECT_EQ(read_bytes(a / "manifest.tsv"), read_bytes(b / "manifest.tsv"));
  for (const auto& entry : read_manifest(a / "manifest.tsv")) {
    const auto rel_image = fs::relative(entry.image, a), rel_mask = fs::relative(entry.mask, a);
    EXPECT_EQ(read_bytes(a / rel_image), read_bytes(b / rel_image));
    EXPECT_EQ(read_bytes(a / rel_mask), read_bytes(b / rel_mask));
  }
}

TEST_F(GenData, SeedEnvironmentOverridesFlagAndConfig) {
  const auto from_flag = fresh_dir("seed_flag"), from_env = fresh_dir("seed_env"), other = fresh_dir("seed_other");
  std::ofstream(from_env / "c.json") << R"({"seed": 1})";
  ASSERT_EQ(cli({"gen-data", "--count", "2", "--size", "24", "--seed", "4", "--out", from_flag.string()}).status,
            kExitOk);
  ASSERT_EQ(cli({"gen-data", "--count", "2", "--size", "24", "--seed", "5", "--out", other.string()}).status, kExitOk);
  ::setenv("RACDNN_SEED", "4", 1);
  ASSERT_EQ(cli({"--config", (from_env / "c.json").string(), "gen-data", "--count", "2", "--size", "24", "--seed",
                 "2", "--out", from_env.string()})
                .status,
            kExitOk);
  const auto first = read_manifest(from_flag / "manifest.tsv").front();
  const auto image = fs::relative(first.image, from_flag);
  EXPECT_EQ(read_bytes(from_env / image), read_bytes(from_flag / image));
  EXPECT_NE(read_bytes(other / image), read_bytes(from_flag / image));
}

TEST_F(GenData, FlagOverridesConfigFile) {
  const auto a = fresh_dir("override");
  std::ofstream(a / "c.json") << R"({"count": 5, "size": 24})";
  ASSERT_EQ(cli({"--config", (a / "c.json").string(), "gen-data", "--count", "2", "--out", a.string()}).status,
            kExitOk);
  EXPECT_EQ(read_manifest(a / "manifest.tsv").size(), 2u);
  const auto first = read_manifest(a / "manifest.tsv").front();
  const ByteImage image = read_pnm(first.image);
  EXPECT_EQ(image.width, 24u);
}

// One small trained pipeline shared by the end-to-end tests.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ::unsetenv("RACDNN_SEED");
    dir_ = fresh_dir("pipeline");
    const std::string d = dir_.string();
    auto ok = [](const CliResult& r) {
      if (r.status != kExitOk) throw std::runtime_error(r.err);
      return r;
    };
    ok(cli({"gen-data", "--count", "12", "--size", "32", "--seed", "3", "--out", d + "/data"}));
    init_log_ = ok(cli({"train-init", "--preset", "tiny", "--data", d + "/data/manifest.tsv", "--epochs", "2",
                        "--batch-size", "4", "--seed", "5", "--out-ckpt", d + "/init.ckpt"}))
                    .out;
    ok(cli({"train-refine", "--init-ckpt", d + "/init.ckpt", "--data", d + "/data/manifest.tsv", "--epochs", "1",
            "--batch-size", "4", "--iters", "4", "--seed", "7", "--out-ckpt", d + "/refine.ckpt"}));
    image_ = read_manifest(dir_ / "data" / "manifest.tsv").front().image;
  }

  static inline fs::path dir_;
  static inline fs::path image_;
  static inline std::string init_log_;
};

TEST_F(Pipeline, TrainInitLogsOneRowPerEpoch) {
  std::istringstream in(init_log_);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && (std::isdigit(static_cast<unsigned char>(line[0])) || line.rfind("epoch,", 0) == 0)) {
      lines.push_back(line);
    }
  }
  ASSERT_EQ(lines.size(), 3u) << init_log_;
  EXPECT_EQ(lines[0], "epoch,train_bce,val_bce");
}

TEST_F(Pipeline, CheckpointsHoldExpectedRecords) {
  const Checkpoint init = load_checkpoint(dir_ / "init.ckpt");
  EXPECT_TRUE(init.has_prefix("init"));
  EXPECT_TRUE(init.has_prefix("optim/init"));
  EXPECT_FALSE(init.has_prefix("refine"));
  const Checkpoint refine = load_checkpoint(dir_ / "refine.ckpt");
  EXPECT_TRUE(refine.has_prefix("init"));
  EXPECT_TRUE(refine.has_prefix("refine"));
  EXPECT_TRUE(refine.has_prefix("optim/refine"));
  const LoadedModels models = load_models(refine);
  ASSERT_TRUE(models.refine_config.has_value());
  EXPECT_EQ(models.refine_config->iterations, 4u);
  EXPECT_EQ(models.initial_config.preset, "tiny");
}

TEST_F(Pipeline, CheckpointFileRoundTripsByteIdentical) {
  const auto bytes = read_bytes(dir_ / "refine.ckpt");
  save_checkpoint(dir_ / "copy.ckpt", load_checkpoint(dir_ / "refine.ckpt"));
  EXPECT_EQ(read_bytes(dir_ / "copy.ckpt"), bytes);
}

TEST_F(Pipeline, ZeroEpochTrainInitStoresUntrainedNetwork) {
  const std::string d = dir_.string();
  ASSERT_EQ(cli({"train-init", "--preset", "tiny", "--data", d + "/data/manifest.tsv", "--epochs", "0", "--seed", "5",
                 "--out-ckpt", d + "/zero.ckpt"})
                .status,
            kExitOk);
  const LoadedModels loaded = load_models(load_checkpoint(dir_ / "zero.ckpt"));
  SaliencyNet fresh(make_preset("tiny"), 5);
  auto a = loaded.initial->parameters(), b = fresh.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].name, b[i].name);
    EXPECT_TRUE(std::equal(a[i].tensor.data().begin(), a[i].tensor.data().end(), b[i].tensor.data().begin()))
        << a[i].name;
  }
}

TEST_F(Pipeline, EvalWritesSummaryAndCurve) {
  const std::string d = dir_.string();
  ASSERT_EQ(cli({"eval", "--ckpt", d + "/refine.ckpt", "--data", d + "/data/manifest.tsv", "--report-dir",
                 d + "/report"})
                .status,
            kExitOk);
  const auto summary = read_lines(dir_ / "report" / "summary.csv");
  ASSERT_EQ(summary.size(), 2u);
  EXPECT_EQ(summary[0], "stage,max_f,mae");
  EXPECT_EQ(summary[1].rfind("refined,", 0), 0u);
  double f = -1, mae = -1;
  ASSERT_EQ(std::sscanf(summary[1].c_str(), "refined,%lf,%lf", &f, &mae), 2);
  EXPECT_GE(f, 0.0);
  EXPECT_LE(f, 1.0);
  EXPECT_GE(mae, 0.0);
  EXPECT_LE(mae, 1.0);
  EXPECT_EQ(read_lines(dir_ / "report" / "pr_refined.csv").size(), 257u);  // header plus one row per threshold
}

TEST_F(Pipeline, EvalIsIndependentOfThreadCount) {
  const std::string d = dir_.string();
  for (const char* threads : {"1", "3"}) {
    ASSERT_EQ(cli({"eval", "--ckpt", d + "/refine.ckpt", "--data", d + "/data/manifest.tsv", "--stage", "initial",
                   "--threads", threads, "--report-dir", d + "/threads" + threads})
                  .status,
              kExitOk);
  }
  EXPECT_EQ(read_bytes(dir_ / "threads1" / "summary.csv"), read_bytes(dir_ / "threads3" / "summary.csv"));
  EXPECT_EQ(read_bytes(dir_ / "threads1" / "pr_initial.csv"), read_bytes(dir_ / "threads3" / "pr_initial.csv"));
}

TEST_F(Pipeline, InferWritesMapAtImageSizeAndTrace) {
  const std::string d = dir_.string();
  ASSERT_EQ(cli({"infer", "--ckpt", d + "/refine.ckpt", "--image", image_.string(), "--out", d + "/map.pgm",
                 "--trace-dir", d + "/trace"})
                .status,
            kExitOk);
  const ByteImage map = read_pnm(dir_ / "map.pgm");
  const ByteImage image = read_pnm(image_);
  EXPECT_EQ(map.channels, 1u);
  EXPECT_EQ(map.width, image.width);
  EXPECT_EQ(map.height, image.height);

  const auto trace = read_lines(dir_ / "trace" / "trace.csv");
  ASSERT_EQ(trace.size(), 5u);
  EXPECT_EQ(trace[0], "iter,a_s,a_tx,a_ty");
  for (std::size_t i = 1; i < trace.size(); ++i) {
    unsigned iter = 0;
    double s = 0, tx = 0, ty = 0;
    ASSERT_EQ(std::sscanf(trace[i].c_str(), "%u,%lf,%lf,%lf", &iter, &s, &tx, &ty), 4) << trace[i];
    EXPECT_EQ(iter, i - 1);
    EXPECT_GE(s, 0.2);
    EXPECT_LE(s, 1.0);
    EXPECT_LE(std::abs(tx), 1.0);
    EXPECT_LE(std::abs(ty), 1.0);
    EXPECT_TRUE(fs::exists(dir_ / "trace" / ("iter_" + std::to_string(i - 1) + ".pgm")));
  }
  EXPECT_EQ(trace[1], "0,1.000000,0.000000,0.000000");
}

TEST_F(Pipeline, SingleIterationMatchesInitialNetwork) {
  const std::string d = dir_.string();
  ASSERT_EQ(cli({"infer", "--ckpt", d + "/refine.ckpt", "--iters", "1", "--image", image_.string(), "--out",
                 d + "/one.pgm"})
                .status,
            kExitOk);
  ASSERT_EQ(cli({"infer", "--ckpt", d + "/init.ckpt", "--image", image_.string(), "--out", d + "/initial.pgm",
                 "--trace-dir", d + "/trace_init"})
                .status,
            kExitOk);
  EXPECT_EQ(read_bytes(dir_ / "one.pgm"), read_bytes(dir_ / "initial.pgm"));
  EXPECT_EQ(read_lines(dir_ / "trace_init" / "trace.csv").size(), 2u);
}

TEST_F(Pipeline, InferIsDeterministic) {
  const std::string d = dir_.string();
  for (const char* name : {"/a.pgm", "/b.pgm"}) {
    ASSERT_EQ(cli({"infer", "--ckpt", d + "/refine.ckpt", "--image", image_.string(), "--out", d + name}).status,
              kExitOk);
  }
  EXPECT_EQ(read_bytes(dir_ / "a.pgm"), read_bytes(dir_ / "b.pgm"));
}

TEST_F(Pipeline, RefineWithWrongDataIsDataError) {
  const std::string d = dir_.string();
  const auto r = cli({"train-refine", "--init-ckpt", d + "/init.ckpt", "--data", d + "/nope.tsv", "--out-ckpt",
                      d + "/x.ckpt"});
  EXPECT_EQ(r.status, kExitData);
}

}  // namespace
}  // namespace racdnn::cli
