// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.
//
//   racdnn_acceptance [--only 1,5,...] [--seeds K]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "gradcheck.h"
#include "racdnn/attention.h"
#include "racdnn/data.h"
#include "racdnn/error.h"
#include "racdnn/metrics.h"
#include "racdnn/network.h"
#include "racdnn/nn.h"
#include "racdnn/ops.h"
#include "racdnn/optim.h"
#include "racdnn/train.h"

namespace racdnn::acceptance {

namespace {

using Clock = std::chrono::steady_clock;
using numcheck::GradCheckOptions;
using numcheck::GradCheckResult;
using numcheck::gradcheck;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Tensor random_tensor(Shape shape, double lo, double hi, std::uint64_t seed) {
  return Tensor::create(std::move(shape), init::Uniform{lo, hi, seed});
}

Tensor images(const Preset& preset, std::size_t batch, std::uint64_t seed) {
  return random_tensor({batch, 3, preset.input_size, preset.input_size}, 0.0, 1.0, seed);
}

Tensor binary_targets(const Preset& preset, std::size_t batch, std::uint64_t seed) {
  const std::size_t m = preset.map_size();
  Tensor t = random_tensor({batch, 1, m, m}, 0.0, 1.0, seed);
  for (double& v : t.mutable_data()) v = v > 0.6 ? 1.0 : 0.0;
  return t;
}

// ---------------------------------------------------------------- 1

Outcome gradient_suite() {
  const auto start = Clock::now();
  constexpr std::size_t kCoordinates = 24;
  constexpr double kTolerance = 1e-3;
  std::vector<std::pair<std::string, GradCheckResult>> results;
  const GradCheckOptions smooth{.coordinates = kCoordinates, .skip_kinks = false};

  {
    Conv2dParams p = Conv2dParams::he_normal(3, 4, 3, 2, 1, true, 1);
    const Tensor x = random_tensor({2, 3, 7, 7}, -1, 1, 2);
    const Tensor w = random_tensor({2, 4, 4, 4}, -1, 1, 3);
    results.emplace_back("conv2d", gradcheck([&] { return sum(mul(conv2d(x, p), w)); }, {x, p.weights, p.bias}, smooth));
  }
  {
    const Tensor x = random_tensor({2, 2, 3, 3}, -1, 1, 4);
    const Tensor w = random_tensor({2, 2, 6, 6}, -1, 1, 5);
    results.emplace_back("unpool", gradcheck([&] { return sum(mul(unpool(x, 2), w)); }, {x}, smooth));
  }
  {
    BatchNormParams p = BatchNormParams::identity(3);
    p.gamma = random_tensor({3}, 0.5, 1.5, 6);
    p.beta = random_tensor({3}, -0.5, 0.5, 7);
    const Tensor x = random_tensor({4, 3, 3, 3}, -2, 2, 8);
    const Tensor w = random_tensor({4, 3, 3, 3}, -1, 1, 9);
    results.emplace_back("batchnorm",
                         gradcheck([&] { return sum(mul(batchnorm(x, p, Mode::kTrain), w)); }, {x, p.gamma, p.beta}, smooth));
  }
  {
    LinearParams p = LinearParams::he_normal(10, 6, true, 10);
    const Tensor x = random_tensor({3, 10}, -1, 1, 11);
    const Tensor w = random_tensor({3, 6}, -1, 1, 12);
    results.emplace_back("linear", gradcheck([&] { return sum(mul(linear(x, p), w)); }, {x, p.weights, p.bias}, smooth));
  }
  {
    const Tensor pred = random_tensor({4, 8}, 0.05, 0.95, 13);
    Tensor g = random_tensor({4, 8}, 0, 1, 14);
    for (double& v : g.mutable_data()) v = v > 0.5 ? 1.0 : 0.0;
    results.emplace_back("bce_loss", gradcheck([&] { return bce_loss(pred, g); }, {pred}, smooth));
  }
  {
    // Sample positions at least 0.1 pixel away from integer coordinates.
    const std::size_t h = 6, w = 7, oh = 5, ow = 4;
    const Tensor src = random_tensor({2, h, w}, -1, 1, 15);
    std::mt19937_64 rng(16);
    std::uniform_int_distribution<int> cell_x(-1, static_cast<int>(w) - 1), cell_y(-1, static_cast<int>(h) - 1);
    std::uniform_real_distribution<double> frac(0.1, 0.9);
    std::vector<double> coords;
    for (std::size_t i = 0; i < oh * ow; ++i) {
      const double px = cell_x(rng) + frac(rng), py = cell_y(rng) + frac(rng);
      coords.push_back(2.0 * px / (w - 1.0) - 1.0);
      coords.push_back(2.0 * py / (h - 1.0) - 1.0);
    }
    const Tensor grid = Tensor::from({oh, ow, 2}, coords);
    const Tensor wt = random_tensor({2, oh, ow}, -1, 1, 17);
    results.emplace_back("bilinear_sample", gradcheck([&] { return sum(mul(bilinear_sample(src, SamplingGrid{grid}), wt)); },
                                                      {src, grid}, smooth));
  }
  {
    // Full toy rollout, N = 9, with a random (non-zeroed) refinement decoder
    // so every parameter receives a nonzero gradient.
    const Preset preset = make_preset("toy");
    RefinementNet net(preset, 21);
    const Tensor x = images(preset, 2, 22);
    const Tensor r0 = random_tensor({2, 1, preset.map_size(), preset.map_size()}, -2, 2, 23);
    const Tensor target = binary_targets(preset, 2, 24);
    std::vector<Tensor> inputs = trainable(net.parameters());
    inputs.push_back(r0);
    results.emplace_back("toy rollout N=9",
                         gradcheck([&] { return saliency_loss(net.run_refinement(x, r0, 9, Mode::kTrain).raw, target); },
                                   inputs, {.coordinates = kCoordinates, .seed = 25, .max_attempts_factor = 40}));
  }

  const double elapsed = seconds_since(start);
  bool pass = elapsed < 120.0;
  std::string detail;
  for (const auto& [name, r] : results) {
    const bool ok = r.checked >= 20 && r.max_rel_error <= kTolerance;
    pass = pass && ok;
    detail += fmt("%s %.1e/%zu%s; ", name.c_str(), r.max_rel_error, r.checked,
                  r.skipped ? fmt(" (%zu kinks skipped)", r.skipped).c_str() : "");
    if (!ok) detail += "worst " + r.worst + "; ";
  }
  detail += fmt("%.1f s", elapsed);
  return {pass, detail};
}

// ---------------------------------------------------------------- 2

Outcome exact_kernels() {
  std::string detail;
  bool pass = true;

  const double v = 0.1234567890123;
  const Tensor up = unpool(Tensor::from({1, 1, 1, 1}, {v}), 2);
  const std::vector<double> want{v, 0.0, 0.0, 0.0};
  const bool unpool_ok = up.shape() == Shape{1, 1, 2, 2} && std::equal(want.begin(), want.end(), up.data().begin());
  pass = pass && unpool_ok;
  detail += unpool_ok ? "unpool top-left exact; " : "unpool mismatch; ";

  std::vector<double> g{10.0, -7.0, 3.0};
  clip_gradients(g);
  const bool clip_ok = g == std::vector<double>{5.0, -5.0, 3.0};
  pass = pass && clip_ok;
  detail += clip_ok ? "clip {10,-7,3}->{5,-5,3}; " : "clip mismatch; ";

  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  double worst = 0.0;
  const Transform id = identity_transform();
  for (int i = 0; i < 100; ++i) {
    const AffineAttention p = constrain(u(rng), u(rng), u(rng));
    for (const Transform& t : {compose(make_transform(p), invert_transform(p)), compose(invert_transform(p), make_transform(p))}) {
      for (std::size_t k = 0; k < t.size(); ++k) worst = std::max(worst, std::abs(t[k] - id[k]));
    }
  }
  pass = pass && worst <= 1e-12;
  detail += fmt("transform round trip max error %.1e over 100 windows", worst);
  return {pass, detail};
}

// ---------------------------------------------------------------- 3

struct OraclePoint {
  double precision, recall;
};

std::vector<OraclePoint> oracle_curve(const std::vector<double>& s, const std::vector<double>& g) {
  std::vector<OraclePoint> curve;
  for (int t = 0; t < kThresholds; ++t) {
    std::size_t tp = 0, fp = 0, pos = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const bool predicted = std::lround(255.0 * s[i]) >= t;
      tp += predicted && g[i] == 1.0;
      fp += predicted && g[i] == 0.0;
      pos += g[i] == 1.0;
    }
    const double precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = pos == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(pos);
    curve.push_back({precision, recall});
  }
  return curve;
}

double oracle_f(double p, double r) {
  const double den = kBetaSquared * p + r;
  return den == 0.0 ? 0.0 : (1.0 + kBetaSquared) * p * r / den;
}

bool agrees(const std::vector<double>& s, const std::vector<double>& g) {
  const auto oracle = oracle_curve(s, g);
  const PrCurve curve = pr_curve(s, g);
  double best = 0.0;
  for (int t = 0; t < kThresholds; ++t) {
    if (curve[t].precision != oracle[t].precision || curve[t].recall != oracle[t].recall) return false;
    best = std::max(best, oracle_f(oracle[t].precision, oracle[t].recall));
  }
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) abs_sum += std::abs(s[i] - g[i]);
  return max_f_measure(curve) == best && mae(s, g) == abs_sum / static_cast<double>(s.size());
}

Outcome metrics_oracle() {
  std::size_t cases = 0, mismatches = 0;
  for (int pm = 0; pm < 512; ++pm) {
    for (int gm = 0; gm < 512; ++gm) {
      std::vector<double> s(9), g(9);
      for (int i = 0; i < 9; ++i) {
        s[i] = (pm >> i) & 1;
        g[i] = (gm >> i) & 1;
      }
      ++cases;
      mismatches += !agrees(s, g);
    }
  }
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    std::vector<double> s(64), g(64);
    for (std::size_t i = 0; i < 64; ++i) {
      s[i] = u(rng);
      g[i] = u(rng) < 0.4 ? 1.0 : 0.0;
    }
    ++cases;
    mismatches += !agrees(s, g);
  }
  const double f = f_measure(0.8, 0.6);
  const bool f_ok = std::abs(f - 0.742857) <= 1e-6;
  return {mismatches == 0 && f_ok,
          fmt("%zu/%zu oracle cases exact (all 3x3 binary pred/gt pairs + 100 random 8x8); f_measure(0.8,0.6)=%.6f",
              cases - mismatches, cases, f)};
}

// ---------------------------------------------------------------- 4

Outcome overfit_check() {
  const auto start = Clock::now();
  const Preset preset = make_preset("toy");
  DatasetSpec spec;
  spec.seed = 51;
  spec.count = 8;
  spec.image_size = preset.input_size;
  const auto samples = generate(spec);
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Batch batch = make_batch(samples, all, preset);

  SaliencyNet net(preset, 52);
  Adam adam(trainable(net.parameters()));
  constexpr std::size_t kMaxSteps = 2000;
  double infer_bce = 0.0, train_bce = 0.0;
  std::size_t steps = 0;
  while (steps < kMaxSteps) {
    adam.zero_grad();
    {
      GradTape tape;
      const Tensor loss = saliency_loss(net.forward(batch.images, Mode::kTrain), batch.targets);
      train_bce = loss.item();
      tape.backward(loss);
    }
    adam.step();
    ++steps;
    if (steps % 25 == 0) {
      infer_bce = initial_loss(net, samples);
      if (infer_bce < 0.05) break;
    }
  }
  const double elapsed = seconds_since(start);
  return {infer_bce < 0.05 && elapsed < 600.0,
          fmt("mean BCE %.4f (inference mode; last train-mode batch %.4f) after %zu Adam steps, %.1f s", infer_bce,
              train_bce, steps, elapsed)};
}

// ---------------------------------------------------------------- 5 and 8

struct TrendConfig {
  std::size_t train_count = 200;
  std::size_t test_count = 50;
  std::size_t initial_epochs = 40;
  std::size_t refine_epochs = 15;
  std::size_t iterations = 9;
  std::size_t batch_size = 8;
  double refine_lr = 1e-4;
};

struct SeedResult {
  std::uint64_t seed = 0;
  MetricsReport initial, refined;
  std::size_t losses_logged = 0;
  bool all_finite = true;
  std::string failure;
  double seconds = 0.0;
  std::unique_ptr<SaliencyNet> initial_net;
  std::unique_ptr<RefinementNet> refine_net;
  std::vector<Sample> test;
};

struct TrendRun {
  std::vector<SeedResult> seeds;
  double seconds = 0.0;
};

std::optional<TrendRun> g_trend;
std::size_t g_seed_count = 3;

SeedResult run_trend_seed(const TrendConfig& cfg, std::uint64_t seed) {
  const auto start = Clock::now();
  SeedResult out;
  out.seed = seed;
  const Preset preset = make_preset("toy");
  DatasetSpec spec;
  spec.image_size = preset.input_size;
  spec.scale_min = 0.1;
  spec.scale_max = 0.7;
  spec.seed = 1000 + seed;
  spec.count = cfg.train_count;
  const auto pool = generate(spec);
  spec.seed = 2000 + seed;
  spec.count = cfg.test_count;
  out.test = generate(spec);

  std::vector<Sample> train, val;
  for (const auto& s : pool) (is_validation(s.id) ? val : train).push_back(s);

  auto on_epoch = [&](const EpochLog& log) {
    ++out.losses_logged;
    out.all_finite = out.all_finite && std::isfinite(log.train_loss) && std::isfinite(log.val_loss);
  };
  try {
    out.initial_net = std::make_unique<SaliencyNet>(preset, 3 * seed + 1);
    Adam adam(trainable(out.initial_net->parameters()));
    PlateauSchedule init_schedule;
    train_initial(*out.initial_net, adam, init_schedule, train, val,
                  {cfg.initial_epochs, cfg.batch_size, true, 3 * seed + 2}, on_epoch);

    out.refine_net = std::make_unique<RefinementNet>(preset, 3 * seed + 3);
    out.refine_net->init_decoder_from(out.initial_net->decoder);
    RmsPropConfig rms_cfg;
    rms_cfg.lr = cfg.refine_lr;
    RmsProp rms(trainable(out.refine_net->parameters()), rms_cfg);
    PlateauSchedule refine_schedule;
    train_refinement(*out.refine_net, *out.initial_net, rms, refine_schedule, cfg.iterations, train, val,
                     {cfg.refine_epochs, cfg.batch_size, true, 3 * seed + 4}, on_epoch);

    out.initial = evaluate_stage(Stage::kInitial, *out.initial_net, nullptr, cfg.iterations, out.test);
    out.refined = evaluate_stage(Stage::kRefined, *out.initial_net, out.refine_net.get(), cfg.iterations, out.test);
  } catch (const Error& e) {
    out.failure = e.what();
    out.all_finite = out.all_finite && e.kind() != ErrorKind::kNumeric;
  }
  out.seconds = seconds_since(start);
  return out;
}

const TrendRun& trend_run() {
  if (!g_trend) {
    const auto start = Clock::now();
    TrendRun run;
    const TrendConfig cfg;
    for (std::uint64_t seed = 1; seed <= g_seed_count; ++seed) {
      run.seeds.push_back(run_trend_seed(cfg, seed));
      const SeedResult& r = run.seeds.back();
      std::fprintf(stderr, "  seed %llu: initial F %.4f MAE %.4f | refined F %.4f MAE %.4f | %.0f s%s\n",
                   static_cast<unsigned long long>(seed), r.initial.max_f, r.initial.mae, r.refined.max_f,
                   r.refined.mae, r.seconds, r.failure.empty() ? "" : (" | " + r.failure).c_str());
    }
    run.seconds = seconds_since(start);
    g_trend = std::move(run);
  }
  return *g_trend;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Outcome refinement_trend() {
  const TrendRun& run = trend_run();
  std::vector<double> f_init, f_ref, mae_init, mae_ref;
  for (const auto& s : run.seeds) {
    if (!s.failure.empty()) return {false, "seed " + std::to_string(s.seed) + " failed: " + s.failure};
    f_init.push_back(s.initial.max_f);
    f_ref.push_back(s.refined.max_f);
    mae_init.push_back(s.initial.mae);
    mae_ref.push_back(s.refined.mae);
  }
  const double fi = median(f_init), fr = median(f_ref), mi = median(mae_init), mr = median(mae_ref);
  const bool pass = fr >= fi && mr <= mi && (fr > fi || mr < mi) && run.seconds < 3600.0;
  return {pass, fmt("median over %zu seeds: max-F %.4f -> %.4f, MAE %.4f -> %.4f, %.1f min", run.seeds.size(), fi, fr,
                    mi, mr, run.seconds / 60.0)};
}

Outcome stability() {
  // Logit sweep across [-50, 50] for both target values.
  bool sweep_ok = true;
  for (int k = -100; k <= 100; ++k) {
    for (const double target : {0.0, 1.0}) {
      Tensor logit = Tensor::from({1}, {0.5 * k});
      logit.set_requires_grad();
      const Tensor g = Tensor::from({1}, {target});
      for (int form = 0; form < 2; ++form) {
        logit.zero_grad();
        GradTape tape;
        const Tensor loss = form == 0 ? bce_with_logits(logit, g) : bce_loss(sigmoid(logit), g);
        tape.backward(loss);
        sweep_ok = sweep_ok && std::isfinite(loss.item()) && loss.item() >= 0.0 && std::isfinite(logit.grad()[0]);
      }
    }
  }
  const TrendRun& run = trend_run();
  bool run_ok = true;
  std::size_t logged = 0;
  for (const auto& s : run.seeds) {
    run_ok = run_ok && s.all_finite && s.failure.empty();
    logged += s.losses_logged;
  }
  return {sweep_ok && run_ok,
          fmt("BCE sweep over logits [-50,50] %s; %zu epoch losses across %zu training runs %s", sweep_ok ? "finite" : "NOT finite",
              logged, run.seeds.size(), run_ok ? "finite with finite gradients" : "hit a non-finite value")};
}

// ---------------------------------------------------------------- 6

// Pixels outside the window of iteration i keep the bits of r_{i-1}.
bool check_locality(const RefinementTrace& trace, std::size_t& changed_inside, std::size_t& outside_checked) {
  for (std::size_t i = 1; i < trace.entries.size(); ++i) {
    const Tensor& prev = trace.entries[i - 1].running;
    const Tensor& cur = trace.entries[i].running;
    const std::size_t b_count = cur.dim(0), m = cur.dim(2);
    for (std::size_t b = 0; b < b_count; ++b) {
      for (std::size_t y = 0; y < m; ++y) {
        for (std::size_t x = 0; x < m; ++x) {
          const std::size_t k = (b * m + y) * m + x;
          const double a = prev.data()[k], c = cur.data()[k];
          if (window_contains(trace.entries[i].window[b], y, x, m, m)) {
            changed_inside += std::memcmp(&a, &c, sizeof a) != 0;
          } else {
            if (std::memcmp(&a, &c, sizeof a) != 0) return false;
            ++outside_checked;
          }
        }
      }
    }
  }
  return true;
}

Outcome refinement_locality() {
  std::size_t rollouts = 0, changed = 0, outside = 0;
  bool pass = true;
  for (const char* name : {"tiny", "toy"}) {
    const Preset preset = make_preset(name);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      for (const Mode mode : {Mode::kInfer, Mode::kTrain}) {
        RefinementNet net(preset, 60 + seed);
        const Tensor x = images(preset, 3, 70 + seed);
        const Tensor r0 = random_tensor({3, 1, preset.map_size(), preset.map_size()}, -3, 3, 80 + seed);
        NoGradGuard no_grad;
        pass = pass && check_locality(net.run_refinement(x, r0, 9, mode).trace, changed, outside);
        ++rollouts;
      }
    }
  }
  // Trained networks from the trend experiment, on held-out images.
  if (g_trend) {
    for (const auto& s : g_trend->seeds) {
      if (!s.refine_net) continue;
      for (const auto& sample : s.test) {
        RefinementTrace trace;
        predict_refined(*s.refine_net, *s.initial_net, 9, sample.image, &trace);
        pass = pass && check_locality(trace, changed, outside);
        ++rollouts;
      }
    }
  }
  pass = pass && changed > 0;
  return {pass, fmt("%zu rollouts, %zu outside-window pixels bitwise unchanged, %zu inside-window pixels changed",
                    rollouts, outside, changed)};
}

// ---------------------------------------------------------------- 7

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + RACDNN_EXE + "\" " + args + " > /dev/null";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  const auto dir = std::filesystem::temp_directory_path() / ("racdnn_acceptance_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::string d = dir.string();
  int status = run_cli("gen-data --seed 3 --count 24 --size 64 --out " + d + "/data");
  status |= run_cli("train-init --data " + d + "/data/manifest.tsv --epochs 2 --batch-size 4 --seed 5 --out-ckpt " + d +
                    "/init.ckpt");
  for (const char* name : {"a", "b"}) {
    status |= run_cli("train-refine --data " + d + "/data/manifest.tsv --init-ckpt " + d +
                      "/init.ckpt --iters 9 --epochs 2 --batch-size 4 --seed 7 --out-ckpt " + d + "/" + name + ".ckpt");
    status |= run_cli("infer --ckpt " + d + "/a.ckpt --image " + d + "/data/images/s000001.ppm --out " + d + "/" + name +
                      ".pgm");
  }
  if (status != 0) return {false, "a CLI command exited nonzero"};
  const auto ca = slurp(dir / "a.ckpt"), cb = slurp(dir / "b.ckpt");
  const auto pa = slurp(dir / "a.pgm"), pb = slurp(dir / "b.pgm");
  const bool pass = !ca.empty() && ca == cb && !pa.empty() && pa == pb;
  std::filesystem::remove_all(dir);
  return {pass, fmt("train-refine checkpoints %s (%zu bytes), infer PGMs %s (%zu bytes)",
                    ca == cb ? "identical" : "DIFFER", ca.size(), pa == pb ? "identical" : "DIFFER", pa.size())};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream list(argv[++i]);
      for (std::string item; std::getline(list, item, ',');) only.insert(std::stoi(item));
    } else if (arg == "--seeds" && i + 1 < argc) {
      g_seed_count = std::stoul(argv[++i]);
    } else {
      std::cerr << "usage: racdnn_acceptance [--only 1,5,...] [--seeds K]\n";
      return 2;
    }
  }
  // The trend run feeds criteria 6 and 8, so it runs before them.
  const std::vector<std::pair<int, std::pair<const char*, std::function<Outcome()>>>> criteria{
      {1, {"gradient suite", gradient_suite}},
      {2, {"exact kernels", exact_kernels}},
      {3, {"metrics oracle", metrics_oracle}},
      {4, {"overfit check", overfit_check}},
      {5, {"refinement improves", refinement_trend}},
      {6, {"refinement locality", refinement_locality}},
      {7, {"determinism", determinism}},
      {8, {"stability", stability}},
  };
  bool all = true;
  for (const auto& [id, named] : criteria) {
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = named.second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << id << "] " << named.first << ": " << o.detail << std::endl;
  }
  return all ? 0 : 1;
}

}  // namespace racdnn::acceptance

int main(int argc, char** argv) { return racdnn::acceptance::main(argc, argv); }
