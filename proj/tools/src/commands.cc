#include "racdnn_cli/commands.h"

#include <CLI11.hpp>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <ostream>
#include <thread>

#include "racdnn/data.h"
#include "racdnn/error.h"
#include "racdnn/ops.h"
#include "racdnn/train.h"
#include "racdnn_cli/errors.h"

namespace racdnn::cli {

namespace {

using nlohmann::json;

std::string csv_row(std::size_t index, std::initializer_list<double> values) {
  std::string row = std::to_string(index);
  char buf[32];
  for (const double v : values) {
    std::snprintf(buf, sizeof buf, ",%.6f", v);
    row += buf;
  }
  return row;
}

void require(const std::filesystem::path& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing ") + flag);
}

std::uint64_t refine_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

std::ofstream open_text(const std::filesystem::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  return out;
}

RunConfig config_from(const json& snapshot) {
  RunConfig c;
  try {
    apply_json(snapshot, c);
  } catch (const UsageError& e) {
    throw Error(ErrorKind::kCheckpoint, std::string("checkpoint configuration: ") + e.what());
  }
  return c;
}

void split(const std::vector<Sample>& samples, std::vector<Sample>& train, std::vector<Sample>& val) {
  for (const auto& s : samples) (is_validation(s.id) ? val : train).push_back(s);
}

EpochCallback epoch_logger(std::ostream& log) {
  log << "epoch,train_bce,val_bce\n";
  return [&log](const EpochLog& e) { log << csv_row(e.epoch, {e.train_loss, e.val_loss}) << "\n" << std::flush; };
}

TrainConfig train_config(const RunConfig& c) { return {c.epochs, c.batch_size, c.augment, c.seed}; }

// Runs `body` with the optimizer named `name` over `params`.
template <typename Body>
void with_optimizer(const std::string& name, double lr, std::vector<Tensor> params, Body&& body) {
  if (name == "adam") {
    AdamConfig cfg;
    cfg.lr = lr;
    Adam optimizer(std::move(params), cfg);
    body(optimizer);
  } else {
    RmsPropConfig cfg;
    cfg.lr = lr;
    RmsProp optimizer(std::move(params), cfg);
    body(optimizer);
  }
}

std::size_t thread_count(const RunConfig& c, std::size_t work) {
  std::size_t n = c.threads != 0 ? c.threads : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, work));
}

Tensor probability_map(const Tensor& raw, std::size_t height, std::size_t width) {
  NoGradGuard no_grad;
  const std::size_t m = raw.dim(raw.rank() - 1);
  return resize_bilinear(reshape(sigmoid(raw), {m, m}), height, width);
}

std::size_t resolve_iterations(const RunConfig& c, const LoadedModels& models) {
  if (c.explicit_keys.contains("iterations") || !models.refine_config) return c.iterations;
  return models.refine_config->iterations;
}

}  // namespace

LoadedModels load_models(const Checkpoint& checkpoint) {
  if (!checkpoint.config.contains("initial")) {
    throw Error(ErrorKind::kCheckpoint, "checkpoint has no initial network configuration");
  }
  LoadedModels m;
  m.initial_config = config_from(checkpoint.config.at("initial"));
  const Preset preset = make_preset(m.initial_config.preset);
  m.initial = std::make_unique<SaliencyNet>(preset, m.initial_config.seed);
  auto initial_params = m.initial->parameters();
  restore_parameters(checkpoint, "init", initial_params);
  if (checkpoint.config.contains("refine")) {
    m.refine_config = config_from(checkpoint.config.at("refine"));
    m.refine = std::make_unique<RefinementNet>(preset, refine_seed(m.refine_config->seed));
    auto refine_params = m.refine->parameters();
    restore_parameters(checkpoint, "refine", refine_params);
  }
  return m;
}

void cmd_gen_data(const RunConfig& c, std::ostream& log) {
  require(c.out, "--out");
  DatasetSpec spec;
  spec.seed = c.seed;
  spec.count = c.count;
  spec.image_size = c.size;
  spec.scale_min = c.scale_min;
  spec.scale_max = c.scale_max;
  const auto samples = generate(spec);
  const auto manifest = write_dataset(c.out, samples);
  log << "wrote " << samples.size() << " samples to " << manifest.string() << "\n";
}

void cmd_train_init(const RunConfig& c, std::ostream& log) {
  require(c.data, "--data");
  require(c.out_ckpt, "--out-ckpt");
  const Preset preset = make_preset(c.preset);
  std::vector<Sample> train, val;
  split(load_dataset(c.data), train, val);
  SaliencyNet net(preset, c.seed);
  ParamList params = net.parameters();
  PlateauSchedule schedule;
  schedule.patience = c.patience;
  Checkpoint checkpoint;
  checkpoint.config = {{"initial", model_json(c)}};
  const auto on_epoch = epoch_logger(log);
  with_optimizer(c.optimizer_initial, c.lr_initial, trainable(params), [&](auto& optimizer) {
    train_initial(net, optimizer, schedule, train, val, train_config(c), on_epoch);
    store_parameters(checkpoint, "init", params);
    store_optimizer(checkpoint, "optim/init", params, optimizer.state(), schedule);
  });
  save_checkpoint(c.out_ckpt, checkpoint);
}

void cmd_train_refine(const RunConfig& c, std::ostream& log) {
  require(c.data, "--data");
  require(c.init_ckpt, "--init-ckpt");
  require(c.out_ckpt, "--out-ckpt");
  const Checkpoint source = load_checkpoint(c.init_ckpt);
  LoadedModels models = load_models(source);
  SaliencyNet& initial = *models.initial;
  const Preset& preset = initial.preset();

  std::vector<Sample> train, val;
  split(load_dataset(c.data), train, val);
  RefinementNet net(preset, refine_seed(c.seed));
  net.init_decoder_from(initial.decoder);
  ParamList params = net.parameters();
  PlateauSchedule schedule;
  schedule.patience = c.patience;

  RunConfig snapshot = c;
  snapshot.preset = preset.name;
  Checkpoint checkpoint;
  checkpoint.config = {{"initial", source.config.at("initial")}, {"refine", model_json(snapshot)}};
  for (const auto& r : source.records) {
    if (r.name.starts_with("init/") || r.name.starts_with("optim/init/")) checkpoint.records.push_back(r);
  }
  const auto on_epoch = epoch_logger(log);
  with_optimizer(c.optimizer_refine, c.lr_refine, trainable(params), [&](auto& optimizer) {
    train_refinement(net, initial, optimizer, schedule, c.iterations, train, val, train_config(c), on_epoch);
    store_parameters(checkpoint, "refine", params);
    store_optimizer(checkpoint, "optim/refine", params, optimizer.state(), schedule);
  });
  save_checkpoint(c.out_ckpt, checkpoint);
}

MetricsReport cmd_eval(const RunConfig& c, std::ostream& log) {
  require(c.ckpt, "--ckpt");
  require(c.data, "--data");
  require(c.report_dir, "--report-dir");
  LoadedModels models = load_models(load_checkpoint(c.ckpt));
  const std::string stage = !c.stage.empty() ? c.stage : (models.refine ? "refined" : "initial");
  if (stage == "refined" && !models.refine) {
    throw Error(ErrorKind::kCheckpoint, "checkpoint has no refinement network; use --stage initial");
  }
  const std::size_t iterations = resolve_iterations(c, models);
  const auto samples = load_dataset(c.data);
  if (samples.empty()) throw Error(ErrorKind::kInvalidArgument, "dataset " + c.data.string() + " is empty");

  // Per-image scoring in parallel; results are folded in input order.
  std::vector<MetricsReport> reports(samples.size());
  std::vector<std::exception_ptr> failures(samples.size());
  const std::size_t workers = thread_count(c, samples.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < samples.size(); i += workers) {
          try {
            const Sample& s = samples[i];
            Tensor pred = stage == "initial"
                              ? predict_initial(*models.initial, s.image)
                              : predict_refined(*models.refine, *models.initial, iterations, s.image);
            if (pred.shape() != s.mask.shape()) pred = resize_bilinear(pred, s.mask.dim(0), s.mask.dim(1));
            reports[i] = evaluate(pred.data(), s.mask.data());
          } catch (...) {
            failures[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
  DatasetMetrics metrics;
  for (const auto& r : reports) metrics.add(r);
  const MetricsReport report = metrics.report();

  char row[96];
  std::snprintf(row, sizeof row, "%s,%.6f,%.6f", stage.c_str(), report.max_f, report.mae);
  auto summary = open_text(c.report_dir / "summary.csv");
  summary << "stage,max_f,mae\n" << row << "\n";
  auto pr = open_text(c.report_dir / ("pr_" + stage + ".csv"));
  write_pr_csv(pr, report.pr);
  if (!summary || !pr) throw Error(ErrorKind::kIo, "failed writing reports to " + c.report_dir.string());
  log << "stage,max_f,mae\n" << row << "\n";
  return report;
}

void cmd_infer(const RunConfig& c, std::ostream& log) {
  require(c.ckpt, "--ckpt");
  require(c.image, "--image");
  require(c.out, "--out");
  LoadedModels models = load_models(load_checkpoint(c.ckpt));
  const Tensor image = read_image(c.image);
  const std::size_t h = image.dim(1), w = image.dim(2);
  RefinementTrace trace;
  Tensor map;
  if (models.refine) {
    map = predict_refined(*models.refine, *models.initial, resolve_iterations(c, models), image, &trace);
  } else {
    map = predict_initial(*models.initial, image);
    NoGradGuard no_grad;
    TraceEntry entry;
    entry.window = {AffineAttention{}};
    entry.running = models.initial->forward(network_input(image, models.initial->preset()), Mode::kInfer);
    trace.entries.push_back(std::move(entry));
  }
  ensure_parent(c.out);
  write_image(c.out, map);
  log << "wrote " << w << "x" << h << " saliency map to " << c.out.string() << "\n";
  if (c.trace_dir.empty()) return;

  std::filesystem::create_directories(c.trace_dir);
  auto csv = open_text(c.trace_dir / "trace.csv");
  csv << "iter,a_s,a_tx,a_ty\n";
  for (std::size_t i = 0; i < trace.entries.size(); ++i) {
    const TraceEntry& e = trace.entries[i];
    const AffineAttention& a = e.window.front();
    csv << csv_row(i, {a.scale, a.tx, a.ty}) << "\n";
    write_image(c.trace_dir / ("iter_" + std::to_string(i) + ".pgm"), probability_map(e.running, h, w));
  }
  if (!csv) throw Error(ErrorKind::kIo, "failed writing " + (c.trace_dir / "trace.csv").string());
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recurrent attentional saliency refinement"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "JSON run configuration; flags override its values");

  json flags = json::object();
  auto flag = [&]<typename T>(CLI::App* sub, const std::string& name, const std::string& key, const std::string& help,
                             T) { sub->add_option_function<T>(name, [&flags, key](const T& v) { flags[key] = v; }, help); };
  auto path_flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    flag(sub, name, key, help, std::string{});
  };
  auto common = [&](CLI::App* sub) {
    flag(sub, "--seed", "seed", "random seed (RACDNN_SEED overrides)", std::uint64_t{});
    flag(sub, "--threads", "threads", "worker threads for evaluation", std::size_t{});
  };
  auto training = [&](CLI::App* sub, const std::string& lr_key, const std::string& opt_key) {
    path_flag(sub, "--data", "data", "dataset manifest");
    path_flag(sub, "--out-ckpt", "out_ckpt", "checkpoint to write");
    flag(sub, "--epochs", "epochs", "training epochs", std::size_t{});
    flag(sub, "--batch-size", "batch_size", "mini-batch size (>= 2)", std::size_t{});
    flag(sub, "--lr", lr_key, "initial learning rate", double{});
    flag(sub, "--optimizer", opt_key, "adam or rmsprop", std::string{});
    flag(sub, "--patience", "patience", "plateau epochs before the learning rate drops", int{});
    flag(sub, "--augment", "augment", "random crop, shift and colour jitter (true/false)", bool{});
  };

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  common(gen);
  flag(gen, "--count", "count", "number of samples", std::size_t{});
  flag(gen, "--size", "size", "image side in pixels", std::size_t{});
  flag(gen, "--scale-min", "scale_min", "smallest object extent as a fraction of the side", double{});
  flag(gen, "--scale-max", "scale_max", "largest object extent as a fraction of the side", double{});
  path_flag(gen, "--out", "out", "output directory");

  auto* init = app.add_subcommand("train-init", "train the initial encoder-decoder");
  common(init);
  training(init, "lr_initial", "optimizer_initial");
  flag(init, "--preset", "preset", "paper, toy or tiny", std::string{});

  auto* refine = app.add_subcommand("train-refine", "train the recurrent refinement network");
  common(refine);
  training(refine, "lr_refine", "optimizer_refine");
  path_flag(refine, "--init-ckpt", "init_ckpt", "checkpoint from train-init");
  flag(refine, "--iters", "iterations", "recurrent iterations N (>= 1)", std::size_t{});

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  common(eval);
  path_flag(eval, "--ckpt", "ckpt", "checkpoint");
  path_flag(eval, "--data", "data", "dataset manifest");
  path_flag(eval, "--report-dir", "report_dir", "directory for summary.csv and the PR curve");
  flag(eval, "--stage", "stage", "initial or refined", std::string{});
  flag(eval, "--iters", "iterations", "override the checkpoint's iteration count", std::size_t{});

  auto* infer = app.add_subcommand("infer", "write the saliency map of one image");
  common(infer);
  path_flag(infer, "--ckpt", "ckpt", "checkpoint");
  path_flag(infer, "--image", "image", "input PPM image");
  path_flag(infer, "--out", "out", "output PGM map");
  path_flag(infer, "--trace-dir", "trace_dir", "directory for per-iteration maps and trace.csv");
  flag(infer, "--iters", "iterations", "override the checkpoint's iteration count", std::size_t{});

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "racdnn: usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  auto one_line = [](std::string s) {
    for (char& ch : s) {
      if (ch == '\n' || ch == '\r') ch = ' ';
    }
    return s;
  };
  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    apply_json(flags, config);
    if (const char* env = std::getenv("RACDNN_SEED"); env != nullptr && *env != '\0') {
      char* end = nullptr;
      errno = 0;
      const unsigned long long seed = std::strtoull(env, &end, 10);
      if (*end != '\0' || errno != 0 || *env == '-') throw UsageError("RACDNN_SEED must be an unsigned integer");
      config.seed = seed;
      config.explicit_keys.insert("seed");
    }
    validate(config);
    if (gen->parsed()) cmd_gen_data(config, out);
    if (init->parsed()) cmd_train_init(config, out);
    if (refine->parsed()) cmd_train_refine(config, out);
    if (eval->parsed()) cmd_eval(config, out);
    if (infer->parsed()) cmd_infer(config, out);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "racdnn: usage error: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::kNumeric:
        err << "racdnn: numeric failure: " << one_line(e.what()) << "\n";
        return kExitNumeric;
      case ErrorKind::kInvalidArgument:
      case ErrorKind::kInvalidSpec:
      case ErrorKind::kInvalidScale:
        err << "racdnn: usage error: " << one_line(e.what()) << "\n";
        return kExitUsage;
      default:
        err << "racdnn: data error: " << one_line(e.what()) << "\n";
        return kExitData;
    }
  } catch (const std::exception& e) {
    err << "racdnn: data error: " << one_line(e.what()) << "\n";
    return kExitData;
  }
}

}  // namespace racdnn::cli
