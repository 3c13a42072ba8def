#include "racdnn_cli/config.h"

#include <fstream>

#include "racdnn_cli/errors.h"

namespace racdnn::cli {

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("config key '") + key + "' has the wrong type");
  }
}

void read_path(const json& j, const char* key, std::filesystem::path& out) {
  std::string s;
  read_field(j, key, s);
  out = s;
}

}  // namespace

void validate(const RunConfig& c) {
  if (c.preset != "paper" && c.preset != "toy" && c.preset != "tiny") {
    throw UsageError("preset must be paper, toy or tiny, got '" + c.preset + "'");
  }
  if (c.iterations < 1) throw UsageError("iterations must be at least 1");
  if (c.batch_size < 2) throw UsageError("batch size must be at least 2 (batch norm in training mode)");
  for (const auto* opt : {&c.optimizer_initial, &c.optimizer_refine}) {
    if (*opt != "adam" && *opt != "rmsprop") throw UsageError("optimizer must be adam or rmsprop, got '" + *opt + "'");
  }
  if (!(c.lr_initial > 0.0) || !(c.lr_refine > 0.0)) throw UsageError("learning rates must be positive");
  if (c.patience < 1) throw UsageError("patience must be at least 1");
  if (!c.stage.empty() && c.stage != "initial" && c.stage != "refined") {
    throw UsageError("stage must be initial or refined, got '" + c.stage + "'");
  }
}

json model_json(const RunConfig& c) {
  return {
      {"preset", c.preset},
      {"seed", c.seed},
      {"iterations", c.iterations},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"augment", c.augment},
      {"optimizer_initial", c.optimizer_initial},
      {"optimizer_refine", c.optimizer_refine},
      {"lr_initial", c.lr_initial},
      {"lr_refine", c.lr_refine},
      {"patience", c.patience},
  };
}

json to_json(const RunConfig& c) {
  json j = model_json(c);
  j["count"] = c.count;
  j["size"] = c.size;
  j["scale_min"] = c.scale_min;
  j["scale_max"] = c.scale_max;
  j["data"] = c.data.string();
  j["init_ckpt"] = c.init_ckpt.string();
  j["out_ckpt"] = c.out_ckpt.string();
  j["ckpt"] = c.ckpt.string();
  j["report_dir"] = c.report_dir.string();
  j["image"] = c.image.string();
  j["out"] = c.out.string();
  j["trace_dir"] = c.trace_dir.string();
  j["stage"] = c.stage;
  j["threads"] = c.threads;
  return j;
}

void apply_json(const json& j, RunConfig& c) {
  if (!j.is_object()) throw UsageError("configuration must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const char* k = key.c_str();
    if (key == "preset") read_field(j, k, c.preset);
    else if (key == "seed") read_field(j, k, c.seed);
    else if (key == "iterations") read_field(j, k, c.iterations);
    else if (key == "epochs") read_field(j, k, c.epochs);
    else if (key == "batch_size") read_field(j, k, c.batch_size);
    else if (key == "augment") read_field(j, k, c.augment);
    else if (key == "optimizer_initial") read_field(j, k, c.optimizer_initial);
    else if (key == "optimizer_refine") read_field(j, k, c.optimizer_refine);
    else if (key == "lr_initial") read_field(j, k, c.lr_initial);
    else if (key == "lr_refine") read_field(j, k, c.lr_refine);
    else if (key == "patience") read_field(j, k, c.patience);
    else if (key == "count") read_field(j, k, c.count);
    else if (key == "size") read_field(j, k, c.size);
    else if (key == "scale_min") read_field(j, k, c.scale_min);
    else if (key == "scale_max") read_field(j, k, c.scale_max);
    else if (key == "data") read_path(j, k, c.data);
    else if (key == "init_ckpt") read_path(j, k, c.init_ckpt);
    else if (key == "out_ckpt") read_path(j, k, c.out_ckpt);
    else if (key == "ckpt") read_path(j, k, c.ckpt);
    else if (key == "report_dir") read_path(j, k, c.report_dir);
    else if (key == "image") read_path(j, k, c.image);
    else if (key == "out") read_path(j, k, c.out);
    else if (key == "trace_dir") read_path(j, k, c.trace_dir);
    else if (key == "stage") read_field(j, k, c.stage);
    else if (key == "threads") read_field(j, k, c.threads);
    else throw UsageError("unknown config key '" + key + "'");
    c.explicit_keys.insert(key);
  }
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c;
  apply_json(j, c);
  return c;
}

}  // namespace racdnn::cli
