// scanet: dataset generation, statistics, training, evaluation and single-scene correction.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/torch.h>

#include "scanet/config.hpp"
#include "scanet/datagen.hpp"
#include "scanet/errors.hpp"
#include "scanet/evaluation.hpp"
#include "scanet/image_io.hpp"
#include "scanet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scanet;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kIo = 3, kInternal = 4 };

/// Usage error carrying its own exit code (e.g. hash mismatches).
struct CliError : Error {
  CliError(const std::string &what, int code) : Error(what), code(code) {}
  int code;
};

struct CommonOptions {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  bool no_ar = false, no_image_encoder = false, no_6d_encoder = false;
};

std::uint64_t resolve_seed(const CommonOptions &o) {
  if (o.seed) return *o.seed;
  if (const char *env = std::getenv("SCANET_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception &) {
      throw ConfigError(std::string("SCANET_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

/// Resolves a command-line key to a dotted config path. A bare name is looked up among the
/// keys of every section and must be unique.
std::string resolve_key(const json &cfg, std::string key) {
  for (auto &ch : key) if (ch == '-') ch = '_';
  if (key.find('.') != std::string::npos) {
    std::string path = "/" + key;
    std::replace(path.begin(), path.end(), '.', '/');
    const json::json_pointer ptr(path);
    if (!cfg.contains(ptr)) throw ConfigError("unknown config key '" + key + "'");
    return key;
  }
  if (cfg.contains(key)) return key;
  std::vector<std::string> hits;
  for (const auto &[section, body] : cfg.items()) {
    if (body.is_object() && body.contains(key)) hits.push_back(section + "." + key);
  }
  if (hits.empty()) throw ConfigError("unknown option --" + key);
  if (hits.size() > 1) {
    std::string all;
    for (const auto &h : hits) all += " " + h;
    throw ConfigError("option --" + key + " is ambiguous:" + all);
  }
  return hits.front();
}

/// Applies the unrecognised "--key value" / "--key=value" arguments as config overrides.
void apply_extras(json &cfg, const std::vector<std::string> &extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string &arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) throw ConfigError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else if (i + 1 < extras.size() && extras[i + 1].rfind("--", 0) != 0) {
      value = extras[++i];
    } else {
      value = "true";
    }
    apply_override(cfg, resolve_key(cfg, key), value);
  }
}

/// defaults <- base (e.g. the dataset's config) <- --config file <- overrides.
json resolve_config(const json &base, const CommonOptions &o, const std::vector<std::string> &extras) {
  json cfg = default_config();
  merge_config(cfg, base);
  if (!o.config_file.empty()) merge_config(cfg, load_config_file(o.config_file));
  apply_extras(cfg, extras);
  if (o.no_ar) cfg["model"]["no_ar"] = true;
  if (o.no_image_encoder) cfg["model"]["no_image_encoder"] = true;
  if (o.no_6d_encoder) cfg["model"]["no_6d_encoder"] = true;
  validate_config(cfg);
  return cfg;
}

json dataset_config(const fs::path &data) {
  const auto path = data / "config.json";
  if (!fs::exists(path)) throw IoError("dataset has no config.json: " + path.string());
  return read_json_file(path);
}

void require_matching_hash(const std::string &what_a, const std::string &a, const std::string &what_b,
                           const std::string &b) {
  if (a != b) {
    throw CliError("interface hash mismatch: " + what_a + " " + a + " vs " + what_b + " " + b +
                       " (world dims, image size, camera or component box differ)",
                   kUsage);
  }
}

void add_common(CLI::App *cmd, CommonOptions &o) {
  cmd->add_option("--config", o.config_file, "JSON config file layered over the defaults");
  cmd->add_option("--seed", o.seed, "Master seed (default: $SCANET_SEED or 0)");
  cmd->allow_extras();
}

void add_ablations(CLI::App *cmd, CommonOptions &o) {
  cmd->add_flag("--no-ar", o.no_ar, "Drop the assembly-result branch");
  cmd->add_flag("--no-image-encoder", o.no_image_encoder, "Zero the component-image half of each query");
  cmd->add_flag("--no-6d-encoder", o.no_6d_encoder, "Encode posed world voxels instead of shape + 6D pose");
}

int cmd_gen(const CommonOptions &o, const std::vector<std::string> &extras, const fs::path &out) {
  const json cfg = resolve_config(json::object(), o, extras);
  const auto seed = resolve_seed(o);
  const auto ds = build_dataset(cfg, seed, out);
  std::cout << "wrote " << ds.manuals.size() << " manuals, " << ds.samples.size() << " samples to " << out.string()
            << " (train " << ds.splits.train.size() << ", val " << ds.splits.val.size() << ", setwise test "
            << ds.splits.setwise_test.size() << " manuals)\n";
  return kOk;
}

int cmd_stats(const fs::path &data, fs::path out) {
  const auto ds = Dataset::load(data);
  if (out.empty()) out = data;
  fs::create_directories(out);
  const auto stats = dataset_stats(ds);
  write_json_file(out / "stats.json", stats.to_json());
  write_stats_png(stats, out / "stats.png");
  std::cout << stats.to_json().dump(2) << "\n";
  return kOk;
}

int cmd_train(const CommonOptions &o, const std::vector<std::string> &extras, const fs::path &data,
              const fs::path &out) {
  const auto ds = Dataset::load(data);
  json cfg = resolve_config(dataset_config(data), o, extras);
  if (o.seed || std::getenv("SCANET_SEED")) cfg["train"]["seed"] = resolve_seed(o);
  require_matching_hash("dataset", ds.manifest.at("interface_hash").get<std::string>(), "config",
                        interface_hash(cfg));
  if (ds.splits.train.empty() || ds.splits.val.empty()) throw InputError("dataset has no train/val split");
  fs::create_directories(out);
  write_json_file(out / "config.json", cfg);

  const auto tc = TrainConfig::from_config(cfg);
  auto model = make_model(ModelConfig::from_config(cfg), tc.seed, tc.double_precision);
  std::cout << "parameters: " << parameter_count(*model) << "\n";
  TrainHooks hooks;
  hooks.after_epoch = [](const EpochRecord &r) {
    std::cout << r.to_json().dump() << std::endl;
    return false;
  };
  const auto result = train(cfg, ds, model, out, hooks);
  std::cout << "done: " << result.iterations << " iterations, " << result.optimizer_steps << " optimizer steps";
  if (result.best_val_component_acc) std::cout << ", best val component acc " << *result.best_val_component_acc;
  std::cout << "\n";
  return kOk;
}

struct CorrectorChoice {
  std::unique_ptr<CorrectorInterface> corrector;
  json config;
};

CorrectorChoice make_corrector(const std::string &kind, const fs::path &ckpt, const json &base,
                               const CommonOptions &o, const std::vector<std::string> &extras) {
  CorrectorChoice c;
  if (kind == "oracle" || kind == "identity") {
    c.config = resolve_config(base, o, extras);
    if (kind == "oracle") c.corrector = std::make_unique<OracleCorrector>();
    else c.corrector = std::make_unique<IdentityCorrector>();
    return c;
  }
  if (kind != "learned") throw ConfigError("--corrector must be learned, oracle or identity");
  if (ckpt.empty()) throw ConfigError("--corrector learned needs --ckpt");
  auto loaded = load_checkpoint(ckpt);
  c.config = resolve_config(loaded.manifest.at("config"), o, extras);
  const auto tc = TrainConfig::from_config(c.config);
  loaded.model->eval();
  c.corrector = std::make_unique<LearnedCorrector>(loaded.model, tc.replace, tc.double_precision);
  return c;
}

int cmd_eval(const CommonOptions &o, const std::vector<std::string> &extras, const fs::path &data,
             const fs::path &ckpt, const std::string &kind, bool setwise, const std::string &split,
             const fs::path &report) {
  const auto ds = Dataset::load(data);
  if (kind == "learned" && !ckpt.empty()) {
    const auto manifest = read_checkpoint_manifest(ckpt);
    require_matching_hash("checkpoint", manifest.at("interface_hash").get<std::string>(), "dataset",
                          ds.manifest.at("interface_hash").get<std::string>());
  }
  auto choice = make_corrector(kind, ckpt, dataset_config(data), o, extras);
  const json &cfg = choice.config;

  EvaluationResult res;
  if (setwise) {
    if (ds.splits.setwise_test.empty()) throw InputError("dataset has no setwise test manuals");
    const auto seed = o.seed || std::getenv("SCANET_SEED") ? resolve_seed(o) : cfg.at("eval").at("seed").get<std::uint64_t>();
    res = evaluate_setwise(ds, ds.splits.setwise_test, ErrorModel::from_config(cfg), seed, *choice.corrector);
  } else {
    std::vector<std::string> keys;
    if (split == "train") keys = ds.splits.train;
    else if (split == "val") keys = ds.splits.val;
    else if (split == "test") {
      for (const auto &s : ds.samples) {
        if (std::find(ds.splits.setwise_test.begin(), ds.splits.setwise_test.end(), s.manual_id) !=
            ds.splits.setwise_test.end()) {
          keys.push_back(s.key());
        }
      }
    } else {
      throw ConfigError("--split must be train, val or test");
    }
    if (keys.empty()) throw InputError("split '" + split + "' is empty");
    res = evaluate_single_step(ds, keys, *choice.corrector);
  }

  const json j = res.report.to_json();
  if (report.has_parent_path()) fs::create_directories(report.parent_path());
  write_json_file(report, j);
  const fs::path stem = report.parent_path() / report.stem();
  write_confusion_png(res.report.confusion, stem.string() + "_confusion.png");
  write_json_file(stem.string() + "_config.json", cfg);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int cmd_correct(const CommonOptions &o, const std::vector<std::string> &extras, const fs::path &scene,
                const fs::path &ckpt, const std::string &kind, const fs::path &out) {
  json scene_json;
  try {
    scene_json = read_json_file(scene);
  } catch (const DataError &e) {
    throw InputError(e.what());
  }
  const auto in = correction_input_from_json(scene_json);
  auto choice = make_corrector(kind, ckpt, json::object(), o, extras);
  const json &cfg = choice.config;
  if (in.world_dims != world_dims_of(cfg)) {
    throw InputError("scene world dims do not match the configured world");
  }
  if (kind == "oracle" && in.gt.empty()) throw InputError("the oracle corrector needs \"gt\" poses in the scene");

  const auto cs = choice.corrector->correct({in}).front();
  fs::create_directories(out);
  write_json_file(out / "corrections.json", corrections_to_json(cs));
  const auto cam = camera_of(cfg);
  write_png(out / "before.png", render(in.assembled_state(), cam));
  AssemblyState after = in.base;
  for (std::size_t i = 0; i < cs.size(); ++i) after.placed.push_back({in.components[i], cs[i].pose});
  write_png(out / "after.png", render(after, cam));
  write_json_file(out / "config.json", cfg);
  std::cout << corrections_to_json(cs).dump(2) << "\n";
  return kOk;
}

} // namespace

int main(int argc, char **argv) {
  torch::set_num_threads(1);
  at::globalContext().setFlushDenormal(true);
  CLI::App app{"scanet: assembly error correction toolkit"};
  app.require_subcommand(1);

  CommonOptions gen_o, train_o, eval_o, correct_o;
  std::string out, data, ckpt, scene, report, corrector = "learned", split = "test", stats_out;
  bool setwise = false, single_step = false;

  auto *gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common(gen, gen_o);
  gen->add_option("--out", out, "Dataset directory")->required();

  auto *stats = app.add_subcommand("stats", "Dataset statistics JSON and histograms");
  stats->add_option("--data", data, "Dataset directory")->required();
  stats->add_option("--out", stats_out, "Output directory (default: the dataset)");

  auto *trn = app.add_subcommand("train", "Train a correction model");
  add_common(trn, train_o);
  add_ablations(trn, train_o);
  trn->add_option("--data", data, "Dataset directory")->required();
  trn->add_option("--out", out, "Run directory")->required();

  auto *ev = app.add_subcommand("eval", "Evaluate a corrector");
  add_common(ev, eval_o);
  ev->add_option("--data", data, "Dataset directory")->required();
  ev->add_option("--ckpt", ckpt, "Checkpoint (learned corrector)");
  ev->add_option("--corrector", corrector, "learned, oracle or identity");
  auto *sw = ev->add_flag("--setwise", setwise, "Sequential assembly of the setwise test manuals");
  auto *ss = ev->add_flag("--single-step", single_step, "Independent correction of each sample (default)");
  sw->excludes(ss);
  ev->add_option("--split", split, "Single-step samples: test (setwise manuals), val or train");
  ev->add_option("--report", report, "Report JSON path")->required();

  auto *info = app.add_subcommand("info", "Print a checkpoint manifest");
  info->add_option("--ckpt", ckpt, "Checkpoint")->required();

  auto *cor = app.add_subcommand("correct", "Correct one scene file");
  add_common(cor, correct_o);
  cor->add_option("--scene", scene, "Scene JSON")->required();
  cor->add_option("--ckpt", ckpt, "Checkpoint (learned corrector)");
  cor->add_option("--corrector", corrector, "learned, oracle or identity");
  cor->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(gen_o, gen->remaining(), out);
    if (*stats) return cmd_stats(data, stats_out);
    if (*trn) return cmd_train(train_o, trn->remaining(), data, out);
    if (*ev) return cmd_eval(eval_o, ev->remaining(), data, ckpt, corrector, setwise, split, report);
    if (*info) {
      std::cout << read_checkpoint_manifest(ckpt).dump(2) << "\n";
      return kOk;
    }
    if (*cor) return cmd_correct(correct_o, cor->remaining(), scene, ckpt, corrector, out);
  } catch (const CliError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code;
  } catch (const IoError &e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const CheckpointError &e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kIo;
  } catch (const NonFiniteLossError &e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kInternal;
  } catch (const ShapeError &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  } catch (const Error &e) {
    // Config, input, data, range and generation errors are all caller-side.
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception &e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}
