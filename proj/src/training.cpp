#include "scanet/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

#include "scanet/config.hpp"
#include "scanet/errors.hpp"

namespace scanet {

using nlohmann::json;
namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace {

torch::Tensor checked_ce(const torch::Tensor &logits, const torch::Tensor &target, const char *head) {
  const auto classes = logits.size(-1);
  if (target.numel() > 0 && (target.min().item<int64_t>() < 0 || target.max().item<int64_t>() >= classes)) {
    throw DataError(std::string("target index outside the ") + head + " head range [0, " +
                    std::to_string(classes) + ")");
  }
  return F::cross_entropy(logits, target);
}

} // namespace

LossParts compute_loss(const CorrectionOutput &out, const std::vector<Targets> &targets, const LossWeights &w) {
  if (out.layers.empty()) throw ShapeError("no decoder outputs");
  const auto lengths = out.valid_mask.sum(1).to(torch::kLong);
  const auto B = static_cast<int64_t>(targets.size());
  if (lengths.size(0) != B) throw ShapeError("target count differs from the batch size");
  for (int64_t b = 0; b < B; ++b) {
    if (lengths[b].item<int64_t>() != targets[b].status.size(0)) {
      throw ShapeError("sample " + std::to_string(b) + " has a different component count than its targets");
    }
  }
  LossParts parts;
  std::vector<torch::Tensor> totals;
  for (const auto &layer : out.layers) {
    std::vector<torch::Tensor> pos, rot, st;
    for (int64_t b = 0; b < B; ++b) {
      const auto &t = targets[b];
      const auto o = layer.sample(static_cast<int>(b), static_cast<int>(t.status.size(0)));
      pos.push_back((checked_ce(o.pos_x, t.tx, "x position") + checked_ce(o.pos_y, t.ty, "y position") +
                     checked_ce(o.pos_z, t.tz, "z position")) /
                    3.0);
      rot.push_back(checked_ce(o.rot, t.rot, "rotation"));
      st.push_back(checked_ce(o.status, t.status, "status"));
    }
    auto p = torch::stack(pos).mean(), r = torch::stack(rot).mean(), s = torch::stack(st).mean();
    parts.layer_position.push_back(p);
    parts.layer_rotation.push_back(r);
    parts.layer_status.push_back(s);
    totals.push_back(w.alpha * p + w.beta * r + w.gamma * s);
  }
  parts.position = torch::stack(parts.layer_position).mean();
  parts.rotation = torch::stack(parts.layer_rotation).mean();
  parts.status = torch::stack(parts.layer_status).mean();
  parts.total = torch::stack(totals).mean();
  return parts;
}

TrainConfig TrainConfig::from_config(const json &cfg) {
  TrainConfig tc;
  try {
    const auto &t = cfg.at("train");
    tc.lr = t.at("lr").get<double>();
    tc.weight_decay = t.at("weight_decay").get<double>();
    tc.batch = t.at("batch").get<int>();
    tc.grad_accumulation = t.at("grad_accumulation").get<int>();
    tc.epochs = t.at("epochs").get<int>();
    tc.weights = {t.at("alpha").get<double>(), t.at("beta").get<double>(), t.at("gamma").get<double>()};
    tc.checkpoint_every = t.at("checkpoint_every").get<int>();
    tc.max_iterations = t.at("max_iterations").get<std::int64_t>();
    tc.seed = t.at("seed").get<std::uint64_t>();
    tc.double_precision = t.at("double_precision").get<bool>();
    if (t.contains("cache_limit")) tc.cache_limit = t.at("cache_limit").get<int>();
    tc.replace = replace_mode_from_string(cfg.at("eval").at("replace").get<std::string>());
  } catch (const json::exception &e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (tc.lr <= 0 || tc.batch < 1 || tc.grad_accumulation < 1 || tc.epochs < 1 || tc.checkpoint_every < 1 ||
      tc.max_iterations < 0 || tc.weight_decay < 0) {
    throw ConfigError("train settings must be positive");
  }
  return tc;
}

json EpochRecord::to_json() const {
  auto opt = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
  return {{"epoch", epoch},
          {"iterations", iterations},
          {"optimizer_steps", optimizer_steps},
          {"train_loss", train_loss},
          {"train_position", train_position},
          {"train_rotation", train_rotation},
          {"train_status", train_status},
          {"val_loss", opt(val_loss)},
          {"val_component_acc", opt(val_component_acc)}};
}

ScaNet make_model(const ModelConfig &cfg, std::uint64_t seed, bool double_precision) {
  torch::manual_seed(seed);
  ScaNet m(cfg);
  if (double_precision) m->to(torch::kDouble);
  return m;
}

std::unique_ptr<torch::optim::AdamW> make_optimizer(ScaNet &model, const TrainConfig &tc) {
  return std::make_unique<torch::optim::AdamW>(
      model->parameters(), torch::optim::AdamWOptions(tc.lr).weight_decay(tc.weight_decay));
}

Accumulator::Accumulator(torch::optim::Optimizer &opt, std::vector<torch::Tensor> params, int accumulation)
    : opt_(opt), params_(std::move(params)), accumulation_(accumulation) {
  if (accumulation < 1) throw ConfigError("gradient accumulation must be >= 1");
}

bool Accumulator::add(const torch::Tensor &loss) {
  (loss / accumulation_).backward();
  if (++pending_ < accumulation_) return false;
  opt_.step();
  opt_.zero_grad();
  pending_ = 0;
  ++steps_;
  return true;
}

bool Accumulator::flush() {
  if (pending_ == 0) return false;
  const double scale = static_cast<double>(accumulation_) / pending_;
  {
    torch::NoGradGuard guard;
    for (auto &p : params_)
      if (p.grad().defined()) p.grad().mul_(scale);
  }
  opt_.step();
  opt_.zero_grad();
  pending_ = 0;
  ++steps_;
  return true;
}

namespace {

struct Prepared {
  SampleTensors tensors;
  Targets targets;
  CorrectionInput input;
};

class InputSource {
public:
  InputSource(const Dataset &ds, const ModelConfig &mc, torch::Dtype dtype, bool cache)
      : ds_(ds), mc_(mc), dtype_(dtype), cache_(cache) {}

  Prepared get(const std::string &key) {
    if (auto it = store_.find(key); it != store_.end()) return it->second;
    Prepared p;
    p.input = correction_input(ds_, ds_.sample(key));
    p.tensors = to_dtype(build_sample_tensors(p.input, mc_), dtype_);
    p.targets = build_targets(p.input);
    if (cache_) store_.emplace(key, p);
    return p;
  }

private:
  const Dataset &ds_;
  const ModelConfig &mc_;
  torch::Dtype dtype_;
  bool cache_;
  std::map<std::string, Prepared> store_;
};

bool pose_correct(const Correction &c, const CorrectionInput &in, std::size_t i) {
  return poses_equal(c.pose, in.gt[i], symmetry_group(in.components[i].shape));
}

void write_line(const fs::path &path, const json &j) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot append to " + path.string());
  out << j.dump() << '\n';
}

} // namespace

TrainResult train(const json &cfg, const Dataset &ds, ScaNet &model, const fs::path &out_dir,
                  const TrainHooks &hooks) {
  const TrainConfig tc = TrainConfig::from_config(cfg);
  const ModelConfig &mc = model->cfg;
  std::vector<std::string> train_keys = hooks.train_keys.empty() ? ds.splits.train : hooks.train_keys;
  const std::vector<std::string> val_keys = hooks.val_keys.empty() ? ds.splits.val : hooks.val_keys;
  if (train_keys.empty()) throw InputError("dataset has no training samples");
  const torch::Dtype dtype = tc.double_precision ? torch::kDouble : torch::kFloat;

  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    fs::remove(out_dir / "train_log.jsonl", ec);
  }

  InputSource train_src(ds, mc, dtype, static_cast<int>(train_keys.size()) <= tc.cache_limit);
  InputSource val_src(ds, mc, dtype, static_cast<int>(val_keys.size()) <= tc.cache_limit);
  auto opt = make_optimizer(model, tc);
  Accumulator acc(*opt, model->parameters(), tc.grad_accumulation);
  opt->zero_grad();
  std::mt19937_64 shuffle_rng(derive_seed(tc.seed, 0x5AFFULL));

  TrainResult result;
  double best = -1.0;
  bool stop = false;
  for (int epoch = 1; epoch <= tc.epochs && !stop; ++epoch) {
    model->train();
    std::shuffle(train_keys.begin(), train_keys.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch;
    double seen = 0;
    for (std::size_t start = 0; start < train_keys.size(); start += tc.batch) {
      const std::size_t end = std::min(train_keys.size(), start + tc.batch);
      std::vector<SampleTensors> batch;
      std::vector<Targets> targets;
      std::vector<std::string> keys;
      for (std::size_t i = start; i < end; ++i) {
        const auto p = train_src.get(train_keys[i]);
        batch.push_back(p.tensors);
        targets.push_back(p.targets);
        keys.push_back(train_keys[i]);
      }
      const auto parts = compute_loss(model->forward(batch), targets, tc.weights);
      const double total = parts.total.item<double>();
      if (!std::isfinite(total)) {
        const json diag{{"epoch", epoch},
                        {"iteration", result.iterations},
                        {"batch", keys},
                        {"loss", {{"total", total},
                                  {"position", parts.position.item<double>()},
                                  {"rotation", parts.rotation.item<double>()},
                                  {"status", parts.status.item<double>()}}}};
        if (!out_dir.empty()) write_json_file(out_dir / "nonfinite.json", diag);
        throw NonFiniteLossError("non-finite loss: " + diag.dump());
      }
      acc.add(parts.total);
      const double n = static_cast<double>(end - start);
      rec.train_loss += total * n;
      rec.train_position += parts.position.item<double>() * n;
      rec.train_rotation += parts.rotation.item<double>() * n;
      rec.train_status += parts.status.item<double>() * n;
      seen += n;
      ++result.iterations;
      if (tc.max_iterations > 0 && result.iterations >= tc.max_iterations) {
        stop = true;
        break;
      }
    }
    acc.flush();
    rec.train_loss /= seen;
    rec.train_position /= seen;
    rec.train_rotation /= seen;
    rec.train_status /= seen;
    rec.iterations = result.iterations;
    rec.optimizer_steps = acc.steps();

    if (!val_keys.empty()) {
      torch::NoGradGuard guard;
      model->eval();
      double loss = 0, correct = 0, total = 0;
      for (std::size_t start = 0; start < val_keys.size(); start += tc.batch) {
        const std::size_t end = std::min(val_keys.size(), start + tc.batch);
        std::vector<SampleTensors> batch;
        std::vector<Targets> targets;
        std::vector<Prepared> prepared;
        for (std::size_t i = start; i < end; ++i) {
          prepared.push_back(val_src.get(val_keys[i]));
          batch.push_back(prepared.back().tensors);
          targets.push_back(prepared.back().targets);
        }
        const auto out = model->forward(batch);
        loss += compute_loss(out, targets, tc.weights).total.item<double>() * static_cast<double>(end - start);
        for (std::size_t b = 0; b < prepared.size(); ++b) {
          const auto &in = prepared[b].input;
          std::vector<int> ids;
          std::vector<SymmetryGroup> syms;
          for (const auto &c : in.components) {
            ids.push_back(c.id);
            syms.push_back(symmetry_group(c.shape));
          }
          const auto cs = decode_predictions(out.layers.back().sample(static_cast<int>(b), static_cast<int>(ids.size())),
                                             ids, in.assembled, syms, in.world_dims, tc.replace);
          for (std::size_t i = 0; i < cs.size(); ++i) correct += pose_correct(cs[i], in, i) ? 1 : 0;
          total += static_cast<double>(cs.size());
        }
      }
      rec.val_loss = loss / static_cast<double>(val_keys.size());
      rec.val_component_acc = correct / total;
    }
    result.epochs.push_back(rec);
    result.optimizer_steps = acc.steps();

    if (!out_dir.empty()) {
      write_line(out_dir / "train_log.jsonl", rec.to_json());
      const json metrics = rec.to_json();
      if (epoch % tc.checkpoint_every == 0 || stop || epoch == tc.epochs) {
        save_checkpoint(out_dir / "last.ckpt", model, opt.get(), cfg, epoch, metrics);
      }
      const double score = rec.val_component_acc.value_or(-rec.train_loss);
      if (score > best) {
        best = score;
        save_checkpoint(out_dir / "best.ckpt", model, opt.get(), cfg, epoch, metrics);
      }
    }
    if (rec.val_component_acc) {
      result.best_val_component_acc = std::max(result.best_val_component_acc.value_or(0.0), *rec.val_component_acc);
    }
    if (hooks.after_epoch && hooks.after_epoch(rec)) stop = true;
  }
  return result;
}

std::vector<std::vector<Correction>> predict(ScaNet &model, const std::vector<CorrectionInput> &inputs,
                                             ReplaceMode mode, bool double_precision) {
  torch::NoGradGuard guard;
  model->eval();
  const torch::Dtype dtype = double_precision ? torch::kDouble : torch::kFloat;
  std::vector<std::vector<Correction>> out;
  constexpr std::size_t kChunk = 8;
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    const std::size_t end = std::min(inputs.size(), start + kChunk);
    std::vector<SampleTensors> batch;
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(to_dtype(build_sample_tensors(inputs[i], model->cfg), dtype));
    }
    const auto res = model->forward(batch);
    for (std::size_t i = start; i < end; ++i) {
      const auto &in = inputs[i];
      std::vector<int> ids;
      std::vector<SymmetryGroup> syms;
      for (const auto &c : in.components) {
        ids.push_back(c.id);
        syms.push_back(symmetry_group(c.shape));
      }
      out.push_back(decode_predictions(res.layers.back().sample(static_cast<int>(i - start), static_cast<int>(ids.size())),
                                       ids, in.assembled, syms, in.world_dims, mode));
    }
  }
  return out;
}

void save_checkpoint(const fs::path &path, ScaNet &model, torch::optim::AdamW *opt, const json &config, int epoch,
                     const json &metrics) {
  const bool is_double = model->parameters().front().scalar_type() == torch::kDouble;
  const json manifest{{"format_version", kCheckpointFormatVersion},
                      {"config", config},
                      {"config_hash", fnv1a_hex(config)},
                      {"interface_hash", interface_hash(config)},
                      {"epoch", epoch},
                      {"metrics", metrics},
                      {"parameter_count", parameter_count(*model)},
                      {"dtype", is_double ? "float64" : "float32"}};
  const fs::path tmp = path.string() + ".tmp";
  try {
    torch::serialize::OutputArchive ar;
    ar.write("manifest", c10::IValue(manifest.dump()));
    torch::serialize::OutputArchive model_ar;
    model->save(model_ar);
    ar.write("model", model_ar);
    if (opt) {
      torch::serialize::OutputArchive opt_ar;
      opt->save(opt_ar);
      ar.write("optimizer", opt_ar);
    }
    ar.save_to(tmp.string());
  } catch (const c10::Error &e) {
    throw IoError("cannot write checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

namespace {

json read_manifest(torch::serialize::InputArchive &ar, const fs::path &path) {
  c10::IValue v;
  if (!ar.try_read("manifest", v) || !v.isString()) throw CheckpointError(path.string() + " has no manifest");
  json m;
  try {
    m = json::parse(v.toStringRef());
  } catch (const json::exception &e) {
    throw CheckpointError(path.string() + " has a malformed manifest");
  }
  if (!m.contains("format_version") || m["format_version"] != kCheckpointFormatVersion) {
    throw CheckpointError(path.string() + " has checkpoint format version " +
                          (m.contains("format_version") ? m["format_version"].dump() : std::string("<none>")) +
                          ", expected " + std::to_string(kCheckpointFormatVersion));
  }
  return m;
}

void open_archive(torch::serialize::InputArchive &ar, const fs::path &path) {
  if (!fs::exists(path)) throw CheckpointError("checkpoint " + path.string() + " does not exist");
  try {
    ar.load_from(path.string());
  } catch (const std::exception &e) {
    throw CheckpointError("cannot read checkpoint " + path.string() + ": corrupt or not a checkpoint");
  }
}

} // namespace

json read_checkpoint_manifest(const fs::path &path) {
  torch::serialize::InputArchive ar;
  open_archive(ar, path);
  return read_manifest(ar, path);
}

LoadedCheckpoint load_checkpoint(const fs::path &path) {
  torch::serialize::InputArchive ar;
  open_archive(ar, path);
  LoadedCheckpoint out;
  out.manifest = read_manifest(ar, path);
  try {
    out.model = ScaNet(ModelConfig::from_config(out.manifest.at("config")));
    if (out.manifest.at("dtype") == "float64") out.model->to(torch::kDouble);
    torch::serialize::InputArchive model_ar;
    ar.read("model", model_ar);
    out.model->load(model_ar);
  } catch (const CheckpointError &) {
    throw;
  } catch (const std::exception &e) {
    throw CheckpointError("checkpoint " + path.string() + " does not match its stored config: " + e.what());
  }
  return out;
}

void load_optimizer_state(const fs::path &path, torch::optim::AdamW &opt) {
  torch::serialize::InputArchive ar;
  open_archive(ar, path);
  read_manifest(ar, path);
  torch::serialize::InputArchive opt_ar;
  if (!ar.try_read("optimizer", opt_ar)) throw CheckpointError(path.string() + " holds no optimizer state");
  try {
    opt.load(opt_ar);
  } catch (const std::exception &e) {
    throw CheckpointError("optimizer state in " + path.string() + " does not fit: " + e.what());
  }
}

} // namespace scanet
