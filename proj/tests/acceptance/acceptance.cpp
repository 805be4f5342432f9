// Acceptance checks. `acceptance <id>...` runs the listed criteria (1-13, or "all") and prints
// one PASS/FAIL line each; the exit status is non-zero if any failed.
//
// Training criteria use image size 64 and the reduced widths in toy_config() so they fit a
// single CPU core.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "scanet/backbone.hpp"
#include "scanet/config.hpp"
#include "scanet/datagen.hpp"
#include "scanet/errors.hpp"
#include "scanet/evaluation.hpp"
#include "scanet/geometry.hpp"
#include "scanet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scanet;

namespace {

// Tolerances and budgets.
constexpr double kLnTol = 1e-6;
constexpr double kAffineTol = 1e-6;
constexpr double kGradRelTol = 1e-3;
constexpr int kGradParams = 12;
constexpr int kMetricSets = 100;
constexpr double kIdentityQ = 0.6;
constexpr double kMtcTol = 0.03;
constexpr int kMinSetwiseComponents = 1000;
constexpr int kOverfitSamples = 50;
constexpr int kOverfitMaxIterations = 2000;
constexpr double kOverfitAcc = 0.95, kOverfitCr = 0.90, kOverfitMpr = 0.05;
constexpr int kToyManuals = 200;
constexpr double kToyBudgetSeconds = 48 * 60;
constexpr double kToyLr = 5e-4;
constexpr int kToyBatch = 4;
constexpr const char *kProbeShape = "l_tetromino";
constexpr double kProbeBudgetSeconds = 8 * 60;
constexpr int kProbeTrials = 20;
constexpr double kProbeDistinct = 0.80;

fs::path g_work;
fs::path g_cli;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path work_dir(const std::string &name) {
  auto p = g_work / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

/// Image size 64 with narrow convolutional widths; transformer and heads as in the defaults
/// except d_model, which follows C2.
json toy_config() {
  json cfg = default_config();
  cfg["image"]["size"] = 64;
  auto &m = cfg["model"];
  m["c1"] = 32;
  m["c2"] = 64;
  m["c3"] = 32;
  m["stem_channels"] = 16;
  m["voxel_width"] = 16;
  m["image_width"] = 16;
  m["ffn_dim"] = 256;
  cfg["train"]["grad_accumulation"] = 1;
  return cfg;
}

/// Narrowest config with every module present, for the exact checks.
json micro_config() {
  json cfg = toy_config();
  auto &m = cfg["model"];
  m["c1"] = 16;
  m["c2"] = 32;
  m["c3"] = 16;
  m["stem_channels"] = 8;
  m["voxel_width"] = 8;
  m["image_width"] = 8;
  m["encoder_layers"] = 1;
  m["heads"] = 4;
  m["ffn_dim"] = 64;
  cfg["generator"]["manuals"] = 4;
  cfg["generator"]["steps"] = {3, 4};
  cfg["generator"]["draws_per_step"] = {2, 2};
  return cfg;
}

std::vector<std::string> samples_of_manuals(const Dataset &ds, const std::vector<std::string> &ids) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<std::string> keys;
  for (const auto &s : ds.samples)
    if (wanted.count(s.manual_id)) keys.push_back(s.key());
  return keys;
}

// ---------------------------------------------------------------------------------------------

Outcome shape_contract() {
  torch::NoGradGuard guard;
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool ok = true;
  for (const auto &[size, f_side, d_side] : std::vector<std::tuple<int, int, int>>{{512, 128, 32}, {128, 32, 8}}) {
    BackboneConfig c;
    c.image_size = size;
    Backbone bb(c);
    bb->eval();
    const auto manual = torch::rand({1, kBranchChannels, size, size});
    const auto assembly = torch::rand({1, kBranchChannels, size, size});
    const auto f = bb->encode_branch(manual);
    const auto d = bb->forward(manual, assembly);
    const bool good = f.sizes() == torch::IntArrayRef({1, 128, f_side, f_side}) &&
                      d.sizes() == torch::IntArrayRef({1, 256, d_side, d_side});
    ok = ok && good;
    detail << "s=" << size << ": f " << f.size(1) << "x" << f.size(2) << "x" << f.size(3) << ", f_diff "
           << d.size(1) << "x" << d.size(2) << "x" << d.size(3) << "; ";
  }
  const double secs = seconds_since(t0);
  detail << fmt(secs, 1) << " s (< 10 s)";
  return {ok && secs < 10.0, detail.str()};
}

Outcome pose_normalization() {
  const Int3 world{16, 16, 12};
  const auto bounds = PoseBounds::for_world(world);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> tx(0, world.x - 1), ty(0, world.y - 1), tz(0, world.z - 1), q(0, 3);
  int outside = 0;
  for (int i = 0; i < 10000; ++i) {
    Pose6D p;
    p.t = {tx(rng), ty(rng), tz(rng)};
    p.r = {q(rng) * 90, q(rng) * 90, q(rng) * 90};
    for (double v : normalize_pose(p, bounds)) outside += (v < 0.0 || v > 1.0) ? 1 : 0;
  }
  Pose6D lo, hi;
  hi.t = {world.x - 1, world.y - 1, world.z - 1};
  hi.r = {270, 270, 270};
  const auto nl = normalize_pose(lo, bounds), nh = normalize_pose(hi, bounds);
  bool endpoints = true;
  for (int a = 0; a < 6; ++a) endpoints = endpoints && nl[a] == 0.0 && nh[a] == 1.0;
  return {outside == 0 && endpoints, std::to_string(outside) + " of 60000 coordinates outside [0,1]; endpoints " +
                                         (endpoints ? "exact" : "NOT exact")};
}

/// Cells of `shape` turned by q quarter turns about z with plain integer arithmetic, shifted
/// to the origin and sorted.
std::vector<Int3> turned_cells(const VoxelGrid &shape, int q) {
  std::vector<Int3> cells;
  for (auto c : shape.cells()) {
    for (int i = 0; i < q; ++i) c = {-c.y, c.x, c.z};
    cells.push_back(c);
  }
  Int3 lo{1 << 20, 1 << 20, 1 << 20};
  for (const auto &c : cells) lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
  for (auto &c : cells) c = c - lo;
  std::sort(cells.begin(), cells.end());
  return cells;
}

Outcome symmetry_suite() {
  int mismatches = 0;
  std::ostringstream detail;
  for (const auto &name : library_shape_names()) {
    const auto shape = library_shape(name);
    const auto base = turned_cells(shape, 0);
    int order = 1;
    if (turned_cells(shape, 1) == base) order = 4;
    else if (turned_cells(shape, 2) == base) order = 2;
    if (symmetry_group(shape).order() != order) {
      ++mismatches;
      detail << name << " ";
    }
  }
  const int canon = canonical_rotation(Rotation90::from_degrees(180), SymmetryGroup::half_turn()).degrees();
  detail << library_shape_names().size() << " shapes, " << mismatches << " mismatches; canonical(180,{0,180})="
         << canon;
  return {mismatches == 0 && canon == 0, detail.str()};
}

/// Mean over samples of the per-sample mean cross-entropy, written out with log-sum-exp.
double reference_ce(const std::vector<torch::Tensor> &logits, const std::vector<torch::Tensor> &targets) {
  double total = 0;
  for (std::size_t b = 0; b < logits.size(); ++b) {
    const auto l = logits[b].to(torch::kDouble);
    double sum = 0;
    for (int64_t i = 0; i < l.size(0); ++i) {
      const double mx = l[i].max().item<double>();
      double z = 0;
      for (int64_t k = 0; k < l.size(1); ++k) z += std::exp(l[i][k].item<double>() - mx);
      sum += mx + std::log(z) - l[i][targets[b][i].item<int64_t>()].item<double>();
    }
    total += sum / static_cast<double>(l.size(0));
  }
  return total / static_cast<double>(logits.size());
}

Outcome loss_suite() {
  const json cfg = micro_config();
  const auto ds = build_dataset_in_memory(cfg, 4);
  const auto mc = ModelConfig::from_config(cfg);
  auto model = make_model(mc, 4);
  std::vector<SampleTensors> batch;
  std::vector<Targets> targets;
  for (int i = 0; i < 3; ++i) {
    const auto in = correction_input(ds, ds.samples[static_cast<std::size_t>(i) * 3]);
    batch.push_back(build_sample_tensors(in, mc));
    targets.push_back(build_targets(in));
  }
  torch::NoGradGuard guard;
  auto out = model->forward(batch);

  // Uniform status logits.
  auto uniform = out;
  for (auto &l : uniform.layers) l.status = torch::zeros_like(l.status);
  const double l_status = compute_loss(uniform, targets, {}).status.item<double>();
  const bool ln4 = std::abs(l_status - std::log(4.0)) <= kLnTol;

  // Affinity in the weights.
  const auto parts = compute_loss(out, targets, {1, 1, 0.5});
  double worst_affine = 0;
  for (const auto &w : std::vector<LossWeights>{{0, 0, 1}, {2, 0.5, 0}, {0.3, 1.7, 2.2}}) {
    const double got = compute_loss(out, targets, w).total.item<double>();
    const double want = w.alpha * parts.position.item<double>() + w.beta * parts.rotation.item<double>() +
                        w.gamma * parts.status.item<double>();
    worst_affine = std::max(worst_affine, std::abs(got - want));
  }

  // Per-layer parts recomputed from the raw logits.
  double worst_layer = 0;
  double pos_mean = 0, rot_mean = 0, st_mean = 0;
  const int layers = static_cast<int>(out.layers.size());
  for (int k = 0; k < layers; ++k) {
    std::vector<torch::Tensor> st, px, py, pz, rt, ts, tx, ty, tz, tr;
    for (std::size_t b = 0; b < targets.size(); ++b) {
      const auto s = out.layers[k].sample(static_cast<int>(b), static_cast<int>(targets[b].status.size(0)));
      st.push_back(s.status);
      px.push_back(s.pos_x);
      py.push_back(s.pos_y);
      pz.push_back(s.pos_z);
      rt.push_back(s.rot);
      ts.push_back(targets[b].status);
      tx.push_back(targets[b].tx);
      ty.push_back(targets[b].ty);
      tz.push_back(targets[b].tz);
      tr.push_back(targets[b].rot);
    }
    const double p = (reference_ce(px, tx) + reference_ce(py, ty) + reference_ce(pz, tz)) / 3.0;
    const double r = reference_ce(rt, tr), s = reference_ce(st, ts);
    worst_layer = std::max({worst_layer, std::abs(p - parts.layer_position[k].item<double>()),
                            std::abs(r - parts.layer_rotation[k].item<double>()),
                            std::abs(s - parts.layer_status[k].item<double>())});
    pos_mean += p / layers;
    rot_mean += r / layers;
    st_mean += s / layers;
  }
  const double total_ref = pos_mean + rot_mean + 0.5 * st_mean;
  worst_layer = std::max(worst_layer, std::abs(total_ref - parts.total.item<double>()));

  const bool ok = ln4 && worst_affine <= kAffineTol && worst_layer <= 1e-5;
  return {ok, "L_status(uniform)=" + fmt(l_status, 8) + " (ln4 +-1e-6); affine error " + fmt(worst_affine, 9) +
                  "; per-layer recomputation error " + fmt(worst_layer, 9) + " over " + std::to_string(layers) +
                  " layers"};
}

Outcome gradient_check() {
  const json cfg = micro_config();
  const auto ds = build_dataset_in_memory(cfg, 5);
  const auto mc = ModelConfig::from_config(cfg);
  auto model = make_model(mc, 5, true);
  std::vector<SampleTensors> batch;
  std::vector<Targets> targets;
  for (int i : {0, 5}) {
    const auto in = correction_input(ds, ds.samples[static_cast<std::size_t>(i)]);
    batch.push_back(to_dtype(build_sample_tensors(in, mc), torch::kDouble));
    targets.push_back(build_targets(in));
  }
  auto objective = [&] { return compute_loss(model->forward(batch), targets, {}).total; };
  model->zero_grad();
  objective().backward();

  // Random coordinates over all parameters, skipping ones whose gradient is numerically zero.
  const auto named = model->named_parameters();
  std::vector<std::pair<std::string, torch::Tensor>> params;
  for (const auto &p : named) params.emplace_back(p.key(), p.value());
  std::mt19937_64 rng(17);
  int checked = 0, failed = 0;
  double worst = 0;
  std::set<std::string> modules;
  for (int trial = 0; trial < 2000 && checked < kGradParams; ++trial) {
    auto &[name, p] = params[rng() % params.size()];
    const auto idx = static_cast<int64_t>(rng() % static_cast<std::uint64_t>(p.numel()));
    const double analytic = p.grad().view(-1)[idx].item<double>();
    if (std::abs(analytic) < 1e-6) continue;
    const double h = 1e-6;
    double numeric;
    {
      torch::NoGradGuard guard;
      auto flat = p.view(-1);
      const double orig = flat[idx].item<double>();
      flat[idx] = orig + h;
      const double up = objective().item<double>();
      flat[idx] = orig - h;
      const double down = objective().item<double>();
      flat[idx] = orig;
      numeric = (up - down) / (2 * h);
    }
    const double rel = std::abs(numeric - analytic) / std::max(std::abs(analytic), std::abs(numeric));
    worst = std::max(worst, rel);
    failed += rel > kGradRelTol ? 1 : 0;
    modules.insert(name.substr(0, name.find('.')));
    ++checked;
  }
  std::string mods;
  for (const auto &m : modules) mods += (mods.empty() ? "" : ",") + m;
  return {checked >= 10 && failed == 0, std::to_string(checked) + " coordinates (" + mods + "), worst relative error " +
                                            fmt(worst, 8) + " (<= 1e-3), " + std::to_string(failed) + " over"};
}

Outcome metric_oracle() {
  std::mt19937_64 rng(6);
  int mismatches = 0;
  for (int set = 0; set < kMetricSets; ++set) {
    const int steps = 1 + static_cast<int>(rng() % 12);
    std::vector<CorrectionRecord> recs;
    for (int s = 0; s < steps; ++s) {
      const int n = 1 + static_cast<int>(rng() % 5);
      for (int i = 0; i < n; ++i) {
        CorrectionRecord r;
        r.step_key = "m" + std::to_string(set) + "/" + std::to_string(s);
        r.gt_status = status_from_index(static_cast<int>(rng() % 4));
        r.predicted_status = status_from_index(static_cast<int>(rng() % 4));
        r.was_correct_before = r.gt_status == Status::Correct;
        r.is_correct_after = rng() % 3 != 0;
        recs.push_back(r);
      }
    }
    std::shuffle(recs.begin(), recs.end(), rng);

    // Brute-force counts.
    long wrong = 0, fixed = 0, right = 0, broken = 0, after_ok = 0;
    std::map<std::string, std::pair<long, long>> per_step; // (components, ending correct)
    long conf[4][4] = {};
    for (const auto &r : recs) {
      if (r.was_correct_before) {
        ++right;
        if (!r.is_correct_after) ++broken;
      } else {
        ++wrong;
        if (r.is_correct_after) ++fixed;
      }
      if (r.is_correct_after) ++after_ok;
      auto &ps = per_step[r.step_key];
      ++ps.first;
      if (r.is_correct_after) ++ps.second;
      ++conf[static_cast<int>(r.gt_status)][static_cast<int>(r.predicted_status)];
    }
    long steps_ok = 0;
    for (const auto &[k, v] : per_step) steps_ok += v.first == v.second ? 1 : 0;

    const auto rep = report_from_records(recs);
    bool same = rep.component_acc == static_cast<double>(after_ok) / static_cast<double>(recs.size()) &&
                rep.step_acc == static_cast<double>(steps_ok) / static_cast<double>(per_step.size());
    same = same && (wrong == 0 ? !rep.cr.has_value()
                               : rep.cr && *rep.cr == static_cast<double>(fixed) / static_cast<double>(wrong));
    same = same && (right == 0 ? !rep.mpr.has_value()
                               : rep.mpr && *rep.mpr == static_cast<double>(broken) / static_cast<double>(right));
    for (int g = 0; g < 4; ++g)
      for (int p = 0; p < 4; ++p) same = same && rep.confusion[g][p] == conf[g][p];
    mismatches += same ? 0 : 1;
  }
  return {mismatches == 0, std::to_string(kMetricSets) + " random record sets, " + std::to_string(mismatches) +
                               " mismatches"};
}

Outcome setwise_calibration() {
  json cfg = micro_config();
  cfg["generator"]["manuals"] = 50;
  cfg["generator"]["steps"] = {6, 10};
  cfg["generator"]["draws_per_step"] = {1, 1};
  const auto ds = build_dataset_in_memory(cfg, 7);
  std::vector<std::string> ids;
  for (const auto &[id, m] : ds.manuals) ids.push_back(id);

  ErrorModel em;
  em.p = {kIdentityQ, 0.2, 0.05, 0.15};
  OracleCorrector oracle;
  const auto o = evaluate_setwise(ds, ids, em, 7, oracle);
  IdentityCorrector identity;
  const auto id = evaluate_setwise(ds, ids, em, 7, identity);
  const auto n = static_cast<long>(id.records.size());
  const double mtc = *id.report.mtc;
  const bool ok = *o.report.mtc == 0.0 && *o.report.chamfer_scaled == 0.0 && n >= kMinSetwiseComponents &&
                  std::abs(mtc - (1.0 - kIdentityQ)) <= kMtcTol;
  return {ok, "oracle MTC=" + fmt(*o.report.mtc, 6) + " chamfer_scaled=" + fmt(*o.report.chamfer_scaled, 6) +
                  "; identity q=0.6 over " + std::to_string(n) + " components MTC=" + fmt(mtc) +
                  " (0.4 +- 0.03)"};
}

Outcome padding_soundness() {
  const json cfg = micro_config();
  const auto ds = build_dataset_in_memory(cfg, 8);
  const auto mc = ModelConfig::from_config(cfg);
  auto model = make_model(mc, 8);
  model->eval();
  torch::NoGradGuard guard;

  // Pick a short sample and a longer one.
  std::size_t short_i = 0, long_i = 0;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto n = ds.samples[i].component_ids.size();
    if (n < ds.samples[short_i].component_ids.size()) short_i = i;
    if (n > ds.samples[long_i].component_ids.size()) long_i = i;
  }
  const auto in_s = correction_input(ds, ds.samples[short_i]);
  const auto in_l = correction_input(ds, ds.samples[long_i]);
  const auto ts = build_sample_tensors(in_s, mc), tl = build_sample_tensors(in_l, mc);
  const auto gs = build_targets(in_s), gl = build_targets(in_l);
  const int n = static_cast<int>(in_s.components.size());

  const auto alone = model->forward({ts});
  const auto padded = model->forward({tl, ts, tl});
  bool identical = true;
  for (std::size_t k = 0; k < alone.layers.size(); ++k) {
    const auto a = alone.layers[k].sample(0, n), b = padded.layers[k].sample(1, n);
    identical = identical && torch::equal(a.status, b.status) && torch::equal(a.pos_x, b.pos_x) &&
                torch::equal(a.pos_y, b.pos_y) && torch::equal(a.pos_z, b.pos_z) && torch::equal(a.rot, b.rot);
  }
  // Loss of the short sample, computed from its slice of the padded batch.
  CorrectionOutput slice;
  slice.valid_mask = torch::ones({1, n}, torch::kBool);
  for (const auto &l : padded.layers) {
    const auto s = l.sample(1, n);
    slice.layers.push_back({s.status.unsqueeze(0), s.pos_x.unsqueeze(0), s.pos_y.unsqueeze(0), s.pos_z.unsqueeze(0),
                            s.rot.unsqueeze(0)});
  }
  const auto la = compute_loss(alone, {gs}, {}), lb = compute_loss(slice, {gs}, {});
  const bool loss_same = la.total.item<float>() == lb.total.item<float>() &&
                         torch::equal(la.position, lb.position) && torch::equal(la.status, lb.status);
  return {identical && loss_same, "sample with " + std::to_string(n) + " components alone vs padded to " +
                                      std::to_string(in_l.components.size()) + ": outputs " +
                                      (identical ? "bit-identical" : "DIFFER") + ", loss " +
                                      (loss_same ? "bit-identical" : "DIFFERS")};
}

struct TrainedRun {
  ScaNet model{nullptr};
  TrainResult result;
  double seconds = 0;
};

Outcome overfit_smoke() {
  json cfg = toy_config();
  cfg["generator"]["manuals"] = 8;
  const auto ds = build_dataset_in_memory(cfg, 9);
  std::vector<std::string> keys(ds.splits.train.begin(), ds.splits.train.begin() + kOverfitSamples);
  cfg["train"]["epochs"] = 100000;
  cfg["train"]["max_iterations"] = kOverfitMaxIterations;
  const auto mc = ModelConfig::from_config(cfg);
  auto model = make_model(mc, 9);
  const auto tc = TrainConfig::from_config(cfg);

  MetricsReport best;
  std::int64_t at_iteration = 0;
  const auto t0 = std::chrono::steady_clock::now();
  TrainHooks hooks;
  hooks.train_keys = keys;
  hooks.val_keys = {};
  hooks.after_epoch = [&](const EpochRecord &r) {
    if (r.epoch % 5 != 0) return false;
    LearnedCorrector lc(model, tc.replace);
    best = evaluate_single_step(ds, keys, lc).report;
    model->train();
    at_iteration = r.iterations;
    std::cerr << "  [09] iter " << r.iterations << " loss " << fmt(r.train_loss) << " acc "
              << fmt(best.component_acc) << " CR " << fmt(best.cr.value_or(0)) << " MPR "
              << fmt(best.mpr.value_or(0)) << " (" << fmt(seconds_since(t0), 0) << " s)" << std::endl;
    return best.component_acc >= kOverfitAcc && best.cr.value_or(0) >= kOverfitCr &&
           best.mpr.value_or(1) <= kOverfitMpr;
  };
  const auto res = train(cfg, ds, model, {}, hooks);
  if (res.iterations != at_iteration) {
    LearnedCorrector lc(model, tc.replace);
    best = evaluate_single_step(ds, keys, lc).report;
    at_iteration = res.iterations;
  }
  const bool ok = best.component_acc >= kOverfitAcc && best.cr.value_or(0) >= kOverfitCr &&
                  best.mpr.value_or(1) <= kOverfitMpr;
  return {ok, std::to_string(kOverfitSamples) + " samples, " + std::to_string(at_iteration) +
                  " iterations: component acc " + fmt(best.component_acc) + " (>= 0.95), CR " +
                  fmt(best.cr.value_or(0)) + " (>= 0.90), MPR " + fmt(best.mpr.value_or(1)) + " (<= 0.05), " +
                  fmt(seconds_since(t0), 0) + " s"};
}

/// Trains from scratch until `budget` seconds would be exceeded by another epoch, writing
/// checkpoints under `out`, and returns the model with the best val component accuracy.
ScaNet train_within(const json &cfg, const Dataset &ds, std::uint64_t seed, const fs::path &out, double budget,
                    const std::string &tag) {
  auto model = make_model(ModelConfig::from_config(cfg), seed);
  const auto t0 = std::chrono::steady_clock::now();
  double last = 0, longest = 0;
  TrainHooks hooks;
  hooks.after_epoch = [&](const EpochRecord &r) {
    const double now = seconds_since(t0);
    longest = std::max(longest, now - last);
    last = now;
    std::cerr << "  [" << tag << "] epoch " << r.epoch << " iter " << r.iterations << " loss " << fmt(r.train_loss)
              << " val acc " << fmt(r.val_component_acc.value_or(-1)) << " (" << fmt(now, 0) << " s)"
              << std::endl;
    return now + longest > budget;
  };
  train(cfg, ds, model, out, hooks);
  return load_checkpoint(out / "best.ckpt").model;
}

Outcome toy_direction() {
  json cfg = toy_config();
  cfg["generator"]["manuals"] = kToyManuals;
  cfg["train"]["epochs"] = 1000;
  cfg["train"]["lr"] = kToyLr;
  cfg["train"]["batch"] = kToyBatch;
  cfg["train"]["cache_limit"] = 8192;
  const auto ds = build_dataset_in_memory(cfg, 10);
  const auto t0 = std::chrono::steady_clock::now();
  auto model = train_within(cfg, ds, 10, work_dir("toy_direction"), kToyBudgetSeconds, "10");
  const double train_s = seconds_since(t0);

  const auto keys = samples_of_manuals(ds, ds.splits.setwise_test);
  const auto tc = TrainConfig::from_config(cfg);
  const auto em = ErrorModel::from_config(cfg);
  IdentityCorrector identity;
  LearnedCorrector learned(model, tc.replace);
  const auto base = evaluate_single_step(ds, keys, identity).report;
  const auto got = evaluate_single_step(ds, keys, learned).report;
  const auto base_set = evaluate_setwise(ds, ds.splits.setwise_test, em, 10, identity).report;
  const auto got_set = evaluate_setwise(ds, ds.splits.setwise_test, em, 10, learned).report;
  const double injected = 1.0 - em.p[0];
  const bool ok = got.component_acc > base.component_acc && got.cr.value_or(0) > 0 &&
                  got.mpr.value_or(1) < injected;
  return {ok, std::to_string(ds.splits.setwise_test.size()) + " held-out manuals (" + std::to_string(keys.size()) +
                  " samples), " + fmt(train_s, 0) + " s training: component acc " + fmt(got.component_acc) +
                  " vs uncorrected " + fmt(base.component_acc) + ", CR " + fmt(got.cr.value_or(0)) +
                  " (> 0), MPR " + fmt(got.mpr.value_or(1)) + " (< " + fmt(injected, 2) +
                  "); setwise MTC " + fmt(got_set.mtc.value_or(-1)) + " vs uncorrected " +
                  fmt(base_set.mtc.value_or(-1))};
}

Outcome ablation_harness() {
  json base = micro_config();
  base["train"]["epochs"] = 1;
  base["train"]["batch"] = 2;
  const auto ds = build_dataset_in_memory(base, 11);
  const auto probe = correction_input(ds, ds.samples.front());
  const int c3 = base["model"]["c3"].get<int>();

  std::ostringstream detail;
  std::set<std::int64_t> counts;
  bool ok = true;
  for (const std::string flag : {"", "no_ar", "no_image_encoder", "no_6d_encoder"}) {
    json cfg = base;
    if (!flag.empty()) cfg["model"][flag] = true;
    validate_config(cfg);
    const auto mc = ModelConfig::from_config(cfg);
    auto model = make_model(mc, 11);
    const auto res = train(cfg, ds, model, {}, {});
    const auto n = parameter_count(*model);
    counts.insert(n);
    const bool trained = res.epochs.size() == 1 && std::isfinite(res.epochs.front().train_loss);
    ok = ok && trained;
    detail << (flag.empty() ? "full" : flag) << " " << n << (trained ? "" : " (training failed)") << "; ";
    if (flag == "no_image_encoder" || flag.empty()) {
      torch::NoGradGuard guard;
      model->eval();
      const auto q = model->encoder->forward(build_sample_tensors(probe, mc).components);
      const double image_max = q.slice(1, c3, 2 * c3).abs().max().item<double>();
      const bool want_zero = !flag.empty();
      ok = ok && (want_zero ? image_max == 0.0 : image_max > 0.0);
      detail << "image half max |q| " << image_max << "; ";
    }
  }
  ok = ok && counts.size() == 4;
  detail << counts.size() << " distinct parameter counts";
  return {ok, detail.str()};
}

/// One asymmetric shape and two components per step, so every step holds two same-shape
/// components with different colors.
json probe_config() {
  json cfg = toy_config();
  cfg["generator"]["shapes"] = {kProbeShape};
  cfg["generator"]["components_per_step"] = {2, 2};
  cfg["generator"]["manuals"] = 60;
  cfg["generator"]["steps"] = {3, 5};
  cfg["generator"]["draws_per_step"] = {2, 2};
  cfg["train"]["epochs"] = 1000;
  return cfg;
}

Outcome same_shape_probe() {
  if (symmetry_group(library_shape(kProbeShape)) != SymmetryGroup::trivial())
    return {false, std::string(kProbeShape) + " is rotationally symmetric"};
  const json cfg = probe_config();
  const auto ds = build_dataset_in_memory(cfg, 12);

  // Held-out scenes: the last step of fresh manuals, both components moved.
  json pcfg = cfg;
  pcfg["generator"]["manuals"] = kProbeTrials;
  pcfg["generator"]["draws_per_step"] = {1, 1};
  pcfg["error_model"]["p"] = {0.0, 1.0, 0.0, 0.0};
  const auto pds = build_dataset_in_memory(pcfg, 1200);
  std::vector<CorrectionInput> scenes;
  for (const auto &[id, m] : pds.manuals) {
    const Sample *last = nullptr;
    for (const auto &s : pds.samples)
      if (s.manual_id == id && (!last || s.step_index > last->step_index)) last = &s;
    auto in = correction_input(pds, *last);
    const bool valid = in.components.size() == 2 && in.labels[0] == Status::PositionError &&
                       in.labels[1] == Status::PositionError && !(in.gt[0] == in.gt[1]) &&
                       !(in.components[0].color == in.components[1].color);
    if (!valid) return {false, "probe scene " + in.key + " is not two moved same-shape components"};
    scenes.push_back(std::move(in));
  }

  struct Probe {
    int distinct = 0, both_correct = 0;
  };
  auto run = [&](const json &c, const std::string &name, const std::string &tag) {
    auto model = train_within(c, ds, 12, work_dir("probe_" + name), kProbeBudgetSeconds, tag);
    LearnedCorrector lc(model, TrainConfig::from_config(c).replace);
    Probe p;
    for (const auto &in : scenes) {
      const auto out = lc.correct({in}).front();
      p.distinct += out[0].pose == out[1].pose ? 0 : 1;
      p.both_correct += out[0].pose == in.gt[0] && out[1].pose == in.gt[1] ? 1 : 0;
    }
    return p;
  };
  const auto full = run(cfg, "full", "12 full");
  json no_im = cfg;
  no_im["model"]["no_image_encoder"] = true;
  const auto ablated = run(no_im, "no_im", "12 no-IM");

  const int n = static_cast<int>(scenes.size());
  const double rate = static_cast<double>(full.distinct) / n;
  return {n == kProbeTrials && rate >= kProbeDistinct,
          "full model: distinct poses in " + std::to_string(full.distinct) + "/" + std::to_string(n) + " (>= " +
              fmt(kProbeDistinct, 2) + "), both at GT in " + std::to_string(full.both_correct) +
              "; without image encoder: collisions in " + std::to_string(n - ablated.distinct) + "/" +
              std::to_string(n) + ", both at GT in " + std::to_string(ablated.both_correct)};
}

/// Relative path -> contents of every regular file under `root`.
std::map<std::string, std::string> snapshot(const fs::path &root) {
  std::map<std::string, std::string> files;
  for (const auto &e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    files[fs::relative(e.path(), root).generic_string()] = os.str();
  }
  return files;
}

int run_cli(const std::string &args) {
  const std::string cmd = "\"" + g_cli.string() + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

Outcome cli_determinism() {
  if (g_cli.empty() || !fs::exists(g_cli)) return {false, "scanet binary not given (--cli)"};
  const auto dir = work_dir("determinism");
  json cfg = micro_config();
  cfg["generator"]["manuals"] = 6;
  write_json_file(dir / "micro.json", cfg);
  const auto q = [](const fs::path &p) { return "\"" + p.string() + "\""; };

  // Same command line twice into the same place, comparing the complete output trees.
  std::vector<std::pair<std::string, std::string>> steps{
      {"gen", "gen --config " + q(dir / "micro.json") + " --out " + q(dir / "ds") + " --seed 13"},
      {"eval setwise", "eval --data " + q(dir / "ds") + " --corrector oracle --setwise --report " +
                           q(dir / "rep_setwise" / "oracle.json")},
      {"eval single-step", "eval --data " + q(dir / "ds") + " --corrector oracle --split val --report " +
                               q(dir / "rep_single" / "oracle.json")}};
  const std::vector<fs::path> outputs{dir / "ds", dir / "rep_setwise", dir / "rep_single"};
  std::ostringstream detail;
  bool ok = true;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::map<std::string, std::string> first;
    for (int round = 0; round < 2; ++round) {
      // The evals read ds, so regenerate it only for the gen step.
      fs::remove_all(outputs[i]);
      if (run_cli(steps[i].second) != 0) return {false, steps[i].first + " failed"};
      if (round == 0) first = snapshot(outputs[i]);
    }
    const auto second = snapshot(outputs[i]);
    std::size_t differing = 0;
    for (const auto &[k, v] : first) {
      const auto it = second.find(k);
      differing += it == second.end() || it->second != v ? 1 : 0;
    }
    const bool same = first.size() == second.size() && differing == 0 && !first.empty();
    ok = ok && same;
    detail << steps[i].first << " " << first.size() << " files " << (same ? "identical" : "DIFFER") << "; ";
  }
  return {ok, detail.str()};
}

} // namespace

int main(int argc, char **argv) {
  torch::set_num_threads(1);
  at::globalContext().setFlushDenormal(true);
  std::vector<int> ids;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) g_work = argv[++i];
    else if (a == "--cli" && i + 1 < argc) g_cli = argv[++i];
    else if (a == "all") for (int k = 1; k <= 13; ++k) ids.push_back(k);
    else ids.push_back(std::stoi(a));
  }
  if (g_work.empty()) g_work = fs::current_path() / "acceptance_work";
  fs::create_directories(g_work);

  const std::map<int, std::pair<std::string, std::function<Outcome()>>> criteria{
      {1, {"shape contract", shape_contract}},
      {2, {"pose normalization", pose_normalization}},
      {3, {"symmetry suite", symmetry_suite}},
      {4, {"loss suite", loss_suite}},
      {5, {"gradient check", gradient_check}},
      {6, {"metric oracle equivalence", metric_oracle}},
      {7, {"setwise calibration", setwise_calibration}},
      {8, {"padding soundness", padding_soundness}},
      {9, {"overfit smoke test", overfit_smoke}},
      {10, {"toy-scale direction", toy_direction}},
      {11, {"ablation harness", ablation_harness}},
      {12, {"same-shape discrimination probe", same_shape_probe}},
      {13, {"determinism", cli_determinism}},
  };
  int failures = 0;
  for (int id : ids) {
    const auto it = criteria.find(id);
    if (it == criteria.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    Outcome o;
    try {
      o = it->second.second();
    } catch (const std::exception &e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << std::setw(2) << std::setfill('0') << id << "] "
              << it->second.first << ": " << o.detail << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
