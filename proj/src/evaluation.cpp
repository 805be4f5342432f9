#include "scanet/evaluation.hpp"

#include <map>
#include <random>

#include "scanet/config.hpp"
#include "scanet/errors.hpp"
#include "scanet/geometry.hpp"
#include "scanet/image_io.hpp"
#include "scanet/training.hpp"

namespace scanet {

using nlohmann::json;
namespace fs = std::filesystem;

double component_accuracy(const std::vector<CorrectionRecord> &records) {
  if (records.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto &r : records) ok += r.is_correct_after ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

double step_accuracy(const std::vector<CorrectionRecord> &records) {
  std::map<std::string, bool> steps;
  for (const auto &r : records) {
    auto [it, inserted] = steps.emplace(r.step_key, true);
    it->second = it->second && r.is_correct_after;
  }
  if (steps.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto &[key, good] : steps) ok += good ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(steps.size());
}

std::optional<double> correction_rate(const std::vector<CorrectionRecord> &records) {
  std::size_t wrong = 0, fixed = 0;
  for (const auto &r : records) {
    if (r.was_correct_before) continue;
    ++wrong;
    fixed += r.is_correct_after ? 1 : 0;
  }
  if (wrong == 0) return std::nullopt;
  return static_cast<double>(fixed) / static_cast<double>(wrong);
}

std::optional<double> misplacement_rate(const std::vector<CorrectionRecord> &records) {
  std::size_t right = 0, broken = 0;
  for (const auto &r : records) {
    if (!r.was_correct_before) continue;
    ++right;
    broken += r.is_correct_after ? 0 : 1;
  }
  if (right == 0) return std::nullopt;
  return static_cast<double>(broken) / static_cast<double>(right);
}

ConfusionMatrix confusion_matrix(const std::vector<CorrectionRecord> &records) {
  ConfusionMatrix m{};
  for (const auto &r : records) ++m[static_cast<int>(r.gt_status)][static_cast<int>(r.predicted_status)];
  return m;
}

json MetricsReport::to_json() const {
  auto opt = [](const std::optional<double> &v) { return v ? json(*v) : json(nullptr); };
  json conf = json::array();
  for (const auto &row : confusion) conf.push_back(row);
  return {{"component_acc", component_acc}, {"step_acc", step_acc}, {"CR", opt(cr)},
          {"MPR", opt(mpr)},                {"MTC", opt(mtc)},      {"chamfer_scaled", opt(chamfer_scaled)},
          {"confusion", conf}};
}

MetricsReport report_from_records(const std::vector<CorrectionRecord> &records) {
  MetricsReport r;
  r.component_acc = component_accuracy(records);
  r.step_acc = step_accuracy(records);
  r.cr = correction_rate(records);
  r.mpr = misplacement_rate(records);
  r.confusion = confusion_matrix(records);
  return r;
}

std::vector<CorrectionRecord> make_records(const CorrectionInput &in, const std::vector<Correction> &cs) {
  const auto n = in.components.size();
  if (in.gt.size() != n || in.assembled.size() != n) throw DataError("problem " + in.key + " lacks ground truth");
  if (cs.size() != n) throw ShapeError("corrector returned the wrong number of corrections for " + in.key);
  std::vector<CorrectionRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto sym = symmetry_group(in.components[i].shape);
    CorrectionRecord r;
    r.step_key = in.key;
    r.was_correct_before = poses_equal(in.assembled[i], in.gt[i], sym);
    r.is_correct_after = poses_equal(cs[i].pose, in.gt[i], sym);
    r.gt_status = in.labels.size() == n ? in.labels[i] : label_error(in.gt[i], in.assembled[i], sym);
    r.predicted_status = cs[i].status;
    out.push_back(r);
  }
  return out;
}

std::vector<std::vector<Correction>> OracleCorrector::correct(const std::vector<CorrectionInput> &inputs) {
  std::vector<std::vector<Correction>> out;
  for (const auto &in : inputs) {
    if (in.gt.size() != in.components.size()) throw InputError("oracle corrector needs GT poses for " + in.key);
    std::vector<Correction> cs;
    for (std::size_t i = 0; i < in.components.size(); ++i) {
      const auto sym = symmetry_group(in.components[i].shape);
      cs.push_back({in.components[i].id, label_error(in.gt[i], in.assembled[i], sym), in.gt[i]});
    }
    out.push_back(std::move(cs));
  }
  return out;
}

std::vector<std::vector<Correction>> IdentityCorrector::correct(const std::vector<CorrectionInput> &inputs) {
  std::vector<std::vector<Correction>> out;
  for (const auto &in : inputs) {
    std::vector<Correction> cs;
    for (std::size_t i = 0; i < in.components.size(); ++i) {
      cs.push_back({in.components[i].id, Status::Correct, in.assembled[i]});
    }
    out.push_back(std::move(cs));
  }
  return out;
}

std::vector<std::vector<Correction>> LearnedCorrector::correct(const std::vector<CorrectionInput> &inputs) {
  return predict(model_, inputs, mode_, double_);
}

EvaluationResult evaluate_single_step(const Dataset &ds, const std::vector<std::string> &keys,
                                      CorrectorInterface &corrector) {
  EvaluationResult res;
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < keys.size(); start += kChunk) {
    std::vector<CorrectionInput> inputs;
    for (std::size_t i = start; i < std::min(keys.size(), start + kChunk); ++i) {
      inputs.push_back(correction_input(ds, ds.sample(keys[i])));
    }
    const auto cs = corrector.correct(inputs);
    if (cs.size() != inputs.size()) throw ShapeError("corrector returned the wrong number of results");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto recs = make_records(inputs[i], cs[i]);
      res.records.insert(res.records.end(), recs.begin(), recs.end());
    }
  }
  res.report = report_from_records(res.records);
  return res;
}

EvaluationResult evaluate_setwise(const Dataset &ds, const std::vector<std::string> &manual_ids,
                                  const ErrorModel &em, std::uint64_t seed, CorrectorInterface &corrector) {
  struct Run {
    const Manual *manual;
    std::mt19937_64 rng;
    AssemblyState state;
    std::vector<Pose6D> gt_poses; // parallel to state.placed
  };
  std::vector<Run> runs;
  std::size_t max_steps = 0;
  for (std::size_t m = 0; m < manual_ids.size(); ++m) {
    const Manual &man = ds.manual(manual_ids[m]);
    runs.push_back({&man, std::mt19937_64(derive_seed(seed, m)), AssemblyState{man.world_dims, {}}, {}});
    max_steps = std::max(max_steps, man.steps.size());
  }

  EvaluationResult res;
  for (std::size_t k = 0; k < max_steps; ++k) {
    std::vector<CorrectionInput> inputs;
    std::vector<Run *> active;
    for (auto &run : runs) {
      if (k >= run.manual->steps.size()) continue;
      const auto &step = run.manual->steps[k];
      const CorruptedStep corrupted = corrupt_step(step, run.manual->world_dims, em, run.rng);
      CorrectionInput in;
      in.key = run.manual->id + "/" + std::to_string(k);
      in.world_dims = run.manual->world_dims;
      in.base = run.state;
      in.manual = gt_state(*run.manual, k + 1);
      in.components = step.components;
      in.assembled = corrupted.poses;
      in.gt = step.gt_poses;
      in.labels = corrupted.labels;
      inputs.push_back(std::move(in));
      active.push_back(&run);
    }
    const auto cs = corrector.correct(inputs);
    if (cs.size() != inputs.size()) throw ShapeError("corrector returned the wrong number of results");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      auto recs = make_records(inputs[i], cs[i]);
      res.records.insert(res.records.end(), recs.begin(), recs.end());
      for (std::size_t j = 0; j < cs[i].size(); ++j) {
        active[i]->state.placed.push_back({inputs[i].components[j], cs[i][j].pose});
        active[i]->gt_poses.push_back(inputs[i].gt[j]);
      }
    }
  }

  res.report = report_from_records(res.records);
  std::size_t total = 0, wrong = 0;
  double chamfer_sum = 0;
  std::size_t chamfer_n = 0;
  for (const auto &run : runs) {
    for (std::size_t i = 0; i < run.state.placed.size(); ++i) {
      const auto &pl = run.state.placed[i];
      ++total;
      wrong += poses_equal(pl.pose, run.gt_poses[i], symmetry_group(pl.component.shape)) ? 0 : 1;
    }
    const auto final_cells = occupancy(run.state).cells;
    const auto gt_cells = occupancy(gt_state(*run.manual, run.manual->steps.size())).cells;
    if (!final_cells.empty() && !gt_cells.empty()) {
      chamfer_sum += chamfer_distance(final_cells, gt_cells);
      ++chamfer_n;
    }
  }
  if (total > 0) res.report.mtc = static_cast<double>(wrong) / static_cast<double>(total);
  if (chamfer_n > 0) res.report.chamfer_scaled = chamfer_sum / static_cast<double>(chamfer_n) * 1e5;
  return res;
}

void write_confusion_png(const ConfusionMatrix &m, const fs::path &path) {
  constexpr int kCell = 48;
  constexpr int kSize = 4 * kCell;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(kSize) * kSize * 3, 255);
  for (int g = 0; g < 4; ++g) {
    std::int64_t row = 0;
    for (auto v : m[g]) row += v;
    for (int p = 0; p < 4; ++p) {
      const double frac = row > 0 ? static_cast<double>(m[g][p]) / static_cast<double>(row) : 0.0;
      const auto shade = static_cast<std::uint8_t>(255.0 * (1.0 - frac));
      for (int y = g * kCell; y < (g + 1) * kCell; ++y) {
        for (int x = p * kCell; x < (p + 1) * kCell; ++x) {
          const bool border = y % kCell == 0 || x % kCell == 0;
          const auto i = (static_cast<std::size_t>(y) * kSize + x) * 3;
          rgb[i] = border ? 96 : shade;
          rgb[i + 1] = border ? 96 : shade;
          rgb[i + 2] = border ? 96 : 255;
        }
      }
    }
  }
  write_png(path, kSize, kSize, rgb);
}

} // namespace scanet
