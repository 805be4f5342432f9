#pragma once

// Correction metrics (component/step accuracy, CR, MPR, MTC, scaled Chamfer distance, status
// confusion), pluggable correctors, and the single-step and setwise protocols.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scanet/corrector.hpp"
#include "scanet/datagen.hpp"
#include "scanet/model.hpp"

namespace scanet {

struct CorrectionRecord {
  std::string step_key; // components sharing a key belong to one step
  bool was_correct_before = false;
  bool is_correct_after = false;
  Status gt_status = Status::Correct;
  Status predicted_status = Status::Correct;
};

using ConfusionMatrix = std::array<std::array<std::int64_t, 4>, 4>; // [gt][predicted]

double component_accuracy(const std::vector<CorrectionRecord> &records);
/// A step counts as correct iff every one of its components ends correct.
double step_accuracy(const std::vector<CorrectionRecord> &records);
/// Originally wrong components that end correct / originally wrong components; empty when
/// nothing was wrong.
std::optional<double> correction_rate(const std::vector<CorrectionRecord> &records);
/// Originally correct components that end wrong / originally correct components; empty when
/// nothing was correct.
std::optional<double> misplacement_rate(const std::vector<CorrectionRecord> &records);
ConfusionMatrix confusion_matrix(const std::vector<CorrectionRecord> &records);

struct MetricsReport {
  double component_acc = 0;
  double step_acc = 0;
  std::optional<double> cr, mpr;
  std::optional<double> mtc, chamfer_scaled; // setwise only
  ConfusionMatrix confusion{};

  /// Keys: component_acc, step_acc, CR, MPR, MTC, chamfer_scaled, confusion. Undefined
  /// values are null.
  nlohmann::json to_json() const;
};

MetricsReport report_from_records(const std::vector<CorrectionRecord> &records);

/// Records for one problem. Needs ground truth on `in`.
std::vector<CorrectionRecord> make_records(const CorrectionInput &in, const std::vector<Correction> &corrections);

class CorrectorInterface {
public:
  virtual ~CorrectorInterface() = default;
  /// One correction list per input, each as long as its component list.
  virtual std::vector<std::vector<Correction>> correct(const std::vector<CorrectionInput> &inputs) = 0;
};

/// Returns the ground-truth poses, with the status each assembled pose really had.
class OracleCorrector : public CorrectorInterface {
public:
  std::vector<std::vector<Correction>> correct(const std::vector<CorrectionInput> &inputs) override;
};

/// Returns the assembled poses unchanged with every status Correct.
class IdentityCorrector : public CorrectorInterface {
public:
  std::vector<std::vector<Correction>> correct(const std::vector<CorrectionInput> &inputs) override;
};

class LearnedCorrector : public CorrectorInterface {
public:
  LearnedCorrector(ScaNet model, ReplaceMode mode, bool double_precision = false)
      : model_(std::move(model)), mode_(mode), double_(double_precision) {}
  std::vector<std::vector<Correction>> correct(const std::vector<CorrectionInput> &inputs) override;

private:
  ScaNet model_;
  ReplaceMode mode_;
  bool double_;
};

struct EvaluationResult {
  MetricsReport report;
  std::vector<CorrectionRecord> records;
};

/// Corrects each listed sample on its own.
EvaluationResult evaluate_single_step(const Dataset &ds, const std::vector<std::string> &sample_keys,
                                      CorrectorInterface &corrector);

/// Assembles each listed manual step by step: the noisy oracle assembler corrupts the GT
/// poses of the current components with `model`, the corrector runs on the carried-forward
/// state, and its output is carried into the next step. MTC is the fraction of all
/// components misassembled in the completed models; chamfer_scaled is the mean over manuals
/// of the Chamfer distance between final and GT occupancy, times 1e5.
EvaluationResult evaluate_setwise(const Dataset &ds, const std::vector<std::string> &manual_ids,
                                  const ErrorModel &model, std::uint64_t seed, CorrectorInterface &corrector);

/// Row-normalised heatmap of the confusion matrix, rows = GT, columns = prediction.
void write_confusion_png(const ConfusionMatrix &m, const std::filesystem::path &path);

} // namespace scanet
