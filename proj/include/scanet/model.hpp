#pragma once

// The full correction network and the conversion of assembly scenes into its input tensors.

#include <string>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "scanet/backbone.hpp"
#include "scanet/corrector.hpp"
#include "scanet/datagen.hpp"
#include "scanet/pose_encoder.hpp"
#include "scanet/scene.hpp"

namespace scanet {

struct ModelConfig {
  BackboneConfig backbone;
  EncoderConfig encoder;
  CorrectorConfig corrector;
  Int3 world_dims{16, 16, 12};
  Int3 component_box{8, 8, 4};
  CameraConfig camera;

  /// Reads the model, image, world and component_box sections. Throws ConfigError.
  static ModelConfig from_config(const nlohmann::json &cfg);
  void validate() const;
};

/// One correction problem: the state before the step, what the manual shows after it, and
/// where the assembler put the current step's components.
struct CorrectionInput {
  std::string key;
  Int3 world_dims;
  AssemblyState base;   // V: shape before the step
  AssemblyState manual; // state rendered as the manual image I
  std::vector<Component> components;
  std::vector<Pose6D> assembled; // P_i
  // Ground truth, when known (training, evaluation, oracle correction).
  std::vector<Pose6D> gt;
  std::vector<Status> labels;

  /// base plus the current components at their assembled poses (V').
  AssemblyState assembled_state() const;
};

/// Scene file layout: {"key", "world_dims", "base": state, "manual": state, "components": [...],
/// "assembled": [pose...], optional "gt": [pose...]}. "manual" defaults to base plus the
/// components at their GT poses when "gt" is present.
nlohmann::json to_json(const CorrectionInput &in);
/// Throws InputError on a malformed or inconsistent scene.
CorrectionInput correction_input_from_json(const nlohmann::json &j);

/// Single-step problem of a dataset sample: GT prefix as V, GT state after the step as I.
CorrectionInput correction_input(const Dataset &ds, const Sample &s);

/// Network inputs of one sample.
struct SampleTensors {
  torch::Tensor manual;   // [5, s, s]: RGB of I, projected V, projected C
  torch::Tensor assembly; // [5, s, s]: RGB of I', projected V', projected C
  ComponentBatch components;
};

/// Renders and voxelizes one problem. Image channels are scaled to [0, 1].
SampleTensors build_sample_tensors(const CorrectionInput &in, const ModelConfig &cfg);

struct Targets {
  torch::Tensor status, tx, ty, tz, rot; // [n] int64; rot is the canonical GT quarter turn
};

/// Throws DataError when the input carries no ground truth or a GT index leaves the grid.
Targets build_targets(const CorrectionInput &in);

struct ScaNetImpl : torch::nn::Module {
  explicit ScaNetImpl(const ModelConfig &cfg);

  /// Queries of one sample, [n, C2].
  torch::Tensor encode_queries(const SampleTensors &s);
  /// Every sample is computed on its own, so results do not depend on batch composition.
  CorrectionOutput forward(const std::vector<SampleTensors> &batch);

  ModelConfig cfg;
  Backbone backbone{nullptr};
  ComponentEncoder encoder{nullptr};
  Corrector corrector{nullptr};
};
TORCH_MODULE(ScaNet);

/// Converts sample tensors to the given floating dtype.
SampleTensors to_dtype(const SampleTensors &s, torch::Dtype dtype);

} // namespace scanet
