#pragma once

// Transformer correction module over f_diff with one query per assembled component, the
// three-head pose corrector, and symmetry-aware decoding of its outputs.

#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "scanet/datagen.hpp"
#include "scanet/geometry.hpp"

namespace scanet {

struct CorrectorConfig {
  int d_model = 256;
  int encoder_layers = 3;
  int decoder_layers = 3;
  int heads = 8;
  int ffn_dim = 512;
  double dropout = 0.0;
  Int3 world_dims{16, 16, 12};

  void validate() const;
};

struct QueryBatch {
  torch::Tensor queries;    // [B, L_max, d]; padded rows are exact zeros
  torch::Tensor valid_mask; // bool [B, L_max]

  std::vector<int> lengths() const;
};

/// Zero-pads per-sample [n_i, d] query lists to the longest. Throws InputError for an empty
/// batch or an empty list, ShapeError for mismatched widths.
QueryBatch build_query_batch(const std::vector<torch::Tensor> &per_sample);

/// Head outputs of one decoder layer.
struct LayerOutput {
  torch::Tensor status; // [B, L, 4]
  torch::Tensor pos_x;  // [B, L, Gx]
  torch::Tensor pos_y;  // [B, L, Gy]
  torch::Tensor pos_z;  // [B, L, Gz]
  torch::Tensor rot;    // [B, L, 4]

  /// Rows [0, n) of sample b.
  LayerOutput sample(int b, int n) const;
};

struct CorrectionOutput {
  std::vector<LayerOutput> layers; // one per decoder layer, last = final prediction
  torch::Tensor valid_mask;
};

/// Fixed 2D sine/cosine encoding of an h x w token grid, [h*w, d]; d must be divisible by 4.
torch::Tensor sine_position_encoding(int h, int w, int d);

struct EncoderLayerImpl : torch::nn::Module {
  EncoderLayerImpl(int d, int heads, int ffn, double dropout);
  torch::Tensor forward(const torch::Tensor &src, const torch::Tensor &pos);

  torch::nn::MultiheadAttention attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(EncoderLayer);

struct DecoderLayerImpl : torch::nn::Module {
  DecoderLayerImpl(int d, int heads, int ffn, double dropout);
  torch::Tensor forward(const torch::Tensor &tgt, const torch::Tensor &query_pos,
                        const torch::Tensor &memory, const torch::Tensor &pos);

  torch::nn::MultiheadAttention self_attn{nullptr}, cross_attn{nullptr};
  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
  torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr}, norm3{nullptr};
  torch::nn::Dropout drop{nullptr};
};
TORCH_MODULE(DecoderLayer);

/// Two-layer MLP head.
struct HeadImpl : torch::nn::Module {
  HeadImpl(int d, int out);
  torch::Tensor forward(const torch::Tensor &x);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Head);

struct CorrectorImpl : torch::nn::Module {
  explicit CorrectorImpl(const CorrectorConfig &cfg);

  /// f_diff [B, d, h, w] plus padded queries -> head outputs for every decoder layer.
  /// Each sample attends only over its own real queries; padded output rows are zeros.
  CorrectionOutput forward(const torch::Tensor &f_diff, const QueryBatch &batch);
  /// One sample: f_diff [d, h, w], queries [n, d] -> per-layer outputs with B = 1.
  std::vector<LayerOutput> forward_sample(const torch::Tensor &f_diff, const torch::Tensor &queries);

  CorrectorConfig cfg;
  std::vector<EncoderLayer> encoder;
  std::vector<DecoderLayer> decoder;
  torch::nn::LayerNorm decoder_norm{nullptr};
  Head status_head{nullptr}, pos_head{nullptr}, rot_head{nullptr};
};
TORCH_MODULE(Corrector);

enum class ReplaceMode { Selective, Full };
ReplaceMode replace_mode_from_string(const std::string &s);

struct Correction {
  int component_id = 0;
  Status status = Status::Correct;
  Pose6D pose;

  bool operator==(const Correction &) const = default;
};

/// Decodes the final-layer outputs of one sample (tensors with a leading [n] axis, or [1, n]).
/// Status, position and rotation take the first argmax; the rotation is canonicalized under
/// each component's symmetry. Selective mode keeps the original fields the predicted status
/// says are right; full mode replaces the whole pose unless the status is Correct.
std::vector<Correction> decode_predictions(const LayerOutput &out, const std::vector<int> &component_ids,
                                           const std::vector<Pose6D> &original_poses,
                                           const std::vector<SymmetryGroup> &syms,
                                           const Int3 &world_dims,
                                           ReplaceMode mode = ReplaceMode::Selective);

nlohmann::json to_json(const Correction &c);
nlohmann::json corrections_to_json(const std::vector<Correction> &cs);

} // namespace scanet
