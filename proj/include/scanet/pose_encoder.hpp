#pragma once

// Component pose encoder: 3D voxel encoder + 6D pose encoder + 2D image encoder, producing one
// C2-dim query per assembled component.

#include <torch/torch.h>

#include "scanet/backbone.hpp"
#include "scanet/geometry.hpp"

namespace scanet {

struct EncoderConfig {
  int c3 = 128;
  int voxel_width = 32;
  int image_width = 32;
  bool with_image_encoder = true;
  /// False removes the 6D pose encoder (and forces with_image_encoder off); the voxel encoder
  /// then sees the component already placed in the world grid.
  bool with_pose_encoder = true;

  void validate() const;
};

/// Occupancy of `shape` in a zero-padded box, origin-aligned, as [1, bx, by, bz].
/// Throws InputError if the shape does not fit.
torch::Tensor voxel_tensor(const VoxelGrid &shape, const Int3 &box);

/// Occupancy of the component placed at `pose` in the world grid, as [1, Gx, Gy, Gz]; cells
/// outside the world are dropped.
torch::Tensor posed_voxel_tensor(const VoxelGrid &shape, const Pose6D &pose, const Int3 &world);

/// Conv3d-GroupNorm-ReLU x3 (the last two stride 2), global average pool: [n,1,X,Y,Z] -> [n,C3].
struct VoxelEncoderImpl : torch::nn::Module {
  VoxelEncoderImpl(int width, int c3);
  torch::Tensor forward(const torch::Tensor &voxels);

  torch::nn::Sequential net{nullptr};
};
TORCH_MODULE(VoxelEncoder);

/// Two fully connected layers over normalized poses: [n, 6] -> [n, C3].
/// Throws InputError if any input lies outside [0, 1].
struct PoseEncoderImpl : torch::nn::Module {
  explicit PoseEncoderImpl(int c3);
  torch::Tensor forward(const torch::Tensor &norm_poses);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(PoseEncoder);

/// Residual image encoder: stem, four stride-2 residual stages, global pool, linear to C3.
/// [n, 3, s, s] -> [n, C3].
struct ImageEncoderImpl : torch::nn::Module {
  ImageEncoderImpl(int width, int c3);
  torch::Tensor forward(const torch::Tensor &images);

  torch::nn::Sequential net{nullptr};
  torch::nn::Linear out{nullptr};
};
TORCH_MODULE(ImageEncoder);

/// Inputs for the n components of one sample.
struct ComponentBatch {
  torch::Tensor voxels;     // [n, 1, bx, by, bz] component shapes in the component box
  torch::Tensor posed;      // [n, 1, Gx, Gy, Gz]; only needed without the pose encoder
  torch::Tensor norm_poses; // [n, 6]
  torch::Tensor images;     // [n, 3, s, s]; only needed with the image encoder
};

struct ComponentEncoderImpl : torch::nn::Module {
  explicit ComponentEncoderImpl(const EncoderConfig &cfg);

  /// [n, 2*C3]: concat(voxel + pose features, image features). Ablated halves are zeros.
  torch::Tensor forward(const ComponentBatch &batch);

  EncoderConfig cfg;
  VoxelEncoder voxel{nullptr};
  PoseEncoder pose{nullptr};
  ImageEncoder image{nullptr};
};
TORCH_MODULE(ComponentEncoder);

} // namespace scanet
