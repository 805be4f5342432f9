#include "scanet/pose_encoder.hpp"

#include "scanet/errors.hpp"
#include "scanet/scene.hpp"
#include "scanet/tensor_util.hpp"

namespace scanet {

namespace nn = torch::nn;

void EncoderConfig::validate() const {
  if (c3 < 1 || voxel_width < 1 || image_width < 2) throw ConfigError("encoder widths must be positive");
  if (!with_pose_encoder && with_image_encoder) {
    throw ConfigError("removing the 6D pose encoder also removes the image encoder");
  }
}

torch::Tensor voxel_tensor(const VoxelGrid &shape, const Int3 &box) {
  const Int3 d = shape.dims();
  if (d.x > box.x || d.y > box.y || d.z > box.z) {
    throw InputError("component of dims [" + std::to_string(d.x) + "," + std::to_string(d.y) + "," +
                     std::to_string(d.z) + "] does not fit the component box");
  }
  auto t = torch::zeros({1, box.x, box.y, box.z});
  auto a = t.accessor<float, 4>();
  for (const auto &c : shape.cells()) a[0][c.x][c.y][c.z] = 1.0f;
  return t;
}

torch::Tensor posed_voxel_tensor(const VoxelGrid &shape, const Pose6D &pose, const Int3 &world) {
  auto t = torch::zeros({1, world.x, world.y, world.z});
  auto a = t.accessor<float, 4>();
  for (const auto &c : transform_component(shape, pose)) {
    if (c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < world.x && c.y < world.y && c.z < world.z) {
      a[0][c.x][c.y][c.z] = 1.0f;
    }
  }
  return t;
}

namespace {

nn::Sequential conv3d_gn_relu(nn::Sequential seq, int in, int out, int stride) {
  seq->push_back(nn::Conv3d(nn::Conv3dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
  seq->push_back(nn::GroupNorm(nn::GroupNormOptions(norm_groups(out), out)));
  seq->push_back(nn::ReLU());
  return seq;
}

} // namespace

VoxelEncoderImpl::VoxelEncoderImpl(int width, int c3) {
  nn::Sequential seq;
  conv3d_gn_relu(seq, 1, width, 1);
  conv3d_gn_relu(seq, width, 2 * width, 2);
  conv3d_gn_relu(seq, 2 * width, c3, 2);
  seq->push_back(nn::AdaptiveAvgPool3d(nn::AdaptiveAvgPool3dOptions(1)));
  seq->push_back(nn::Flatten());
  net = register_module("net", seq);
}

torch::Tensor VoxelEncoderImpl::forward(const torch::Tensor &voxels) {
  if (voxels.dim() != 5 || voxels.size(1) != 1) {
    throw ShapeError("voxel encoder expects [n, 1, X, Y, Z], got " + shape_string(voxels));
  }
  return net->forward(voxels);
}

PoseEncoderImpl::PoseEncoderImpl(int c3) {
  fc1 = register_module("fc1", nn::Linear(6, c3));
  fc2 = register_module("fc2", nn::Linear(c3, c3));
}

torch::Tensor PoseEncoderImpl::forward(const torch::Tensor &p) {
  if (p.dim() != 2 || p.size(1) != 6) throw ShapeError("pose encoder expects [n, 6], got " + shape_string(p));
  if (p.numel() > 0 && (p.min().item<double>() < 0.0 || p.max().item<double>() > 1.0)) {
    throw InputError("pose encoder inputs must be normalized to [0, 1]");
  }
  return fc2(torch::relu(fc1(p)));
}

ImageEncoderImpl::ImageEncoderImpl(int width, int c3) {
  nn::Sequential seq;
  const int w0 = width / 2;
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(3, w0, 3).stride(2).padding(1).bias(false)));
  seq->push_back(nn::GroupNorm(nn::GroupNormOptions(norm_groups(w0), w0)));
  seq->push_back(nn::ReLU());
  seq->push_back(ResBlock2d(w0, width, 2));
  seq->push_back(ResBlock2d(width, 2 * width, 2));
  seq->push_back(ResBlock2d(2 * width, 4 * width, 2));
  seq->push_back(ResBlock2d(4 * width, 4 * width, 2));
  seq->push_back(nn::AdaptiveAvgPool2d(nn::AdaptiveAvgPool2dOptions(1)));
  seq->push_back(nn::Flatten());
  net = register_module("net", seq);
  out = register_module("out", nn::Linear(4 * width, c3));
}

torch::Tensor ImageEncoderImpl::forward(const torch::Tensor &images) {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw ShapeError("image encoder expects [n, 3, s, s], got " + shape_string(images));
  }
  return out(net->forward(images));
}

ComponentEncoderImpl::ComponentEncoderImpl(const EncoderConfig &c) : cfg(c) {
  cfg.validate();
  voxel = register_module("voxel", VoxelEncoder(cfg.voxel_width, cfg.c3));
  if (cfg.with_pose_encoder) pose = register_module("pose", PoseEncoder(cfg.c3));
  if (cfg.with_image_encoder) image = register_module("image", ImageEncoder(cfg.image_width, cfg.c3));
}

torch::Tensor ComponentEncoderImpl::forward(const ComponentBatch &b) {
  torch::Tensor shape_pose;
  if (cfg.with_pose_encoder) {
    shape_pose = voxel(b.voxels) + pose(b.norm_poses);
  } else {
    shape_pose = voxel(b.posed);
  }
  torch::Tensor img = cfg.with_image_encoder ? image(b.images) : torch::zeros_like(shape_pose);
  return torch::cat({shape_pose, img}, 1);
}

} // namespace scanet
