#pragma once

// Convolutional backbone: one weight-shared image+shape branch applied to the manual and the
// assembly inputs, then the difference extractor producing f_diff.

#include <torch/torch.h>

namespace scanet {

/// Group count used by every GroupNorm: 8 when it divides the channels, else 1.
int norm_groups(int channels);

/// Basic residual block (two 3x3 convs, GroupNorm) with a projection shortcut when the channel
/// count or stride changes. `bias` puts learnable biases on the first conv and the shortcut.
struct ResBlock2dImpl : torch::nn::Module {
  ResBlock2dImpl(int in, int out, int stride, bool bias = false);
  torch::Tensor forward(const torch::Tensor &x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, proj{nullptr};
  torch::nn::GroupNorm gn1{nullptr}, gn2{nullptr}, proj_gn{nullptr};
};
TORCH_MODULE(ResBlock2d);

/// Single hourglass: encoder/decoder with a residual skip at every level.
struct HourglassImpl : torch::nn::Module {
  HourglassImpl(int depth, int channels);
  torch::Tensor forward(const torch::Tensor &x);

  int depth;
  std::vector<ResBlock2d> up, down, after;
  ResBlock2d bottom{nullptr};

private:
  torch::Tensor level(int k, const torch::Tensor &x);
};
TORCH_MODULE(Hourglass);

struct BackboneConfig {
  int c1 = 128;
  int c2 = 256;
  int stem_channels = 64;
  int hourglass_depth = 3;
  int image_size = 128;
  bool with_assembly_branch = true;

  /// Throws ConfigError on inconsistent widths or an image size the hourglass cannot halve.
  void validate() const;
};

/// Input channels of a branch: RGB, projected state shape V, projected component set C.
inline constexpr int kBranchChannels = 5;

/// Fusion stem + residual downsampling + hourglass: [B, 5, s, s] -> [B, C1, s/4, s/4].
struct BranchImpl : torch::nn::Module {
  explicit BranchImpl(const BackboneConfig &cfg);
  torch::Tensor forward(const torch::Tensor &x);

  int image_size;
  torch::nn::Conv2d stem{nullptr};
  torch::nn::GroupNorm stem_gn{nullptr};
  ResBlock2d down{nullptr};
  Hourglass hourglass{nullptr};
};
TORCH_MODULE(Branch);

/// Two stride-2 residual blocks over concat(f, f'): [B, 2C1, h, w] -> [B, C2, h/4, w/4].
/// Without the assembly branch f' is a learned constant, whose contribution through the first
/// block reduces to the learned biases of its first conv and shortcut, so the block takes C1
/// input channels.
struct DifferenceExtractorImpl : torch::nn::Module {
  DifferenceExtractorImpl(int c1, int c2, bool with_assembly_branch);
  torch::Tensor forward(const torch::Tensor &f, const torch::Tensor &f_prime);
  torch::Tensor forward(const torch::Tensor &f);

  int c1;
  bool with_assembly_branch;
  ResBlock2d block1{nullptr}, block2{nullptr};
};
TORCH_MODULE(DifferenceExtractor);

struct BackboneImpl : torch::nn::Module {
  explicit BackboneImpl(const BackboneConfig &cfg);

  /// f or f' for one input stack. Throws ShapeError unless x is [B, 5, s, s].
  torch::Tensor encode_branch(const torch::Tensor &x);
  /// f_diff from both input stacks; `assembly` is ignored without the assembly branch.
  torch::Tensor forward(const torch::Tensor &manual, const torch::Tensor &assembly);

  BackboneConfig cfg;
  Branch branch{nullptr};
  DifferenceExtractor extractor{nullptr};
};
TORCH_MODULE(Backbone);

/// Total number of scalar parameters.
std::int64_t parameter_count(const torch::nn::Module &m);

} // namespace scanet
