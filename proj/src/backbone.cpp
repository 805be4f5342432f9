#include "scanet/backbone.hpp"

#include "scanet/errors.hpp"
#include "scanet/tensor_util.hpp"

namespace scanet {

namespace nn = torch::nn;

int norm_groups(int channels) { return channels % 8 == 0 ? 8 : 1; }

namespace {

nn::Conv2d conv(int in, int out, int k, int stride, bool bias) {
  return nn::Conv2d(nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(bias));
}

nn::GroupNorm gn(int channels) { return nn::GroupNorm(nn::GroupNormOptions(norm_groups(channels), channels)); }

} // namespace

ResBlock2dImpl::ResBlock2dImpl(int in, int out, int stride, bool bias) {
  conv1 = register_module("conv1", conv(in, out, 3, stride, bias));
  gn1 = register_module("gn1", gn(out));
  conv2 = register_module("conv2", conv(out, out, 3, 1, false));
  gn2 = register_module("gn2", gn(out));
  if (in != out || stride != 1 || bias) {
    proj = register_module("proj", conv(in, out, 1, stride, bias));
    proj_gn = register_module("proj_gn", gn(out));
  }
}

torch::Tensor ResBlock2dImpl::forward(const torch::Tensor &x) {
  auto y = torch::relu(gn1(conv1(x)));
  y = gn2(conv2(y));
  auto skip = proj ? proj_gn(proj(x)) : x;
  return torch::relu(y + skip);
}

HourglassImpl::HourglassImpl(int depth_, int channels) : depth(depth_) {
  for (int k = 0; k < depth; ++k) {
    up.push_back(register_module("up" + std::to_string(k), ResBlock2d(channels, channels, 1)));
    down.push_back(register_module("down" + std::to_string(k), ResBlock2d(channels, channels, 1)));
    after.push_back(register_module("after" + std::to_string(k), ResBlock2d(channels, channels, 1)));
  }
  bottom = register_module("bottom", ResBlock2d(channels, channels, 1));
}

torch::Tensor HourglassImpl::level(int k, const torch::Tensor &x) {
  auto skip = up[k](x);
  auto low = down[k](torch::max_pool2d(x, 2));
  low = k + 1 < depth ? level(k + 1, low) : bottom(low);
  low = after[k](low);
  return skip + torch::upsample_nearest2d(low, std::vector<int64_t>{x.size(2), x.size(3)});
}

torch::Tensor HourglassImpl::forward(const torch::Tensor &x) { return level(0, x); }

void BackboneConfig::validate() const {
  if (c1 < 1 || c2 != 2 * c1) throw ConfigError("backbone needs C2 = 2 * C1");
  if (stem_channels < 1) throw ConfigError("stem_channels must be positive");
  if (hourglass_depth < 1) throw ConfigError("hourglass depth must be >= 1");
  if (image_size < 16 || image_size % 16 != 0) throw ConfigError("image size must be a multiple of 16");
  if ((image_size / 4) % (1 << hourglass_depth) != 0) {
    throw ConfigError("image size " + std::to_string(image_size) + " cannot be halved " +
                      std::to_string(hourglass_depth) + " times after the stem");
  }
}

BranchImpl::BranchImpl(const BackboneConfig &cfg) : image_size(cfg.image_size) {
  stem = register_module("stem", conv(kBranchChannels, cfg.stem_channels, 7, 2, false));
  stem_gn = register_module("stem_gn", gn(cfg.stem_channels));
  down = register_module("down", ResBlock2d(cfg.stem_channels, cfg.c1, 2));
  hourglass = register_module("hourglass", Hourglass(cfg.hourglass_depth, cfg.c1));
}

torch::Tensor BranchImpl::forward(const torch::Tensor &x) {
  return hourglass(down(torch::relu(stem_gn(stem(x)))));
}

DifferenceExtractorImpl::DifferenceExtractorImpl(int c1_, int c2, bool with_assembly)
    : c1(c1_), with_assembly_branch(with_assembly) {
  block1 = register_module("block1", ResBlock2d(with_assembly ? 2 * c1 : c1, c2, 2, !with_assembly));
  block2 = register_module("block2", ResBlock2d(c2, c2, 2));
}

torch::Tensor DifferenceExtractorImpl::forward(const torch::Tensor &f, const torch::Tensor &f_prime) {
  if (!with_assembly_branch) return forward(f);
  if (f.sizes() != f_prime.sizes() || f.dim() != 4 || f.size(1) != c1) {
    throw ShapeError("difference extractor expects two [B, " + std::to_string(c1) +
                     ", h, w] maps, got " + shape_string(f) + " and " + shape_string(f_prime));
  }
  return block2(block1(torch::cat({f, f_prime}, 1)));
}

torch::Tensor DifferenceExtractorImpl::forward(const torch::Tensor &f) {
  if (f.dim() != 4 || f.size(1) != c1) {
    throw ShapeError("difference extractor expects [B, " + std::to_string(c1) + ", h, w], got " +
                     shape_string(f));
  }
  if (with_assembly_branch) throw ShapeError("difference extractor needs the assembly feature");
  return block2(block1(f));
}

BackboneImpl::BackboneImpl(const BackboneConfig &c) : cfg(c) {
  cfg.validate();
  branch = register_module("branch", Branch(cfg));
  extractor = register_module("extractor", DifferenceExtractor(cfg.c1, cfg.c2, cfg.with_assembly_branch));
}

torch::Tensor BackboneImpl::encode_branch(const torch::Tensor &x) {
  if (x.dim() != 4 || x.size(1) != kBranchChannels || x.size(2) != cfg.image_size ||
      x.size(3) != cfg.image_size) {
    throw ShapeError("branch input must be [B, 5, " + std::to_string(cfg.image_size) + ", " +
                     std::to_string(cfg.image_size) + "], got " + shape_string(x));
  }
  return branch(x);
}

torch::Tensor BackboneImpl::forward(const torch::Tensor &manual, const torch::Tensor &assembly) {
  auto f = encode_branch(manual);
  if (!cfg.with_assembly_branch) return extractor->forward(f);
  return extractor->forward(f, encode_branch(assembly));
}

std::int64_t parameter_count(const torch::nn::Module &m) {
  std::int64_t n = 0;
  for (const auto &p : m.parameters()) n += p.numel();
  return n;
}

} // namespace scanet
