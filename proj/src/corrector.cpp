#include "scanet/corrector.hpp"

#include <cmath>

#include "scanet/errors.hpp"
#include "scanet/tensor_util.hpp"

namespace scanet {

namespace nn = torch::nn;
using nlohmann::json;

void CorrectorConfig::validate() const {
  if (d_model < 4 || d_model % 4 != 0) throw ConfigError("d_model must be a positive multiple of 4");
  if (heads < 1 || d_model % heads != 0) throw ConfigError("attention heads must divide d_model");
  if (decoder_layers < 1) throw ConfigError("decoder needs at least one layer");
  if (encoder_layers < 0) throw ConfigError("encoder layer count must be >= 0");
  if (ffn_dim < 1) throw ConfigError("ffn_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (world_dims.x < 2 || world_dims.y < 2 || world_dims.z < 2) throw ConfigError("world too small");
}

std::vector<int> QueryBatch::lengths() const {
  const auto sums = valid_mask.sum(1).to(torch::kLong);
  std::vector<int> out;
  for (int b = 0; b < sums.size(0); ++b) out.push_back(static_cast<int>(sums[b].item<int64_t>()));
  return out;
}

QueryBatch build_query_batch(const std::vector<torch::Tensor> &per_sample) {
  if (per_sample.empty()) throw InputError("cannot build a query batch from zero samples");
  const int64_t d = per_sample.front().size(-1);
  int64_t l_max = 0;
  for (const auto &q : per_sample) {
    if (q.dim() != 2 || q.size(1) != d) throw ShapeError("queries must be [n, d], got " + shape_string(q));
    if (q.size(0) == 0) throw InputError("a sample has no component queries");
    l_max = std::max(l_max, q.size(0));
  }
  const auto B = static_cast<int64_t>(per_sample.size());
  QueryBatch qb;
  qb.valid_mask = torch::zeros({B, l_max}, torch::kBool);
  std::vector<torch::Tensor> rows;
  for (int64_t b = 0; b < B; ++b) {
    const auto n = per_sample[b].size(0);
    auto padded = per_sample[b];
    if (n < l_max) padded = torch::cat({padded, torch::zeros({l_max - n, d}, padded.options())});
    rows.push_back(padded);
    qb.valid_mask[b].slice(0, 0, n).fill_(true);
  }
  qb.queries = torch::stack(rows);
  return qb;
}

LayerOutput LayerOutput::sample(int b, int n) const {
  auto take = [&](const torch::Tensor &t) { return t[b].slice(0, 0, n); };
  return {take(status), take(pos_x), take(pos_y), take(pos_z), take(rot)};
}

torch::Tensor sine_position_encoding(int h, int w, int d) {
  if (d % 4 != 0) throw ShapeError("position encoding width must be divisible by 4");
  const int half = d / 2;
  auto enc = torch::zeros({h * w, d});
  auto a = enc.accessor<float, 2>();
  const double scale = 2.0 * M_PI;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Normalized cumulative coordinates, as in the DETR sine embedding.
      const double coords[2] = {(y + 1.0) / h * scale, (x + 1.0) / w * scale};
      for (int axis = 0; axis < 2; ++axis) {
        for (int i = 0; i < half; ++i) {
          const double freq = std::pow(10000.0, 2.0 * (i / 2) / half);
          const double v = coords[axis] / freq;
          a[y * w + x][axis * half + i] = static_cast<float>(i % 2 == 0 ? std::sin(v) : std::cos(v));
        }
      }
    }
  }
  return enc;
}

EncoderLayerImpl::EncoderLayerImpl(int d, int heads, int ffn, double dropout) {
  attn = register_module("attn", nn::MultiheadAttention(nn::MultiheadAttentionOptions(d, heads).dropout(dropout)));
  fc1 = register_module("fc1", nn::Linear(d, ffn));
  fc2 = register_module("fc2", nn::Linear(ffn, d));
  norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({d})));
  norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({d})));
  drop = register_module("drop", nn::Dropout(dropout));
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor &src, const torch::Tensor &pos) {
  const auto q = src + pos;
  auto a = std::get<0>(attn->forward(q, q, src, torch::Tensor(), false));
  auto x = norm1(src + drop(a));
  auto f = fc2(drop(torch::relu(fc1(x))));
  return norm2(x + drop(f));
}

DecoderLayerImpl::DecoderLayerImpl(int d, int heads, int ffn, double dropout) {
  const auto opts = nn::MultiheadAttentionOptions(d, heads).dropout(dropout);
  self_attn = register_module("self_attn", nn::MultiheadAttention(opts));
  cross_attn = register_module("cross_attn", nn::MultiheadAttention(opts));
  fc1 = register_module("fc1", nn::Linear(d, ffn));
  fc2 = register_module("fc2", nn::Linear(ffn, d));
  norm1 = register_module("norm1", nn::LayerNorm(nn::LayerNormOptions({d})));
  norm2 = register_module("norm2", nn::LayerNorm(nn::LayerNormOptions({d})));
  norm3 = register_module("norm3", nn::LayerNorm(nn::LayerNormOptions({d})));
  drop = register_module("drop", nn::Dropout(dropout));
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor &tgt, const torch::Tensor &query_pos,
                                        const torch::Tensor &memory, const torch::Tensor &pos) {
  auto q = tgt + query_pos;
  auto x = norm1(tgt + drop(std::get<0>(self_attn->forward(q, q, tgt, torch::Tensor(), false))));
  auto c = std::get<0>(cross_attn->forward(x + query_pos, memory + pos, memory, torch::Tensor(), false));
  x = norm2(x + drop(c));
  auto f = fc2(drop(torch::relu(fc1(x))));
  return norm3(x + drop(f));
}

HeadImpl::HeadImpl(int d, int out) {
  fc1 = register_module("fc1", nn::Linear(d, d));
  fc2 = register_module("fc2", nn::Linear(d, out));
}

torch::Tensor HeadImpl::forward(const torch::Tensor &x) { return fc2(torch::relu(fc1(x))); }

CorrectorImpl::CorrectorImpl(const CorrectorConfig &c) : cfg(c) {
  cfg.validate();
  for (int i = 0; i < cfg.encoder_layers; ++i) {
    encoder.push_back(register_module("enc" + std::to_string(i),
                                      EncoderLayer(cfg.d_model, cfg.heads, cfg.ffn_dim, cfg.dropout)));
  }
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    decoder.push_back(register_module("dec" + std::to_string(i),
                                      DecoderLayer(cfg.d_model, cfg.heads, cfg.ffn_dim, cfg.dropout)));
  }
  decoder_norm = register_module("decoder_norm", nn::LayerNorm(nn::LayerNormOptions({cfg.d_model})));
  const Int3 g = cfg.world_dims;
  status_head = register_module("status_head", Head(cfg.d_model, kStatusCount));
  pos_head = register_module("pos_head", Head(cfg.d_model, g.x + g.y + g.z));
  rot_head = register_module("rot_head", Head(cfg.d_model, 4));
}

std::vector<LayerOutput> CorrectorImpl::forward_sample(const torch::Tensor &f_diff,
                                                       const torch::Tensor &queries) {
  if (f_diff.dim() != 3 || f_diff.size(0) != cfg.d_model) {
    throw ShapeError("f_diff must be [" + std::to_string(cfg.d_model) + ", h, w], got " + shape_string(f_diff));
  }
  if (queries.dim() != 2 || queries.size(1) != cfg.d_model) {
    throw ShapeError("queries must be [n, " + std::to_string(cfg.d_model) + "], got " + shape_string(queries));
  }
  const int h = static_cast<int>(f_diff.size(1)), w = static_cast<int>(f_diff.size(2));
  // Tokens in [L, N=1, d] layout.
  auto memory = f_diff.flatten(1).transpose(0, 1).unsqueeze(1);
  const auto pos = sine_position_encoding(h, w, cfg.d_model).to(f_diff.dtype()).unsqueeze(1);
  for (auto &layer : encoder) memory = layer(memory, pos);

  const auto query_pos = queries.unsqueeze(1);
  auto tgt = query_pos;
  const Int3 g = cfg.world_dims;
  std::vector<LayerOutput> outs;
  for (auto &layer : decoder) {
    tgt = layer(tgt, query_pos, memory, pos);
    const auto x = decoder_norm(tgt).transpose(0, 1); // [1, n, d]
    const auto p = pos_head(x);
    outs.push_back({status_head(x), p.slice(2, 0, g.x), p.slice(2, g.x, g.x + g.y),
                    p.slice(2, g.x + g.y, g.x + g.y + g.z), rot_head(x)});
  }
  return outs;
}

CorrectionOutput CorrectorImpl::forward(const torch::Tensor &f_diff, const QueryBatch &batch) {
  const int64_t B = batch.queries.size(0), L = batch.queries.size(1);
  if (f_diff.dim() != 4 || f_diff.size(0) != B) {
    throw ShapeError("f_diff batch " + shape_string(f_diff) + " does not match queries " +
                     shape_string(batch.queries));
  }
  const auto lengths = batch.lengths();
  std::vector<std::vector<LayerOutput>> per_sample;
  for (int64_t b = 0; b < B; ++b) {
    per_sample.push_back(forward_sample(f_diff[b], batch.queries[b].slice(0, 0, lengths[b])));
  }
  auto pad = [&](const torch::Tensor &t) {
    const auto n = t.size(1);
    if (n == L) return t;
    return torch::cat({t, torch::zeros({1, L - n, t.size(2)}, t.options())}, 1);
  };
  CorrectionOutput out;
  out.valid_mask = batch.valid_mask;
  for (int k = 0; k < cfg.decoder_layers; ++k) {
    std::vector<torch::Tensor> st, px, py, pz, rt;
    for (int64_t b = 0; b < B; ++b) {
      const auto &o = per_sample[b][k];
      st.push_back(pad(o.status));
      px.push_back(pad(o.pos_x));
      py.push_back(pad(o.pos_y));
      pz.push_back(pad(o.pos_z));
      rt.push_back(pad(o.rot));
    }
    out.layers.push_back({torch::cat(st), torch::cat(px), torch::cat(py), torch::cat(pz), torch::cat(rt)});
  }
  return out;
}

ReplaceMode replace_mode_from_string(const std::string &s) {
  if (s == "selective") return ReplaceMode::Selective;
  if (s == "full") return ReplaceMode::Full;
  throw ConfigError("replace mode must be selective or full, got '" + s + "'");
}

std::vector<Correction> decode_predictions(const LayerOutput &out_in, const std::vector<int> &ids,
                                           const std::vector<Pose6D> &original,
                                           const std::vector<SymmetryGroup> &syms,
                                           const Int3 &world, ReplaceMode mode) {
  LayerOutput out = out_in;
  if (out.status.dim() == 3) out = out.sample(0, static_cast<int>(original.size()));
  const auto n = original.size();
  if (ids.size() != n || syms.size() != n || static_cast<std::size_t>(out.status.size(0)) < n) {
    throw ShapeError("decode_predictions got inconsistent component counts");
  }
  std::vector<Correction> result;
  for (std::size_t i = 0; i < n; ++i) {
    const auto idx = static_cast<int64_t>(i);
    Correction c;
    c.component_id = ids[i];
    c.status = status_from_index(first_argmax(out.status[idx]));
    const Int3 t{std::min(first_argmax(out.pos_x[idx]), world.x - 1),
                 std::min(first_argmax(out.pos_y[idx]), world.y - 1),
                 std::min(first_argmax(out.pos_z[idx]), world.z - 1)};
    const int rz = canonical_rotation(Rotation90(first_argmax(out.rot[idx])), syms[i]).degrees();
    c.pose = original[i];
    const bool fix_t = c.status == Status::PositionError || c.status == Status::PosRotError ||
                       (mode == ReplaceMode::Full && c.status != Status::Correct);
    const bool fix_r = c.status == Status::RotationError || c.status == Status::PosRotError ||
                       (mode == ReplaceMode::Full && c.status != Status::Correct);
    if (fix_t) c.pose.t = t;
    if (fix_r) c.pose.r[2] = rz;
    result.push_back(c);
  }
  return result;
}

json to_json(const Correction &c) {
  return {{"component_id", c.component_id}, {"status", status_name(c.status)}, {"pose", to_json(c.pose)}};
}

json corrections_to_json(const std::vector<Correction> &cs) {
  json arr = json::array();
  for (const auto &c : cs) arr.push_back(to_json(c));
  return arr;
}

} // namespace scanet
