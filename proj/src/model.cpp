#include "scanet/model.hpp"

#include "scanet/config.hpp"
#include "scanet/errors.hpp"

namespace scanet {

using nlohmann::json;

ModelConfig ModelConfig::from_config(const json &cfg) {
  ModelConfig m;
  try {
    const auto &mc = cfg.at("model");
    m.world_dims = world_dims_of(cfg);
    m.component_box = component_box_of(cfg);
    m.camera = camera_of(cfg);
    m.backbone.c1 = mc.at("c1").get<int>();
    m.backbone.c2 = mc.at("c2").get<int>();
    m.backbone.stem_channels = mc.at("stem_channels").get<int>();
    m.backbone.hourglass_depth = mc.at("hourglass_depth").get<int>();
    m.backbone.image_size = m.camera.image_size;
    m.backbone.with_assembly_branch = !mc.at("no_ar").get<bool>();
    m.encoder.c3 = mc.at("c3").get<int>();
    m.encoder.voxel_width = mc.at("voxel_width").get<int>();
    m.encoder.image_width = mc.at("image_width").get<int>();
    const bool no_6d = mc.at("no_6d_encoder").get<bool>();
    m.encoder.with_pose_encoder = !no_6d;
    m.encoder.with_image_encoder = !no_6d && !mc.at("no_image_encoder").get<bool>();
    m.corrector.d_model = m.backbone.c2;
    m.corrector.encoder_layers = mc.at("encoder_layers").get<int>();
    m.corrector.decoder_layers = mc.at("decoder_layers").get<int>();
    m.corrector.heads = mc.at("heads").get<int>();
    m.corrector.ffn_dim = mc.at("ffn_dim").get<int>();
    m.corrector.dropout = mc.at("dropout").get<double>();
    m.corrector.world_dims = m.world_dims;
  } catch (const json::exception &e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  m.validate();
  return m;
}

void ModelConfig::validate() const {
  backbone.validate();
  encoder.validate();
  corrector.validate();
  if (2 * encoder.c3 != backbone.c2) throw ConfigError("query width 2 * C3 must equal C2");
  if (corrector.d_model != backbone.c2) throw ConfigError("transformer width must equal C2");
}

AssemblyState CorrectionInput::assembled_state() const {
  AssemblyState s = base;
  for (std::size_t i = 0; i < components.size(); ++i) s.placed.push_back({components[i], assembled[i]});
  return s;
}

json to_json(const CorrectionInput &in) {
  json comps = json::array(), assembled = json::array(), gt = json::array();
  for (const auto &c : in.components) comps.push_back(to_json(c));
  for (const auto &p : in.assembled) assembled.push_back(to_json(p));
  for (const auto &p : in.gt) gt.push_back(to_json(p));
  json j{{"key", in.key},
         {"world_dims", to_json(in.world_dims)},
         {"base", to_json(in.base)},
         {"manual", to_json(in.manual)},
         {"components", std::move(comps)},
         {"assembled", std::move(assembled)}};
  if (!in.gt.empty()) j["gt"] = std::move(gt);
  return j;
}

CorrectionInput correction_input_from_json(const json &j) {
  CorrectionInput in;
  try {
    if (!j.is_object()) throw InputError("scene must be a JSON object");
    in.key = j.value("key", std::string("scene"));
    in.world_dims = int3_from_json(j.at("world_dims"));
    in.base = j.contains("base") ? state_from_json(j.at("base")) : AssemblyState{in.world_dims, {}};
    for (const auto &c : j.at("components")) in.components.push_back(component_from_json(c));
    for (const auto &p : j.at("assembled")) in.assembled.push_back(pose_from_json(p));
    if (j.contains("gt")) {
      for (const auto &p : j.at("gt")) in.gt.push_back(pose_from_json(p));
    }
    if (j.contains("manual")) {
      in.manual = state_from_json(j.at("manual"));
    } else if (!in.gt.empty()) {
      in.manual = in.base;
      for (std::size_t i = 0; i < in.components.size() && i < in.gt.size(); ++i) {
        in.manual.placed.push_back({in.components[i], in.gt[i]});
      }
    } else {
      throw InputError("scene needs \"manual\" or \"gt\"");
    }
  } catch (const json::exception &e) {
    throw InputError(std::string("malformed scene: ") + e.what());
  } catch (const RangeError &e) {
    throw InputError(std::string("malformed scene: ") + e.what());
  }
  if (in.components.empty()) throw InputError("scene has no current components");
  if (in.assembled.size() != in.components.size()) throw InputError("scene needs one assembled pose per component");
  if (!in.gt.empty() && in.gt.size() != in.components.size()) throw InputError("scene needs one GT pose per component");
  if (in.base.world_dims != in.world_dims || in.manual.world_dims != in.world_dims) {
    throw InputError("scene states disagree on the world dims");
  }
  for (const auto &p : in.assembled) {
    if (p.t.x < 0 || p.t.y < 0 || p.t.z < 0 || p.t.x >= in.world_dims.x || p.t.y >= in.world_dims.y ||
        p.t.z >= in.world_dims.z) {
      throw InputError("assembled pose outside the world");
    }
  }
  if (!in.gt.empty()) {
    for (std::size_t i = 0; i < in.gt.size(); ++i) {
      in.labels.push_back(label_error(in.gt[i], in.assembled[i], symmetry_group(in.components[i].shape)));
    }
  }
  return in;
}

CorrectionInput correction_input(const Dataset &ds, const Sample &s) {
  const Manual &m = ds.manual(s.manual_id);
  if (s.step_index < 0 || static_cast<std::size_t>(s.step_index) >= m.steps.size()) {
    throw DataError("sample " + s.key() + " points past the manual's steps");
  }
  const auto &step = m.steps[s.step_index];
  CorrectionInput in;
  in.key = s.key();
  in.world_dims = m.world_dims;
  in.base = gt_state(m, s.step_index);
  in.manual = gt_state(m, s.step_index + 1);
  in.components = step.components;
  in.assembled = s.corrupted_poses;
  in.gt = s.correct_poses;
  in.labels = s.labels;
  return in;
}

namespace {

void fill_channels(torch::Tensor &dst, const RenderedImage &img, const std::vector<float> &v,
                   const std::vector<float> &c) {
  const int s = img.size;
  auto a = dst.accessor<float, 3>();
  for (int r = 0; r < s; ++r) {
    for (int col = 0; col < s; ++col) {
      const auto i = static_cast<std::size_t>(r) * s + col;
      for (int ch = 0; ch < 3; ++ch) a[ch][r][col] = img.rgb[i * 3 + ch] / 255.0f;
      a[3][r][col] = v[i];
      a[4][r][col] = c[i];
    }
  }
}

torch::Tensor image_tensor(const RenderedImage &img) {
  auto t = torch::from_blob(const_cast<std::uint8_t *>(img.rgb.data()), {img.size, img.size, 3}, torch::kUInt8);
  return t.permute({2, 0, 1}).to(torch::kFloat).div(255.0).contiguous();
}

} // namespace

SampleTensors build_sample_tensors(const CorrectionInput &in, const ModelConfig &cfg) {
  const int s = cfg.camera.image_size;
  const Int3 world = in.world_dims;
  if (world != cfg.world_dims) throw ShapeError("scene world dims differ from the model's world dims");
  if (in.assembled.size() != in.components.size()) throw DataError("pose count differs from component count");

  // Component set C: every current component unrotated at the world centre, unioned.
  std::vector<Int3> comp_cells;
  for (const auto &c : in.components) {
    Pose6D centre;
    centre.t = {world.x / 2, world.y / 2, 0};
    for (const auto &cell : transform_component(c.shape, centre)) {
      if (cell.x >= 0 && cell.y >= 0 && cell.z >= 0 && cell.x < world.x && cell.y < world.y && cell.z < world.z)
        comp_cells.push_back(cell);
    }
  }
  const auto c_map = project_height(world, comp_cells, cfg.camera);

  const AssemblyState after = in.assembled_state();
  SampleTensors t;
  t.manual = torch::empty({kBranchChannels, s, s});
  fill_channels(t.manual, render(in.manual, cfg.camera), project_height(world, occupancy(in.base).cells, cfg.camera),
                c_map);
  t.assembly = torch::empty({kBranchChannels, s, s});
  fill_channels(t.assembly, render(after, cfg.camera), project_height(world, occupancy(after).cells, cfg.camera),
                c_map);

  const auto bounds = PoseBounds::for_world(world);
  std::vector<torch::Tensor> vox, posed, poses, images;
  for (std::size_t i = 0; i < in.components.size(); ++i) {
    const auto &c = in.components[i];
    const auto &p = in.assembled[i];
    if (cfg.encoder.with_pose_encoder) {
      vox.push_back(voxel_tensor(c.shape, cfg.component_box));
      const auto n = normalize_pose(p, bounds);
      poses.push_back(torch::tensor(std::vector<float>(n.begin(), n.end())));
    } else {
      posed.push_back(posed_voxel_tensor(c.shape, p, world));
    }
    if (cfg.encoder.with_image_encoder) images.push_back(image_tensor(render_component(c, p, world, cfg.camera)));
  }
  if (!vox.empty()) t.components.voxels = torch::stack(vox);
  if (!poses.empty()) t.components.norm_poses = torch::stack(poses);
  if (!posed.empty()) t.components.posed = torch::stack(posed);
  if (!images.empty()) t.components.images = torch::stack(images);
  return t;
}

Targets build_targets(const CorrectionInput &in) {
  const auto n = static_cast<int64_t>(in.components.size());
  if (static_cast<int64_t>(in.gt.size()) != n || static_cast<int64_t>(in.labels.size()) != n) {
    throw DataError("sample " + in.key + " carries no complete ground truth");
  }
  Targets t;
  t.status = torch::empty({n}, torch::kLong);
  t.tx = torch::empty({n}, torch::kLong);
  t.ty = torch::empty({n}, torch::kLong);
  t.tz = torch::empty({n}, torch::kLong);
  t.rot = torch::empty({n}, torch::kLong);
  for (int64_t i = 0; i < n; ++i) {
    const auto &g = in.gt[i];
    for (int a = 0; a < 3; ++a) {
      if (g.t[a] < 0 || g.t[a] >= in.world_dims[a]) {
        throw DataError("GT position of sample " + in.key + " lies outside the grid");
      }
    }
    t.status[i] = static_cast<int64_t>(in.labels[i]);
    t.tx[i] = g.t.x;
    t.ty[i] = g.t.y;
    t.tz[i] = g.t.z;
    t.rot[i] = canonical_rotation(g.rz(), symmetry_group(in.components[i].shape)).quarter_turns();
  }
  return t;
}

ScaNetImpl::ScaNetImpl(const ModelConfig &c) : cfg(c) {
  cfg.validate();
  backbone = register_module("backbone", Backbone(cfg.backbone));
  encoder = register_module("encoder", ComponentEncoder(cfg.encoder));
  corrector = register_module("corrector", Corrector(cfg.corrector));
}

torch::Tensor ScaNetImpl::encode_queries(const SampleTensors &s) { return encoder(s.components); }

CorrectionOutput ScaNetImpl::forward(const std::vector<SampleTensors> &batch) {
  if (batch.empty()) throw InputError("empty batch");
  std::vector<torch::Tensor> f_diff, queries;
  for (const auto &s : batch) {
    f_diff.push_back(backbone(s.manual.unsqueeze(0), s.assembly.unsqueeze(0)));
    queries.push_back(encode_queries(s));
  }
  return corrector(torch::cat(f_diff), build_query_batch(queries));
}

SampleTensors to_dtype(const SampleTensors &s, torch::Dtype dtype) {
  auto conv = [&](const torch::Tensor &t) { return t.defined() ? t.to(dtype) : t; };
  SampleTensors o;
  o.manual = conv(s.manual);
  o.assembly = conv(s.assembly);
  o.components.voxels = conv(s.components.voxels);
  o.components.posed = conv(s.components.posed);
  o.components.norm_poses = conv(s.components.norm_poses);
  o.components.images = conv(s.components.images);
  return o;
}

} // namespace scanet
