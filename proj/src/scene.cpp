#include "scanet/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scanet/errors.hpp"

namespace scanet {

using nlohmann::json;

namespace {

constexpr std::array<Rgb, 12> kPalette{{
    {230, 25, 25},   // red
    {40, 180, 60},   // green
    {40, 90, 230},   // blue
    {250, 210, 20},  // yellow
    {245, 130, 30},  // orange
    {150, 40, 190},  // purple
    {60, 220, 230},  // cyan
    {240, 50, 230},  // magenta
    {170, 255, 60},  // lime
    {250, 180, 200}, // pink
    {0, 128, 128},   // teal
    {170, 110, 40},  // brown
}};

Int3 quarter_x(const Int3 &v) { return {v.x, -v.z, v.y}; }
Int3 quarter_y(const Int3 &v) { return {v.z, v.y, -v.x}; }
Int3 quarter_z(const Int3 &v) { return {-v.y, v.x, v.z}; }

struct Camera {
  std::array<double, 3> dir, right, up;
  double u_center = 0, v_center = 0, pixel = 1, depth_start = 0;
  int size = 0;
};

double dot(const std::array<double, 3> &a, const std::array<double, 3> &b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

std::array<double, 3> normalized(std::array<double, 3> v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

std::array<double, 3> cross(const std::array<double, 3> &a, const std::array<double, 3> &b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Camera make_camera(const Int3 &world, const CameraConfig &cfg) {
  if (cfg.image_size < 1) throw ConfigError("image size must be positive");
  Camera cam;
  cam.size = cfg.image_size;
  cam.dir = normalized(cfg.view_dir);
  if (std::abs(cam.dir[2]) > 1.0 - 1e-9 || cam.dir[0] == 0.0 || cam.dir[1] == 0.0 ||
      cam.dir[2] == 0.0) {
    throw ConfigError("camera view direction must be oblique to every axis");
  }
  cam.right = normalized(cross(cam.dir, {0.0, 0.0, 1.0}));
  cam.up = cross(cam.right, cam.dir);

  double umin = std::numeric_limits<double>::max(), umax = -umin;
  double vmin = umin, vmax = -umin, dmin = umin;
  for (int corner = 0; corner < 8; ++corner) {
    const std::array<double, 3> p{(corner & 1) ? double(world.x) : 0.0,
                                  (corner & 2) ? double(world.y) : 0.0,
                                  (corner & 4) ? double(world.z) : 0.0};
    umin = std::min(umin, dot(p, cam.right));
    umax = std::max(umax, dot(p, cam.right));
    vmin = std::min(vmin, dot(p, cam.up));
    vmax = std::max(vmax, dot(p, cam.up));
    dmin = std::min(dmin, dot(p, cam.dir));
  }
  cam.u_center = 0.5 * (umin + umax);
  cam.v_center = 0.5 * (vmin + vmax);
  const double span = std::max(umax - umin, vmax - vmin) / (1.0 - 2.0 * cfg.margin);
  cam.pixel = span / cfg.image_size;
  cam.depth_start = dmin - 1.0;
  return cam;
}

/// Cell index grid: -1 for empty, otherwise a caller-defined label.
class LabelGrid {
public:
  explicit LabelGrid(const Int3 &dims)
      : dims_(dims), labels_(static_cast<std::size_t>(dims.x) * dims.y * dims.z, -1) {}
  bool contains(const Int3 &c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < dims_.x && c.y < dims_.y && c.z < dims_.z;
  }
  int &operator[](const Int3 &c) {
    return labels_[(static_cast<std::size_t>(c.x) * dims_.y + c.y) * dims_.z + c.z];
  }
  int operator[](const Int3 &c) const {
    return labels_[(static_cast<std::size_t>(c.x) * dims_.y + c.y) * dims_.z + c.z];
  }
  const Int3 &dims() const { return dims_; }

private:
  Int3 dims_;
  std::vector<int> labels_;
};

/// Finds the first labelled cell along the view ray through pixel centre (row, col).
/// Returns the cell label, or -1 on a miss; `hit` receives the cell.
int cast_ray(const Camera &cam, const LabelGrid &grid, int row, int col, Int3 &hit) {
  const double u = cam.u_center + (col + 0.5 - cam.size * 0.5) * cam.pixel;
  const double v = cam.v_center - (row + 0.5 - cam.size * 0.5) * cam.pixel;
  std::array<double, 3> origin{};
  for (int a = 0; a < 3; ++a) {
    origin[a] = u * cam.right[a] + v * cam.up[a] + cam.depth_start * cam.dir[a];
  }
  const Int3 &dims = grid.dims();
  double t_enter = 0.0, t_exit = std::numeric_limits<double>::max();
  for (int a = 0; a < 3; ++a) {
    const double lo = (0.0 - origin[a]) / cam.dir[a];
    const double hi = (static_cast<double>(dims[a]) - origin[a]) / cam.dir[a];
    t_enter = std::max(t_enter, std::min(lo, hi));
    t_exit = std::min(t_exit, std::max(lo, hi));
  }
  if (t_enter >= t_exit) return -1;

  const double t0 = t_enter + 1e-9;
  Int3 cell;
  std::array<double, 3> t_max{}, t_delta{};
  std::array<int, 3> step{};
  for (int a = 0; a < 3; ++a) {
    const double p = origin[a] + t0 * cam.dir[a];
    cell[a] = std::clamp(static_cast<int>(std::floor(p)), 0, dims[a] - 1);
    step[a] = cam.dir[a] > 0 ? 1 : -1;
    const double boundary = cam.dir[a] > 0 ? cell[a] + 1.0 : static_cast<double>(cell[a]);
    t_max[a] = t0 + (boundary - p) / cam.dir[a];
    t_delta[a] = 1.0 / std::abs(cam.dir[a]);
  }
  while (grid.contains(cell)) {
    const int label = grid[cell];
    if (label >= 0) {
      hit = cell;
      return label;
    }
    int axis = 0;
    if (t_max[1] < t_max[axis]) axis = 1;
    if (t_max[2] < t_max[axis]) axis = 2;
    cell[axis] += step[axis];
    t_max[axis] += t_delta[axis];
  }
  return -1;
}

RenderedImage render_labels(const LabelGrid &grid, std::span<const Rgb> colors,
                            const CameraConfig &cfg) {
  const Camera cam = make_camera(grid.dims(), cfg);
  RenderedImage img;
  img.size = cfg.image_size;
  img.rgb.assign(static_cast<std::size_t>(img.size) * img.size * 3, 0);
  Int3 hit;
  for (int row = 0; row < img.size; ++row) {
    for (int col = 0; col < img.size; ++col) {
      const int label = cast_ray(cam, grid, row, col, hit);
      if (label < 0) continue;
      const auto i = (static_cast<std::size_t>(row) * img.size + col) * 3;
      img.rgb[i] = colors[label].r;
      img.rgb[i + 1] = colors[label].g;
      img.rgb[i + 2] = colors[label].b;
    }
  }
  return img;
}

} // namespace

std::span<const Rgb> palette() { return kPalette; }

AssemblyState gt_state(const Manual &manual, std::size_t step_count) {
  AssemblyState s{manual.world_dims, {}};
  for (std::size_t k = 0; k < step_count && k < manual.steps.size(); ++k) {
    const auto &step = manual.steps[k];
    for (std::size_t i = 0; i < step.components.size(); ++i) {
      s.placed.push_back({step.components[i], step.gt_poses[i]});
    }
  }
  return s;
}

Int3 shape_pivot(const VoxelGrid &shape) {
  return {(shape.dims().x - 1) / 2, (shape.dims().y - 1) / 2, 0};
}

std::vector<Int3> transform_component(const VoxelGrid &shape, const Pose6D &pose) {
  const Int3 pivot = shape_pivot(shape);
  const int qx = Rotation90::from_degrees(pose.r[0]).quarter_turns();
  const int qy = Rotation90::from_degrees(pose.r[1]).quarter_turns();
  const int qz = Rotation90::from_degrees(pose.r[2]).quarter_turns();
  std::vector<Int3> out;
  for (const auto &c : shape.cells()) {
    Int3 v = c - pivot;
    for (int i = 0; i < qx; ++i) v = quarter_x(v);
    for (int i = 0; i < qy; ++i) v = quarter_y(v);
    for (int i = 0; i < qz; ++i) v = quarter_z(v);
    out.push_back(v + pose.t);
  }
  return out;
}

bool in_world(const Int3 &world_dims, std::span<const Int3> cells) {
  return std::all_of(cells.begin(), cells.end(), [&](const Int3 &c) {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < world_dims.x && c.y < world_dims.y &&
           c.z < world_dims.z;
  });
}

Occupancy occupancy(const AssemblyState &state) {
  Occupancy occ;
  for (const auto &p : state.placed) {
    for (const auto &c : transform_component(p.component.shape, p.pose)) {
      if (in_world(state.world_dims, std::span(&c, 1))) {
        occ.cells.push_back(c);
      } else {
        occ.clipped = true;
      }
    }
  }
  std::sort(occ.cells.begin(), occ.cells.end());
  occ.cells.erase(std::unique(occ.cells.begin(), occ.cells.end()), occ.cells.end());
  return occ;
}

bool is_supported(const AssemblyState &state, const VoxelGrid &shape, const Pose6D &pose) {
  const auto occ = occupancy(state).cells;
  for (const auto &c : transform_component(shape, pose)) {
    if (c.z == 0) return true;
    if (std::binary_search(occ.begin(), occ.end(), Int3{c.x, c.y, c.z - 1})) return true;
  }
  return false;
}

RenderedImage render(const AssemblyState &state, const CameraConfig &cfg) {
  LabelGrid grid(state.world_dims);
  std::vector<Rgb> colors;
  for (std::size_t i = 0; i < state.placed.size(); ++i) {
    const auto &p = state.placed[i];
    colors.push_back(p.component.color);
    for (const auto &c : transform_component(p.component.shape, p.pose)) {
      if (grid.contains(c)) grid[c] = static_cast<int>(i);
    }
  }
  return render_labels(grid, colors, cfg);
}

RenderedImage render_component(const Component &component, const Pose6D &pose,
                               const Int3 &world_dims, const CameraConfig &cfg) {
  AssemblyState alone{world_dims, {{component, pose}}};
  return render(alone, cfg);
}

std::vector<float> project_height(const Int3 &world_dims, std::span<const Int3> cells,
                                  const CameraConfig &cfg) {
  LabelGrid grid(world_dims);
  for (const auto &c : cells) {
    if (grid.contains(c)) grid[c] = 0;
  }
  const Camera cam = make_camera(world_dims, cfg);
  std::vector<float> out(static_cast<std::size_t>(cfg.image_size) * cfg.image_size, 0.0f);
  Int3 hit;
  for (int row = 0; row < cfg.image_size; ++row) {
    for (int col = 0; col < cfg.image_size; ++col) {
      if (cast_ray(cam, grid, row, col, hit) >= 0) {
        out[static_cast<std::size_t>(row) * cfg.image_size + col] =
            static_cast<float>(hit.z + 1) / static_cast<float>(world_dims.z);
      }
    }
  }
  return out;
}

std::array<double, 2> project_point(const Int3 &world_dims, const std::array<double, 3> &p,
                                    const CameraConfig &cfg) {
  const Camera cam = make_camera(world_dims, cfg);
  const double u = dot(p, cam.right);
  const double v = dot(p, cam.up);
  return {(u - cam.u_center) / cam.pixel + cam.size * 0.5,
          (cam.v_center - v) / cam.pixel + cam.size * 0.5};
}

json to_json(const Component &c) {
  json j;
  j["id"] = c.id;
  j["shape"] = c.shape_name;
  j["color"] = json::array({c.color.r, c.color.g, c.color.b});
  j["grid"] = to_json(c.shape);
  return j;
}

Component component_from_json(const json &j) {
  if (!j.is_object() || !j.contains("id") || !j.contains("grid") || !j.contains("color")) {
    throw InputError("component JSON needs \"id\", \"grid\" and \"color\"");
  }
  Component c;
  c.id = j["id"].get<int>();
  c.shape_name = j.value("shape", std::string{});
  c.shape = voxel_grid_from_json(j["grid"]);
  if (c.shape.empty()) throw InputError("component " + std::to_string(c.id) + " has no cells");
  const auto &col = j["color"];
  if (!col.is_array() || col.size() != 3) throw InputError("component colour must be RGB");
  c.color = {col[0].get<std::uint8_t>(), col[1].get<std::uint8_t>(), col[2].get<std::uint8_t>()};
  return c;
}

json to_json(const Manual &m) {
  json steps = json::array();
  for (const auto &s : m.steps) {
    json comps = json::array(), poses = json::array();
    for (const auto &c : s.components) comps.push_back(to_json(c));
    for (const auto &p : s.gt_poses) poses.push_back(to_json(p));
    steps.push_back({{"components", std::move(comps)}, {"gt_poses", std::move(poses)}});
  }
  return {{"id", m.id}, {"world_dims", to_json(m.world_dims)}, {"steps", std::move(steps)}};
}

Manual manual_from_json(const json &j) {
  if (!j.is_object() || !j.contains("steps") || !j.contains("world_dims")) {
    throw InputError("manual JSON needs \"world_dims\" and \"steps\"");
  }
  Manual m;
  m.id = j.value("id", std::string{});
  m.world_dims = int3_from_json(j["world_dims"]);
  for (const auto &sj : j["steps"]) {
    AssemblyStep s;
    for (const auto &c : sj.at("components")) s.components.push_back(component_from_json(c));
    for (const auto &p : sj.at("gt_poses")) s.gt_poses.push_back(pose_from_json(p));
    if (s.components.size() != s.gt_poses.size() || s.components.empty()) {
      throw InputError("manual step needs matching, non-empty components and gt_poses");
    }
    m.steps.push_back(std::move(s));
  }
  return m;
}

json to_json(const AssemblyState &s) {
  json placed = json::array();
  for (const auto &p : s.placed) {
    placed.push_back({{"component", to_json(p.component)}, {"pose", to_json(p.pose)}});
  }
  return {{"world_dims", to_json(s.world_dims)}, {"placed", std::move(placed)}};
}

AssemblyState state_from_json(const json &j) {
  if (!j.is_object() || !j.contains("world_dims")) {
    throw InputError("state JSON needs \"world_dims\"");
  }
  AssemblyState s;
  s.world_dims = int3_from_json(j["world_dims"]);
  if (j.contains("placed")) {
    for (const auto &p : j["placed"]) {
      s.placed.push_back({component_from_json(p.at("component")), pose_from_json(p.at("pose"))});
    }
  }
  return s;
}

} // namespace scanet
