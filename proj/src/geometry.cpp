#include "scanet/geometry.hpp"

#include <algorithm>
#include <limits>

#include "scanet/errors.hpp"

namespace scanet {

using nlohmann::json;

Rotation90 Rotation90::from_degrees(int degrees) {
  if (degrees % 90 != 0) {
    throw RangeError("rotation " + std::to_string(degrees) + " is not a multiple of 90 degrees");
  }
  return Rotation90(degrees / 90);
}

void PoseBounds::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (t_min[a] >= t_max[a]) {
      throw ConfigError("degenerate translation bounds on axis " + std::to_string(a));
    }
    if (r_min[a] >= r_max[a]) {
      throw ConfigError("degenerate rotation bounds on axis " + std::to_string(a));
    }
  }
}

PoseBounds PoseBounds::for_world(const Int3 &world_dims) {
  PoseBounds b;
  b.t_min = {0, 0, 0};
  b.t_max = {world_dims.x - 1, world_dims.y - 1, world_dims.z - 1};
  return b;
}

VoxelGrid::VoxelGrid(const Int3 &dims) : dims_(dims) {
  if (dims.x < 1 || dims.y < 1 || dims.z < 1) {
    throw InputError("voxel grid dims must be positive");
  }
  occ_.assign(static_cast<std::size_t>(dims.x) * dims.y * dims.z, 0);
}

VoxelGrid VoxelGrid::from_cells(const Int3 &dims, std::span<const Int3> cells) {
  VoxelGrid g(dims);
  for (const auto &c : cells) {
    if (!g.contains(c)) {
      throw InputError("cell outside voxel grid dims");
    }
    g.set(c);
  }
  return g;
}

void VoxelGrid::set(const Int3 &c, bool value) {
  if (!contains(c)) {
    throw RangeError("voxel index out of range");
  }
  occ_[index(c)] = value ? 1 : 0;
}

std::size_t VoxelGrid::count() const {
  return static_cast<std::size_t>(std::count(occ_.begin(), occ_.end(), std::uint8_t{1}));
}

std::vector<Int3> VoxelGrid::cells() const {
  std::vector<Int3> out;
  for (int x = 0; x < dims_.x; ++x)
    for (int y = 0; y < dims_.y; ++y)
      for (int z = 0; z < dims_.z; ++z)
        if (occ_[index({x, y, z})]) out.push_back({x, y, z});
  return out;
}

std::vector<Rotation90> SymmetryGroup::members() const {
  std::vector<Rotation90> out;
  for (int q = 0; q < 4; ++q)
    if (contains(Rotation90(q))) out.emplace_back(q);
  return out;
}

std::string SymmetryGroup::to_string() const {
  switch (order_) {
  case 1: return "{0}";
  case 2: return "{0,180}";
  default: return "{0,90,180,270}";
  }
}

std::array<double, 6> normalize_pose(const Pose6D &pose, const PoseBounds &bounds) {
  bounds.validate();
  std::array<double, 6> out{};
  for (int a = 0; a < 3; ++a) {
    const int v = pose.t[a];
    if (v < bounds.t_min[a] || v > bounds.t_max[a]) {
      throw RangeError("translation outside pose bounds on axis " + std::to_string(a));
    }
    out[a] = static_cast<double>(v - bounds.t_min[a]) / (bounds.t_max[a] - bounds.t_min[a]);
  }
  for (int a = 0; a < 3; ++a) {
    const int v = pose.r[a];
    if (v < bounds.r_min[a] || v > bounds.r_max[a]) {
      throw RangeError("rotation outside pose bounds on axis " + std::to_string(a));
    }
    out[3 + a] = static_cast<double>(v - bounds.r_min[a]) / (bounds.r_max[a] - bounds.r_min[a]);
  }
  return out;
}

VoxelGrid rotate_voxel_grid(const VoxelGrid &grid, Rotation90 rot) {
  VoxelGrid current = grid;
  for (int i = 0; i < rot.quarter_turns(); ++i) {
    const Int3 d = current.dims();
    VoxelGrid next({d.y, d.x, d.z});
    for (const auto &c : current.cells()) {
      next.set({d.y - 1 - c.y, c.x, c.z});
    }
    current = std::move(next);
  }
  return current;
}

SymmetryGroup symmetry_group(const VoxelGrid &grid) {
  if (grid.empty()) {
    throw InputError("symmetry_group of an empty grid");
  }
  if (rotate_voxel_grid(grid, Rotation90(1)) == grid) return SymmetryGroup::full();
  if (rotate_voxel_grid(grid, Rotation90(2)) == grid) return SymmetryGroup::half_turn();
  return SymmetryGroup::trivial();
}

Rotation90 canonical_rotation(Rotation90 rot, SymmetryGroup sym) {
  Rotation90 best = rot;
  for (const auto &g : sym.members()) {
    best = std::min(best, rot + g);
  }
  return best;
}

namespace {

double directional_mean(std::span<const Int3> from, std::span<const Int3> to) {
  double total = 0.0;
  for (const auto &p : from) {
    long best = std::numeric_limits<long>::max();
    for (const auto &q : to) {
      const long dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
      best = std::min(best, dx * dx + dy * dy + dz * dz);
      if (best == 0) break;
    }
    total += static_cast<double>(best);
  }
  return total / static_cast<double>(from.size());
}

} // namespace

double chamfer_distance(std::span<const Int3> cells_a, std::span<const Int3> cells_b) {
  if (cells_a.empty() || cells_b.empty()) {
    throw InputError("chamfer_distance needs two non-empty cell sets");
  }
  // Cell centres are offset by the same half cell, which cancels in every difference.
  return directional_mean(cells_a, cells_b) + directional_mean(cells_b, cells_a);
}

bool poses_equal(const Pose6D &pred, const Pose6D &gt, SymmetryGroup sym) {
  if (pred.t != gt.t) return false;
  if (pred.r[0] != gt.r[0] || pred.r[1] != gt.r[1]) return false;
  return canonical_rotation(pred.rz(), sym) == canonical_rotation(gt.rz(), sym);
}

json to_json(const Int3 &v) { return json::array({v.x, v.y, v.z}); }

Int3 int3_from_json(const json &j) {
  if (!j.is_array() || j.size() != 3) {
    throw InputError("expected an integer triple, got " + j.dump());
  }
  for (const auto &e : j) {
    if (!e.is_number_integer()) throw InputError("expected an integer triple, got " + j.dump());
  }
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

json to_json(const VoxelGrid &grid) {
  json cells = json::array();
  for (const auto &c : grid.cells()) cells.push_back(to_json(c));
  json j;
  j["dims"] = to_json(grid.dims());
  j["cells"] = std::move(cells);
  return j;
}

VoxelGrid voxel_grid_from_json(const json &j) {
  if (!j.is_object() || !j.contains("dims") || !j.contains("cells") || !j["cells"].is_array()) {
    throw InputError("voxel grid JSON needs \"dims\" and \"cells\"");
  }
  std::vector<Int3> cells;
  for (const auto &c : j["cells"]) cells.push_back(int3_from_json(c));
  return VoxelGrid::from_cells(int3_from_json(j["dims"]), cells);
}

json to_json(const Pose6D &pose) {
  json j;
  j["T"] = to_json(pose.t);
  j["R"] = json::array({pose.r[0], pose.r[1], pose.r[2]});
  return j;
}

Pose6D pose_from_json(const json &j) {
  if (!j.is_object() || !j.contains("T") || !j.contains("R")) {
    throw InputError("pose JSON needs \"T\" and \"R\"");
  }
  Pose6D p;
  p.t = int3_from_json(j["T"]);
  const Int3 r = int3_from_json(j["R"]);
  p.r = {r.x, r.y, r.z};
  for (int a = 0; a < 3; ++a) {
    if (p.r[a] % 90 != 0 || p.r[a] < 0 || p.r[a] > 270) {
      throw InputError("pose rotations must be one of 0, 90, 180, 270");
    }
  }
  return p;
}

} // namespace scanet
