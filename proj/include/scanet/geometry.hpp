#pragma once

// Voxel lattice math: quarter-turn rotations, pose normalization, rotational
// symmetry of component shapes, Chamfer distance and symmetry-aware pose
// comparison. Everything here is a pure function on values.

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace scanet {

struct Int3 {
  int x = 0;
  int y = 0;
  int z = 0;

  auto operator<=>(const Int3 &) const = default;
  Int3 operator+(const Int3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
  Int3 operator-(const Int3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
  int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
  int &operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
};

/// Rotation about the world up-axis (+z) by a multiple of 90 degrees, counterclockwise
/// when viewed from above.
class Rotation90 {
public:
  constexpr Rotation90() = default;
  /// Any integer is reduced mod 4.
  constexpr explicit Rotation90(int quarter_turns) : q_(((quarter_turns % 4) + 4) % 4) {}

  /// Throws RangeError unless `degrees` is a multiple of 90.
  static Rotation90 from_degrees(int degrees);

  constexpr int quarter_turns() const { return q_; }
  constexpr int degrees() const { return q_ * 90; }
  constexpr Rotation90 operator+(Rotation90 o) const { return Rotation90(q_ + o.q_); }
  constexpr Rotation90 operator-() const { return Rotation90(-q_); }
  constexpr auto operator<=>(const Rotation90 &) const = default;

private:
  int q_ = 0;
};

/// Translation in grid cells plus Euler angles in degrees (multiples of 90).
struct Pose6D {
  Int3 t;
  std::array<int, 3> r{0, 0, 0}; // rx, ry, rz

  bool operator==(const Pose6D &) const = default;
  Rotation90 rz() const { return Rotation90::from_degrees(r[2]); }
};

/// Per-axis bounds used by normalize_pose. Order of the six axes: Tx, Ty, Tz, Rx, Ry, Rz.
struct PoseBounds {
  Int3 t_min;
  Int3 t_max;
  std::array<int, 3> r_min{0, 0, 0};
  std::array<int, 3> r_max{270, 270, 270};

  /// Throws ConfigError when any axis has min >= max.
  void validate() const;

  /// T spans every cell of the world, R spans [0, 270] on each axis.
  static PoseBounds for_world(const Int3 &world_dims);
};

/// Dense boolean occupancy over [0,dx) x [0,dy) x [0,dz).
class VoxelGrid {
public:
  VoxelGrid() = default;
  /// Throws InputError for non-positive dims.
  explicit VoxelGrid(const Int3 &dims);
  /// Grid sized to the cell bounding box; cells must be non-negative.
  static VoxelGrid from_cells(const Int3 &dims, std::span<const Int3> cells);

  const Int3 &dims() const { return dims_; }
  bool contains(const Int3 &c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < dims_.x && c.y < dims_.y && c.z < dims_.z;
  }
  bool at(const Int3 &c) const { return contains(c) && occ_[index(c)] != 0; }
  void set(const Int3 &c, bool value = true);

  std::size_t count() const;
  bool empty() const { return count() == 0; }
  /// Occupied cells in lexicographic (x, y, z) order.
  std::vector<Int3> cells() const;

  bool operator==(const VoxelGrid &) const = default;

private:
  std::size_t index(const Int3 &c) const {
    return (static_cast<std::size_t>(c.x) * dims_.y + c.y) * dims_.z + c.z;
  }

  Int3 dims_{0, 0, 0};
  std::vector<std::uint8_t> occ_;
};

/// Subgroup of the quarter-turn rotations: {0}, {0,180} or {0,90,180,270}.
class SymmetryGroup {
public:
  static constexpr SymmetryGroup trivial() { return SymmetryGroup(1); }
  static constexpr SymmetryGroup half_turn() { return SymmetryGroup(2); }
  static constexpr SymmetryGroup full() { return SymmetryGroup(4); }

  constexpr int order() const { return order_; }
  constexpr bool contains(Rotation90 r) const { return r.quarter_turns() % (4 / order_) == 0; }
  std::vector<Rotation90> members() const;
  std::string to_string() const;
  constexpr bool operator==(const SymmetryGroup &) const = default;

private:
  constexpr explicit SymmetryGroup(int order) : order_(order) {}
  int order_ = 1;
};

/// Affine map of each pose axis onto [0,1].
/// Throws ConfigError for degenerate bounds and RangeError for out-of-bounds poses.
std::array<double, 6> normalize_pose(const Pose6D &pose, const PoseBounds &bounds);

/// Rotates the occupancy inside its own bounding box; the result has dims (dy, dx, dz) for
/// odd quarter turns. A cell (x, y) maps under one CCW quarter turn to (dy - 1 - y, x).
VoxelGrid rotate_voxel_grid(const VoxelGrid &grid, Rotation90 rot);

/// Maximal subgroup leaving the grid unchanged. Throws InputError for an empty grid.
SymmetryGroup symmetry_group(const VoxelGrid &grid);

/// Smallest member of the coset rot + sym.
Rotation90 canonical_rotation(Rotation90 rot, SymmetryGroup sym);

/// Sum of the two directional mean squared nearest-neighbour distances between the
/// cell-centre point sets. Throws InputError if either set is empty.
double chamfer_distance(std::span<const Int3> cells_a, std::span<const Int3> cells_b);

/// Exact translation match, rx/ry match, and rz match modulo the symmetry group.
bool poses_equal(const Pose6D &pred, const Pose6D &gt, SymmetryGroup sym);

// JSON forms. VoxelGrid: {"dims":[dx,dy,dz],"cells":[[x,y,z],...]} with cells sorted.
// Pose6D: {"T":[x,y,z],"R":[rx,ry,rz]}.
nlohmann::json to_json(const VoxelGrid &grid);
VoxelGrid voxel_grid_from_json(const nlohmann::json &j);
nlohmann::json to_json(const Pose6D &pose);
Pose6D pose_from_json(const nlohmann::json &j);
nlohmann::json to_json(const Int3 &v);
Int3 int3_from_json(const nlohmann::json &j);

} // namespace scanet
