#pragma once

// Assembly world model and the deterministic voxel renderer.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scanet/geometry.hpp"

namespace scanet {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb &) const = default;
};

/// Fixed colour palette; components in a manual take colours round-robin.
std::span<const Rgb> palette();

struct Component {
  int id = 0;
  std::string shape_name;
  VoxelGrid shape;
  Rgb color;

  bool operator==(const Component &) const = default;
};

struct AssemblyStep {
  std::vector<Component> components;
  std::vector<Pose6D> gt_poses; // parallel to components

  bool operator==(const AssemblyStep &) const = default;
};

struct Manual {
  std::string id;
  Int3 world_dims;
  std::vector<AssemblyStep> steps;

  bool operator==(const Manual &) const = default;
};

struct Placement {
  Component component;
  Pose6D pose;
};

struct AssemblyState {
  Int3 world_dims;
  std::vector<Placement> placed;
};

/// GT state after steps [0, step_count) of the manual.
AssemblyState gt_state(const Manual &manual, std::size_t step_count);

/// Pivot of a shape: footprint centre, rounded toward the origin for even dims, at z = 0.
Int3 shape_pivot(const VoxelGrid &shape);

/// World cells of a shape placed at `pose`: rotate about the pivot, then translate so the
/// pivot lands on pose.t. Cells may fall outside the world.
std::vector<Int3> transform_component(const VoxelGrid &shape, const Pose6D &pose);

struct Occupancy {
  std::vector<Int3> cells; // sorted, deduplicated, in-bounds
  bool clipped = false;    // some placed cell fell outside the world
};

Occupancy occupancy(const AssemblyState &state);

/// True iff any cell of the placed shape rests on the floor (z = 0) or directly on top of an
/// occupied cell of `state`.
bool is_supported(const AssemblyState &state, const VoxelGrid &shape, const Pose6D &pose);

/// True iff every placed cell lies inside the world.
bool in_world(const Int3 &world_dims, std::span<const Int3> cells);

struct CameraConfig {
  int image_size = 128;
  /// Viewing direction (from the camera into the scene).
  std::array<double, 3> view_dir{1.0, -1.0, -1.0};
  /// Fraction of the image left blank around the projected world box on each side.
  double margin = 0.04;
};

/// Square RGB8 image, row-major, top row first.
struct RenderedImage {
  int size = 0;
  std::vector<std::uint8_t> rgb;

  Rgb pixel(int row, int col) const {
    const auto i = (static_cast<std::size_t>(row) * size + col) * 3;
    return {rgb[i], rgb[i + 1], rgb[i + 2]};
  }
  bool operator==(const RenderedImage &) const = default;
};

/// Orthographic ray-cast render; flat colours, black background, the later placement wins
/// when two placements share a cell.
RenderedImage render(const AssemblyState &state, const CameraConfig &cfg);

/// The component alone at its assembled pose, same camera as render().
RenderedImage render_component(const Component &component, const Pose6D &pose,
                               const Int3 &world_dims, const CameraConfig &cfg);

/// Single-channel map, per pixel the height (z + 1) / G_z of the first cell the view ray
/// hits, 0 on a miss. Since the view ray descends monotonically in z this is a max-projection
/// of normalized height along the view axis. Row-major, image_size^2 values.
std::vector<float> project_height(const Int3 &world_dims, std::span<const Int3> cells,
                                  const CameraConfig &cfg);

/// Pixel position (col, row) of a continuous world point under the render camera.
std::array<double, 2> project_point(const Int3 &world_dims, const std::array<double, 3> &p,
                                    const CameraConfig &cfg);

// JSON forms used by manual and scene files.
nlohmann::json to_json(const Component &c);
Component component_from_json(const nlohmann::json &j);
nlohmann::json to_json(const Manual &m);
Manual manual_from_json(const nlohmann::json &j);
nlohmann::json to_json(const AssemblyState &s);
AssemblyState state_from_json(const nlohmann::json &j);

} // namespace scanet
