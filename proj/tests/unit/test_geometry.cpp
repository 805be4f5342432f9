#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "scanet/datagen.hpp"
#include "scanet/errors.hpp"
#include "scanet/geometry.hpp"

using namespace scanet;

namespace {

// Independent oracle: rotate a cell set by (x, y) -> (-y, x) and re-anchor at the origin,
// then compare as sets. Does not use rotate_voxel_grid.
std::set<Int3> anchored(std::vector<Int3> cells) {
  Int3 lo{1 << 20, 1 << 20, 1 << 20};
  for (const auto &c : cells) lo = {std::min(lo.x, c.x), std::min(lo.y, c.y), std::min(lo.z, c.z)};
  std::set<Int3> out;
  for (const auto &c : cells) out.insert(c - lo);
  return out;
}

std::set<Int3> brute_rotate(const std::set<Int3> &cells, int quarter_turns) {
  std::vector<Int3> v(cells.begin(), cells.end());
  for (int i = 0; i < quarter_turns; ++i)
    for (auto &c : v) c = {-c.y, c.x, c.z};
  return anchored(v);
}

int brute_symmetry_order(const VoxelGrid &g) {
  const auto base = anchored(g.cells());
  int fixed = 0;
  for (int q = 0; q < 4; ++q) fixed += brute_rotate(base, q) == base ? 1 : 0;
  return fixed; // the stabiliser size equals the group order
}

VoxelGrid random_grid(std::mt19937_64 &rng) {
  std::uniform_int_distribution<int> dim(1, 4);
  const Int3 dims{dim(rng), dim(rng), dim(rng)};
  VoxelGrid g(dims);
  std::bernoulli_distribution on(0.5);
  for (int x = 0; x < dims.x; ++x)
    for (int y = 0; y < dims.y; ++y)
      for (int z = 0; z < dims.z; ++z)
        if (on(rng)) g.set({x, y, z});
  if (g.empty()) g.set({0, 0, 0});
  return g;
}

} // namespace

TEST_CASE("normalize_pose maps bound endpoints and midpoints") {
  const PoseBounds b = PoseBounds::for_world({16, 16, 12});
  Pose6D lo;
  const auto n0 = normalize_pose(lo, b);
  for (double v : n0) CHECK(v == 0.0);

  Pose6D hi;
  hi.t = {15, 15, 11};
  hi.r = {270, 270, 270};
  const auto n1 = normalize_pose(hi, b);
  for (double v : n1) CHECK(v == 1.0);

  PoseBounds even = b;
  even.t_max.x = 14;
  Pose6D mid;
  mid.t.x = 7;
  CHECK(normalize_pose(mid, even)[0] == 0.5);

  Pose6D rot;
  rot.r[2] = 90;
  CHECK(normalize_pose(rot, b)[5] == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("normalize_pose rejects out-of-bounds poses and degenerate bounds") {
  const PoseBounds b = PoseBounds::for_world({4, 4, 4});
  Pose6D p;
  p.t.x = 4;
  CHECK_THROWS_AS(normalize_pose(p, b), RangeError);
  p.t.x = -1;
  CHECK_THROWS_AS(normalize_pose(p, b), RangeError);

  PoseBounds flat = b;
  flat.t_max.z = flat.t_min.z;
  CHECK_THROWS_AS(normalize_pose(Pose6D{}, flat), ConfigError);
  CHECK_THROWS_AS(PoseBounds::for_world({4, 1, 4}).validate(), ConfigError);
}

TEST_CASE("normalize_pose stays in the unit cube for random in-bounds poses") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> lo(-10, 10), span(1, 20), q(0, 3);
  for (int trial = 0; trial < 2000; ++trial) {
    PoseBounds b;
    b.t_min = {lo(rng), lo(rng), lo(rng)};
    b.t_max = {b.t_min.x + span(rng), b.t_min.y + span(rng), b.t_min.z + span(rng)};
    Pose6D p;
    for (int a = 0; a < 3; ++a) {
      p.t[a] = std::uniform_int_distribution<int>(b.t_min[a], b.t_max[a])(rng);
      p.r[static_cast<std::size_t>(a)] = 90 * q(rng);
    }
    for (double v : normalize_pose(p, b)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("rotate_voxel_grid follows the CCW convention") {
  const std::vector<Int3> cells{{0, 0, 0}, {1, 0, 0}};
  const VoxelGrid brick = VoxelGrid::from_cells({2, 1, 1}, cells);
  CHECK(rotate_voxel_grid(brick, Rotation90(0)) == brick);

  const VoxelGrid r90 = rotate_voxel_grid(brick, Rotation90(1));
  CHECK(r90.dims() == Int3{1, 2, 1});
  CHECK(r90.cells() == std::vector<Int3>{{0, 0, 0}, {0, 1, 0}});

  // L tromino: (0,0),(1,0),(0,1) in a 2x2 box; one quarter turn maps (x,y) -> (1-y, x).
  const std::vector<Int3> l_cells{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const VoxelGrid l = VoxelGrid::from_cells({2, 2, 1}, l_cells);
  CHECK(rotate_voxel_grid(l, Rotation90(1)).cells() ==
        std::vector<Int3>{{0, 0, 0}, {1, 0, 0}, {1, 1, 0}});
}

TEST_CASE("rotate_voxel_grid is a count-preserving group action of order 4") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const VoxelGrid g = random_grid(rng);
    VoxelGrid r = g;
    for (int i = 0; i < 4; ++i) {
      r = rotate_voxel_grid(r, Rotation90(1));
      CHECK(r.count() == g.count());
    }
    CHECK(r == g);
    CHECK(rotate_voxel_grid(rotate_voxel_grid(g, Rotation90(1)), Rotation90(2)) ==
          rotate_voxel_grid(g, Rotation90(3)));
    CHECK(anchored(rotate_voxel_grid(g, Rotation90(1)).cells()) ==
          brute_rotate(anchored(g.cells()), 1));
  }
}

TEST_CASE("symmetry_group on reference shapes") {
  const std::vector<Int3> one{{0, 0, 0}};
  CHECK(symmetry_group(VoxelGrid::from_cells({1, 1, 1}, one)) == SymmetryGroup::full());
  const std::vector<Int3> two{{0, 0, 0}, {1, 0, 0}};
  CHECK(symmetry_group(VoxelGrid::from_cells({2, 1, 1}, two)) == SymmetryGroup::half_turn());
  const std::vector<Int3> l{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  CHECK(symmetry_group(VoxelGrid::from_cells({2, 2, 1}, l)) == SymmetryGroup::trivial());
  CHECK_THROWS_AS(symmetry_group(VoxelGrid({2, 2, 2})), InputError);
}

TEST_CASE("symmetry_group matches brute force on the library and random grids") {
  for (const auto &name : library_shape_names()) {
    const VoxelGrid g = library_shape(name);
    CAPTURE(name);
    CHECK(symmetry_group(g).order() == brute_symmetry_order(g));
  }
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 500; ++trial) {
    const VoxelGrid g = random_grid(rng);
    // Random grids may not fill their bounding box; rotate_voxel_grid keeps the box, so the
    // oracle compares anchored sets of the box-filling subset only.
    const auto cells = g.cells();
    Int3 hi{0, 0, 0};
    for (const auto &c : cells) hi = {std::max(hi.x, c.x), std::max(hi.y, c.y), std::max(hi.z, c.z)};
    bool lo_x = false, lo_y = false, lo_z = false;
    for (const auto &c : cells) {
      lo_x |= c.x == 0;
      lo_y |= c.y == 0;
      lo_z |= c.z == 0;
    }
    if (!(lo_x && lo_y && lo_z) || hi + Int3{1, 1, 1} != g.dims()) continue;
    CHECK(symmetry_group(g).order() == brute_symmetry_order(g));
  }
}

TEST_CASE("canonical_rotation picks the smallest coset member") {
  CHECK(canonical_rotation(Rotation90(2), SymmetryGroup::half_turn()) == Rotation90(0));
  CHECK(canonical_rotation(Rotation90(3), SymmetryGroup::full()) == Rotation90(0));
  CHECK(canonical_rotation(Rotation90(3), SymmetryGroup::half_turn()) == Rotation90(1));
  CHECK(canonical_rotation(Rotation90(3), SymmetryGroup::trivial()) == Rotation90(3));

  for (auto sym : {SymmetryGroup::trivial(), SymmetryGroup::half_turn(), SymmetryGroup::full()}) {
    for (int q = 0; q < 4; ++q) {
      const Rotation90 c = canonical_rotation(Rotation90(q), sym);
      CHECK(canonical_rotation(c, sym) == c);
      for (const auto &g : sym.members()) {
        CHECK(canonical_rotation(Rotation90(q) + g, sym) == c);
      }
    }
  }
}

TEST_CASE("chamfer_distance conventions") {
  const std::vector<Int3> a{{0, 0, 0}}, b{{1, 0, 0}};
  CHECK(chamfer_distance(a, a) == 0.0);
  CHECK(chamfer_distance(a, b) == 2.0);
  CHECK(chamfer_distance(b, a) == 2.0);
  const std::vector<Int3> none;
  CHECK_THROWS_AS(chamfer_distance(a, none), InputError);
  CHECK_THROWS_AS(chamfer_distance(none, a), InputError);
}

TEST_CASE("chamfer_distance is symmetric, translation invariant and zero only on equal sets") {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> coord(0, 5), count(1, 6), shift(-4, 4);
  for (int trial = 0; trial < 300; ++trial) {
    std::set<Int3> sa, sb;
    const int na = count(rng), nb = count(rng);
    for (int i = 0; i < na; ++i) sa.insert({coord(rng), coord(rng), coord(rng)});
    for (int i = 0; i < nb; ++i) sb.insert({coord(rng), coord(rng), coord(rng)});
    const std::vector<Int3> a(sa.begin(), sa.end()), b(sb.begin(), sb.end());
    const double d = chamfer_distance(a, b);
    CHECK(d == chamfer_distance(b, a));
    CHECK((d == 0.0) == (sa == sb));
    const Int3 t{shift(rng), shift(rng), shift(rng)};
    std::vector<Int3> at, bt;
    for (const auto &c : a) at.push_back(c + t);
    for (const auto &c : b) bt.push_back(c + t);
    CHECK(chamfer_distance(at, bt) == doctest::Approx(d));
  }
}

TEST_CASE("poses_equal respects symmetry and exact translation") {
  Pose6D gt;
  gt.t = {3, 4, 0};
  CHECK(poses_equal(gt, gt, SymmetryGroup::trivial()));
  Pose6D turned = gt;
  turned.r[2] = 180;
  CHECK(poses_equal(turned, gt, SymmetryGroup::half_turn()));
  CHECK_FALSE(poses_equal(turned, gt, SymmetryGroup::trivial()));
  Pose6D moved = gt;
  moved.t.x += 1;
  CHECK_FALSE(poses_equal(moved, gt, SymmetryGroup::full()));
  Pose6D tilted = gt;
  tilted.r[0] = 90;
  CHECK_FALSE(poses_equal(tilted, gt, SymmetryGroup::full()));
}

TEST_CASE("poses_equal is an equivalence relation for a fixed symmetry") {
  std::vector<Pose6D> poses;
  for (int x = 0; x < 2; ++x)
    for (int rz = 0; rz < 4; ++rz) {
      Pose6D p;
      p.t.x = x;
      p.r[2] = rz * 90;
      poses.push_back(p);
    }
  for (auto sym : {SymmetryGroup::trivial(), SymmetryGroup::half_turn(), SymmetryGroup::full()}) {
    for (const auto &a : poses) {
      CHECK(poses_equal(a, a, sym));
      for (const auto &b : poses) {
        CHECK(poses_equal(a, b, sym) == poses_equal(b, a, sym));
        for (const auto &c : poses) {
          if (poses_equal(a, b, sym) && poses_equal(b, c, sym)) CHECK(poses_equal(a, c, sym));
        }
      }
    }
  }
}

TEST_CASE("voxel grid JSON is sorted and round-trips") {
  const std::vector<Int3> cells{{1, 0, 0}, {0, 1, 0}, {0, 0, 0}};
  const VoxelGrid g = VoxelGrid::from_cells({2, 2, 1}, cells);
  CHECK(to_json(g).dump() == R"({"cells":[[0,0,0],[0,1,0],[1,0,0]],"dims":[2,2,1]})");
  CHECK(voxel_grid_from_json(to_json(g)) == g);
  CHECK_THROWS_AS(voxel_grid_from_json(nlohmann::json::parse(R"({"dims":[1,1,1],"cells":[[2,0,0]]})")),
                  InputError);
}

TEST_CASE("Rotation90 arithmetic") {
  CHECK(Rotation90(5).quarter_turns() == 1);
  CHECK(Rotation90(-1).quarter_turns() == 3);
  CHECK((Rotation90(3) + Rotation90(2)).degrees() == 90);
  CHECK(Rotation90::from_degrees(270).quarter_turns() == 3);
  CHECK_THROWS_AS(Rotation90::from_degrees(45), RangeError);
}
