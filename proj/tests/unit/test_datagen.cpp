#include <doctest.h>

#include <filesystem>
#include <set>

#include "scanet/config.hpp"
#include "scanet/datagen.hpp"
#include "scanet/errors.hpp"

using namespace scanet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config(int manuals, std::array<int, 2> steps, std::array<int, 2> draws) {
  json cfg = default_config();
  cfg["generator"]["manuals"] = manuals;
  cfg["generator"]["steps"] = {steps[0], steps[1]};
  cfg["generator"]["draws_per_step"] = {draws[0], draws[1]};
  cfg["image"]["size"] = 32;
  return cfg;
}

AssemblyStep one_component_step(const std::string &shape, Pose6D pose) {
  AssemblyStep s;
  Component c;
  c.id = 0;
  c.shape_name = shape;
  c.shape = library_shape(shape);
  s.components.push_back(c);
  s.gt_poses.push_back(pose);
  return s;
}

Pose6D at(int x, int y, int z, int rz = 0) {
  Pose6D p;
  p.t = {x, y, z};
  p.r[2] = rz;
  return p;
}

} // namespace

TEST_CASE("generate_manual is deterministic and respects the configured ranges") {
  GenConfig g = GenConfig::from_config(default_config());
  g.world_dims = {32, 32, 24};
  g.steps = {15, 40};
  g.components_per_step = {2, 5};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Manual a = generate_manual(g, seed);
    CHECK(a == generate_manual(g, seed));
    CHECK(a.steps.size() >= 15);
    CHECK(a.steps.size() <= 40);
    for (const auto &s : a.steps) {
      CHECK(s.components.size() >= 2);
      CHECK(s.components.size() <= 5);
    }
  }
}

TEST_CASE("GT manuals are collision-free, in the world and supported step by step") {
  const GenConfig g = GenConfig::from_config(default_config());
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Manual m = generate_manual(g, seed);
    std::set<int> ids;
    for (std::size_t k = 1; k <= m.steps.size(); ++k) {
      const AssemblyState st = gt_state(m, static_cast<int>(k));
      const Occupancy occ = occupancy(st);
      CHECK_FALSE(occ.clipped);
      std::size_t total = 0;
      for (const auto &pl : st.placed) total += pl.component.shape.count();
      CHECK(occ.cells.size() == total);
    }
    AssemblyState partial{m.world_dims, {}};
    for (const auto &step : m.steps) {
      for (std::size_t i = 0; i < step.components.size(); ++i) {
        CHECK(is_supported(partial, step.components[i].shape, step.gt_poses[i]));
        CHECK(ids.insert(step.components[i].id).second);
        // Rotations come from canonical coset representatives.
        const auto sym = symmetry_group(step.components[i].shape);
        CHECK(canonical_rotation(step.gt_poses[i].rz(), sym) == step.gt_poses[i].rz());
        partial.placed.push_back({step.components[i], step.gt_poses[i]});
      }
    }
  }
}

TEST_CASE("generation failure reports the retry count") {
  GenConfig g = GenConfig::from_config(default_config());
  g.world_dims = {4, 4, 2};
  g.shapes = {"brick_4x1"};
  g.steps = {20, 20};
  g.max_retries = 7;
  try {
    generate_manual(g, 1);
    FAIL("expected GenerationError");
  } catch (const GenerationError &e) {
    CHECK(e.retries() == 7);
  }
}

TEST_CASE("label_error") {
  const auto trivial = SymmetryGroup::trivial();
  const auto half = SymmetryGroup::half_turn();
  CHECK(label_error(at(1, 1, 0), at(1, 1, 0), trivial) == Status::Correct);
  CHECK(label_error(at(1, 1, 0), at(2, 1, 0), trivial) == Status::PositionError);
  CHECK(label_error(at(1, 1, 0), at(1, 1, 0, 90), trivial) == Status::RotationError);
  CHECK(label_error(at(1, 1, 0), at(1, 2, 0, 270), trivial) == Status::PosRotError);
  CHECK(label_error(at(1, 1, 0), at(1, 1, 0, 180), half) == Status::Correct);
  CHECK(label_error(at(1, 1, 0), at(1, 1, 0, 90), half) == Status::RotationError);
  CHECK(label_error(at(1, 1, 0), at(1, 1, 0, 270), SymmetryGroup::full()) == Status::Correct);
}

TEST_CASE("corrupt_step follows degenerate error models") {
  const AssemblyStep step = one_component_step("l_tetromino", at(6, 6, 0, 90));
  const Int3 world{16, 16, 12};
  ErrorModel correct;
  correct.p = {1, 0, 0, 0};
  ErrorModel position;
  position.p = {0, 1, 0, 0};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto c = corrupt_step(step, world, correct, seed);
    CHECK(c.labels[0] == Status::Correct);
    CHECK(c.poses[0] == step.gt_poses[0]);
    const auto p = corrupt_step(step, world, position, seed);
    CHECK(p.labels[0] == Status::PositionError);
    CHECK(p.poses[0].rz() == step.gt_poses[0].rz());
    for (int a = 0; a < 3; ++a) CHECK(std::abs(p.poses[0].t[a] - step.gt_poses[0].t[a]) <= 2);
  }
}

TEST_CASE("fully symmetric components never receive rotation errors") {
  const AssemblyStep step = one_component_step("cube_1x1", at(6, 6, 0));
  ErrorModel rot;
  rot.p = {0, 0, 1, 0};
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto c = corrupt_step(step, {16, 16, 12}, rot, rng);
    CHECK(c.labels[0] != Status::RotationError);
    CHECK(c.labels[0] != Status::PosRotError);
  }
}

TEST_CASE("position offsets at the world boundary are clipped but never zero") {
  const AssemblyStep step = one_component_step("brick_2x1", at(0, 0, 0));
  ErrorModel position;
  position.p = {0, 1, 0, 0};
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto c = corrupt_step(step, {16, 16, 12}, position, rng);
    CHECK(c.poses[0].t != step.gt_poses[0].t);
    for (int a = 0; a < 3; ++a) CHECK(c.poses[0].t[a] >= 0);
  }
}

TEST_CASE("dataset sample count and draw range") {
  const Dataset ds = build_dataset_in_memory(small_config(4, {3, 3}, {3, 3}), 5);
  CHECK(ds.samples.size() == 36);
  CHECK(ds.manifest["counts"]["samples"] == 36);

  const Dataset var = build_dataset_in_memory(small_config(6, {4, 6}, {3, 5}), 9);
  std::map<std::string, int> draws;
  for (const auto &s : var.samples) draws[s.manual_id + "/" + std::to_string(s.step_index)]++;
  for (const auto &[key, n] : draws) {
    CHECK(n >= 3);
    CHECK(n <= 5);
  }
}

TEST_CASE("samples only corrupt the current step and keep GT correct poses") {
  const Dataset ds = build_dataset_in_memory(small_config(3, {3, 4}, {3, 3}), 2);
  for (const auto &s : ds.samples) {
    const auto &step = ds.manual(s.manual_id).steps[s.step_index];
    CHECK(s.correct_poses == step.gt_poses);
    REQUIRE(s.labels.size() == step.components.size());
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      CHECK(s.labels[i] == label_error(step.gt_poses[i], s.corrupted_poses[i],
                                       symmetry_group(step.components[i].shape)));
    }
  }
}

TEST_CASE("same seed gives the same manifest") {
  const json cfg = small_config(5, {3, 5}, {3, 5});
  CHECK(build_dataset_in_memory(cfg, 42).manifest == build_dataset_in_memory(cfg, 42).manifest);
  CHECK(build_dataset_in_memory(cfg, 42).manifest != build_dataset_in_memory(cfg, 43).manifest);
}

TEST_CASE("split_dataset") {
  std::vector<std::string> ids;
  std::vector<Sample> samples;
  for (int m = 0; m < 100; ++m) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "%04d", m);
    ids.push_back(buf);
    for (int d = 0; d < 3; ++d) {
      Sample s;
      s.manual_id = buf;
      s.draw = d;
      samples.push_back(s);
    }
  }
  const auto sp = split_dataset(ids, samples, 1);
  CHECK(sp.setwise_test.size() == 10);
  const std::set<std::string> test(sp.setwise_test.begin(), sp.setwise_test.end());
  const double remaining = static_cast<double>(samples.size()) - 30.0;
  CHECK(std::abs(static_cast<double>(sp.train.size()) - 0.8 * remaining) <= 1.0);
  CHECK(sp.train.size() + sp.val.size() == samples.size() - 30);
  std::set<std::string> seen;
  for (const auto *part : {&sp.train, &sp.val}) {
    for (const auto &key : *part) {
      CHECK(seen.insert(key).second);
      CHECK(test.count(key.substr(0, 4)) == 0);
    }
  }
  CHECK_THROWS_AS(split_dataset({"a", "b"}, {}, 1), InputError);
}

TEST_CASE("status statistics") {
  const Dataset ds = build_dataset_in_memory(small_config(4, {3, 4}, {3, 4}), 7);
  const auto st = dataset_stats(ds);
  double sum = 0;
  for (double v : st.status_proportions) sum += v;
  CHECK(sum == doctest::Approx(1.0));

  json clean = small_config(4, {3, 4}, {3, 4});
  clean["error_model"]["p"] = {1.0, 0.0, 0.0, 0.0};
  const auto cs = dataset_stats(build_dataset_in_memory(clean, 7));
  CHECK(cs.status_proportions[0] == 1.0);
  for (int k = 1; k < 4; ++k) CHECK(cs.status_proportions[k] == 0.0);
}

TEST_CASE("status proportions match the error model over 10^4 components") {
  json cfg = small_config(80, {8, 10}, {5, 5});
  const Dataset ds = build_dataset_in_memory(cfg, 123);
  const auto st = dataset_stats(ds);
  REQUIRE(st.components >= 10000);
  const auto p = ErrorModel::from_config(cfg).p;
  for (int k = 0; k < 4; ++k) CHECK(std::abs(st.status_proportions[k] - p[k]) <= 0.02);
}

TEST_CASE("written datasets load back identically") {
  const fs::path root = fs::temp_directory_path() / "scanet_test_dataset";
  fs::remove_all(root);
  json cfg = small_config(3, {2, 3}, {3, 3});
  const Dataset written = build_dataset(cfg, 4, root);
  CHECK(fs::exists(root / "manifest.json"));
  CHECK(fs::exists(root / "config.json"));
  const auto &first = written.samples.front();
  const fs::path step_dir = root / sample_path(first).parent_path();
  CHECK(fs::exists(step_dir / "gt.png"));
  CHECK(fs::exists(step_dir / "sample_0" / "assembled.png"));
  CHECK(fs::exists(step_dir / "sample_0" / "comp_0.png"));

  const Dataset loaded = Dataset::load(root);
  CHECK(loaded.manifest == written.manifest);
  CHECK(loaded.samples.size() == written.samples.size());
  for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
    CHECK(loaded.samples[i].to_json() == written.samples[i].to_json());
  }
  for (const auto &[id, m] : written.manuals) CHECK(loaded.manual(id) == m);
  CHECK(loaded.splits.train == written.splits.train);
  fs::remove_all(root);
}

TEST_CASE("loading a malformed manifest is a data error") {
  const fs::path root = fs::temp_directory_path() / "scanet_bad_dataset";
  fs::remove_all(root);
  fs::create_directories(root);
  write_json_file(root / "manifest.json", json{{"version", 1}, {"manuals", 3}});
  CHECK_THROWS_AS(Dataset::load(root), DataError);
  fs::remove_all(root);
}
