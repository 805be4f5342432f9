#include "scanet/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "scanet/config.hpp"
#include "scanet/errors.hpp"
#include "scanet/image_io.hpp"

namespace scanet {

namespace fs = std::filesystem;
using nlohmann::json;

const char *status_name(Status s) {
  switch (s) {
  case Status::Correct: return "Correct";
  case Status::PositionError: return "Position";
  case Status::RotationError: return "Rotation";
  case Status::PosRotError: return "P&R";
  }
  return "?";
}

Status status_from_index(int index) {
  if (index < 0 || index >= kStatusCount) {
    throw DataError("status index " + std::to_string(index) + " outside 0..3");
  }
  return static_cast<Status>(index);
}

namespace {

struct ShapeDef {
  const char *name;
  Int3 dims;
  std::vector<Int3> cells;
};

const std::vector<ShapeDef> &shape_defs() {
  static const std::vector<ShapeDef> defs = {
      {"brick_2x1", {2, 1, 1}, {{0, 0, 0}, {1, 0, 0}}},
      {"brick_3x1", {3, 1, 1}, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}},
      {"brick_4x1", {4, 1, 1}, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}}},
      {"brick_3x2", {3, 2, 1}, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}, {1, 1, 0}, {2, 1, 0}}},
      {"brick_2x1x2", {2, 1, 2}, {{0, 0, 0}, {1, 0, 0}, {0, 0, 1}, {1, 0, 1}}},
      {"l_tromino", {2, 2, 1}, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}},
      {"l_tetromino", {3, 2, 1}, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {0, 1, 0}}},
      {"t_tetromino", {3, 2, 1}, {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {1, 1, 0}}},
      {"s_tetromino", {3, 2, 1}, {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {2, 1, 0}}},
      {"corner_step", {2, 2, 2}, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}}},
      {"cube_1x1", {1, 1, 1}, {{0, 0, 0}}},
      {"plate_2x2", {2, 2, 1}, {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}}},
      {"cube_2x2x2",
       {2, 2, 2},
       {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {1, 1, 1}}},
  };
  return defs;
}

int uniform_int(std::mt19937_64 &rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

std::vector<Rotation90> canonical_rotations(SymmetryGroup sym) {
  std::vector<Rotation90> out;
  for (int q = 0; q < 4; ++q) {
    if (canonical_rotation(Rotation90(q), sym) == Rotation90(q)) out.emplace_back(q);
  }
  return out;
}

std::string manual_id_for(int index, int total) {
  const int width = std::max(4, static_cast<int>(std::to_string(std::max(total - 1, 0)).size()));
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << index;
  return os.str();
}

} // namespace

VoxelGrid library_shape(const std::string &name) {
  for (const auto &d : shape_defs()) {
    if (name == d.name) return VoxelGrid::from_cells(d.dims, d.cells);
  }
  throw ConfigError("unknown shape '" + name + "'");
}

std::vector<std::string> library_shape_names() {
  std::vector<std::string> names;
  for (const auto &d : shape_defs()) names.emplace_back(d.name);
  std::sort(names.begin(), names.end());
  return names;
}

void ErrorModel::validate() const {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ConfigError("error model probabilities must be non-negative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("error model probabilities must sum to 1");
  if (max_offset < 1) throw ConfigError("error model max_offset must be >= 1");
}

ErrorModel ErrorModel::from_config(const json &cfg) {
  ErrorModel m;
  try {
    const auto p = cfg.at("error_model").at("p").get<std::vector<double>>();
    if (p.size() != 4) throw ConfigError("error_model.p must have four entries");
    std::copy(p.begin(), p.end(), m.p.begin());
    m.max_offset = cfg.at("error_model").at("max_offset").get<int>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("error_model: ") + e.what());
  }
  m.validate();
  return m;
}

json ErrorModel::to_json() const {
  return {{"p", json::array({p[0], p[1], p[2], p[3]})}, {"max_offset", max_offset}};
}

GenConfig GenConfig::from_config(const json &cfg) {
  GenConfig g;
  g.world_dims = world_dims_of(cfg);
  g.component_box = component_box_of(cfg);
  try {
    const auto &gen = cfg.at("generator");
    const auto steps = gen.at("steps").get<std::vector<int>>();
    const auto comps = gen.at("components_per_step").get<std::vector<int>>();
    if (steps.size() != 2 || comps.size() != 2) throw ConfigError("ranges must be [lo, hi]");
    g.steps = {steps[0], steps[1]};
    g.components_per_step = {comps[0], comps[1]};
    g.shapes = gen.at("shapes").get<std::vector<std::string>>();
    g.placement_region = gen.at("placement_region").get<double>();
    g.max_retries = gen.at("max_retries").get<int>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("generator: ") + e.what());
  }
  if (g.steps[0] < 1 || g.steps[0] > g.steps[1]) throw ConfigError("bad generator.steps range");
  if (g.components_per_step[0] < 1 || g.components_per_step[0] > g.components_per_step[1]) {
    throw ConfigError("bad generator.components_per_step range");
  }
  if (g.shapes.empty()) throw ConfigError("generator.shapes must not be empty");
  for (const auto &name : g.shapes) {
    const Int3 d = library_shape(name).dims();
    // Any rotation must still fit the box, so the footprint check uses the larger side.
    const int side = std::max(d.x, d.y);
    if (side > std::min(g.component_box.x, g.component_box.y) || d.z > g.component_box.z) {
      throw ConfigError("shape '" + name + "' does not fit the component box");
    }
  }
  return g;
}

Manual generate_manual(const GenConfig &cfg, std::uint64_t seed, const std::string &id) {
  std::mt19937_64 rng(seed);
  Manual manual;
  manual.id = id;
  manual.world_dims = cfg.world_dims;
  const Int3 world = cfg.world_dims;

  // Column tops: one past the highest occupied z in each (x, y) column.
  std::vector<int> top(static_cast<std::size_t>(world.x) * world.y, 0);
  auto top_at = [&](int x, int y) -> int & { return top[static_cast<std::size_t>(x) * world.y + y]; };
  std::set<Int3> occupied;

  std::vector<VoxelGrid> shapes;
  std::vector<SymmetryGroup> syms;
  for (const auto &name : cfg.shapes) {
    shapes.push_back(library_shape(name));
    syms.push_back(symmetry_group(shapes.back()));
  }

  auto region = [&](int dim) {
    const double r = cfg.placement_region;
    const int lo = static_cast<int>(std::floor(dim * (1.0 - r) * 0.5));
    const int hi = std::max(lo, static_cast<int>(std::ceil(dim * (1.0 + r) * 0.5)) - 1);
    return std::array<int, 2>{lo, std::min(hi, dim - 1)};
  };
  const auto rx = region(world.x), ry = region(world.y);

  const int n_steps = uniform_int(rng, cfg.steps[0], cfg.steps[1]);
  int next_id = 0;
  for (int k = 0; k < n_steps; ++k) {
    AssemblyStep step;
    const int n = uniform_int(rng, cfg.components_per_step[0], cfg.components_per_step[1]);
    for (int i = 0; i < n; ++i) {
      const int s = uniform_int(rng, 0, static_cast<int>(shapes.size()) - 1);
      const auto rots = canonical_rotations(syms[s]);
      bool placed = false;
      for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
        Pose6D pose;
        pose.r[2] = rots[uniform_int(rng, 0, static_cast<int>(rots.size()) - 1)].degrees();
        pose.t = {uniform_int(rng, rx[0], rx[1]), uniform_int(rng, ry[0], ry[1]), 0};
        auto cells = transform_component(shapes[s], pose);
        bool fits = true;
        int drop = 0;
        for (const auto &c : cells) {
          if (c.x < 0 || c.y < 0 || c.x >= world.x || c.y >= world.y) {
            fits = false;
            break;
          }
          drop = std::max(drop, top_at(c.x, c.y) - c.z);
        }
        if (!fits) continue;
        pose.t.z = drop;
        for (auto &c : cells) {
          c.z += drop;
          if (c.z >= world.z || occupied.count(c)) fits = false;
        }
        if (!fits) continue;
        for (const auto &c : cells) {
          occupied.insert(c);
          top_at(c.x, c.y) = std::max(top_at(c.x, c.y), c.z + 1);
        }
        Component comp;
        comp.id = next_id;
        comp.shape_name = cfg.shapes[s];
        comp.shape = shapes[s];
        comp.color = palette()[next_id % palette().size()];
        ++next_id;
        step.components.push_back(std::move(comp));
        step.gt_poses.push_back(pose);
        placed = true;
      }
      if (!placed) {
        throw GenerationError("no free supported placement for shape '" + cfg.shapes[s] +
                                  "' in manual " + id + " step " + std::to_string(k),
                              cfg.max_retries);
      }
    }
    manual.steps.push_back(std::move(step));
  }
  return manual;
}

Status label_error(const Pose6D &gt, const Pose6D &corrupted, SymmetryGroup sym) {
  const bool position_wrong = gt.t != corrupted.t;
  const bool rotation_wrong = gt.r[0] != corrupted.r[0] || gt.r[1] != corrupted.r[1] ||
                              canonical_rotation(gt.rz(), sym) !=
                                  canonical_rotation(corrupted.rz(), sym);
  if (position_wrong && rotation_wrong) return Status::PosRotError;
  if (position_wrong) return Status::PositionError;
  if (rotation_wrong) return Status::RotationError;
  return Status::Correct;
}

CorruptedStep corrupt_step(const AssemblyStep &step, const Int3 &world_dims,
                           const ErrorModel &model, std::mt19937_64 &rng) {
  model.validate();
  CorruptedStep out;
  for (std::size_t i = 0; i < step.components.size(); ++i) {
    const Pose6D &gt = step.gt_poses[i];
    const SymmetryGroup sym = symmetry_group(step.components[i].shape);
    std::array<double, 4> w = model.p;
    if (sym == SymmetryGroup::full()) {
      // No rotation is distinguishable; redraw from the mass left on position-only statuses.
      w[static_cast<int>(Status::RotationError)] = 0.0;
      w[static_cast<int>(Status::PosRotError)] = 0.0;
      if (w[0] + w[1] <= 0.0) w = {1.0, 1.0, 0.0, 0.0};
    }
    std::discrete_distribution<int> pick(w.begin(), w.end());
    const auto status = static_cast<Status>(pick(rng));

    Pose6D pose = gt;
    if (status == Status::PositionError || status == Status::PosRotError) {
      do {
        for (int a = 0; a < 3; ++a) {
          const int off = uniform_int(rng, -model.max_offset, model.max_offset);
          pose.t[a] = std::clamp(gt.t[a] + off, 0, world_dims[a] - 1);
        }
      } while (pose.t == gt.t);
    }
    if (status == Status::RotationError || status == Status::PosRotError) {
      std::vector<int> outside;
      const Rotation90 gt_canon = canonical_rotation(gt.rz(), sym);
      for (int q = 0; q < 4; ++q) {
        if (canonical_rotation(Rotation90(q), sym) != gt_canon) outside.push_back(q);
      }
      pose.r[2] = Rotation90(outside[uniform_int(rng, 0, static_cast<int>(outside.size()) - 1)])
                      .degrees();
    }
    out.poses.push_back(pose);
    out.labels.push_back(label_error(gt, pose, sym));
  }
  return out;
}

CorruptedStep corrupt_step(const AssemblyStep &step, const Int3 &world_dims,
                           const ErrorModel &model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return corrupt_step(step, world_dims, model, rng);
}

std::string Sample::key() const {
  return manual_id + "/" + std::to_string(step_index) + "/" + std::to_string(draw);
}

json Sample::to_json() const {
  json corrupted = json::array(), correct = json::array(), labels_j = json::array();
  for (const auto &p : corrupted_poses) corrupted.push_back(scanet::to_json(p));
  for (const auto &p : correct_poses) correct.push_back(scanet::to_json(p));
  for (auto s : labels) labels_j.push_back(static_cast<int>(s));
  return {{"manual_id", manual_id},
          {"step", step_index},
          {"draw", draw},
          {"component_ids", component_ids},
          {"corrupted_poses", std::move(corrupted)},
          {"labels", std::move(labels_j)},
          {"correct_poses", std::move(correct)}};
}

Sample Sample::from_json(const json &j) {
  Sample s;
  try {
    s.manual_id = j.at("manual_id").get<std::string>();
    s.step_index = j.at("step").get<int>();
    s.draw = j.at("draw").get<int>();
    s.component_ids = j.at("component_ids").get<std::vector<int>>();
    for (const auto &p : j.at("corrupted_poses")) s.corrupted_poses.push_back(pose_from_json(p));
    for (const auto &p : j.at("correct_poses")) s.correct_poses.push_back(pose_from_json(p));
    for (const auto &l : j.at("labels")) s.labels.push_back(status_from_index(l.get<int>()));
  } catch (const json::exception &e) {
    throw DataError(std::string("malformed sample: ") + e.what());
  }
  if (s.component_ids.size() != s.corrupted_poses.size() ||
      s.component_ids.size() != s.correct_poses.size() ||
      s.component_ids.size() != s.labels.size()) {
    throw DataError("sample " + s.key() + " has lists of different lengths");
  }
  return s;
}

DatasetSplits split_dataset(const std::vector<std::string> &manual_ids,
                            const std::vector<Sample> &samples, std::uint64_t seed,
                            double setwise_fraction, double train_fraction) {
  if (manual_ids.size() < 3) {
    throw InputError("splitting needs at least 3 manuals, got " + std::to_string(manual_ids.size()));
  }
  std::mt19937_64 rng(seed);
  std::vector<std::string> ids = manual_ids;
  std::sort(ids.begin(), ids.end());
  std::shuffle(ids.begin(), ids.end(), rng);
  const auto n_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(setwise_fraction * static_cast<double>(ids.size()))),
      1, ids.size() - 2);
  DatasetSplits out;
  out.setwise_test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::sort(out.setwise_test.begin(), out.setwise_test.end());
  const std::set<std::string> test_set(out.setwise_test.begin(), out.setwise_test.end());

  std::vector<std::string> rest;
  for (const auto &s : samples) {
    if (!test_set.count(s.manual_id)) rest.push_back(s.key());
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(rest.size())));
  out.train.assign(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(rest.begin() + static_cast<std::ptrdiff_t>(n_train), rest.end());
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

const Manual &Dataset::manual(const std::string &id) const {
  auto it = manuals.find(id);
  if (it == manuals.end()) throw DataError("unknown manual '" + id + "'");
  return it->second;
}

const Sample &Dataset::sample(const std::string &key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw DataError("unknown sample '" + key + "'");
  return samples[it->second];
}

std::vector<const Sample *> Dataset::select(const std::vector<std::string> &keys) const {
  std::vector<const Sample *> out;
  out.reserve(keys.size());
  for (const auto &k : keys) out.push_back(&sample(k));
  return out;
}

void Dataset::reindex() {
  index_.clear();
  for (std::size_t i = 0; i < samples.size(); ++i) index_[samples[i].key()] = i;
}

fs::path sample_path(const Sample &s) {
  return fs::path("manuals") / s.manual_id / "steps" / std::to_string(s.step_index) /
         ("sample_" + std::to_string(s.draw) + ".json");
}

void write_json_file(const fs::path &path, const json &j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

json read_json_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception &e) {
    throw DataError(path.string() + " is not valid JSON: " + e.what());
  }
}

namespace {

json splits_to_json(const DatasetSplits &s) {
  return {{"train", s.train}, {"val", s.val}, {"setwise_test", s.setwise_test}};
}

json make_manifest(const json &cfg, std::uint64_t seed, const Dataset &ds) {
  std::map<std::string, std::vector<const Sample *>> by_manual;
  for (const auto &s : ds.samples) by_manual[s.manual_id].push_back(&s);
  json manuals = json::array();
  for (const auto &[id, m] : ds.manuals) {
    json paths = json::array();
    for (const auto *s : by_manual[id]) paths.push_back(sample_path(*s).generic_string());
    manuals.push_back({{"id", id},
                       {"path", (fs::path("manuals") / id / "manual.json").generic_string()},
                       {"steps", m.steps.size()},
                       {"samples", std::move(paths)}});
  }
  std::size_t test_samples = 0;
  for (const auto &id : ds.splits.setwise_test) test_samples += by_manual[id].size();
  json counts = {{"manuals", ds.manuals.size()},
                 {"samples", ds.samples.size()},
                 {"train", ds.splits.train.size()},
                 {"val", ds.splits.val.size()},
                 {"setwise_test", ds.splits.setwise_test.size()},
                 {"setwise_test_samples", test_samples}};
  return {{"version", 1},
          {"seed", seed},
          {"interface_hash", interface_hash(cfg)},
          {"error_model", ErrorModel::from_config(cfg).to_json()},
          {"counts", std::move(counts)},
          {"manuals", std::move(manuals)},
          {"splits", splits_to_json(ds.splits)}};
}

} // namespace

Dataset build_dataset_in_memory(const json &cfg, std::uint64_t seed) {
  validate_config(cfg);
  const GenConfig gen = GenConfig::from_config(cfg);
  const ErrorModel em = ErrorModel::from_config(cfg);
  const auto draws = cfg.at("generator").at("draws_per_step").get<std::vector<int>>();
  const int n_manuals = cfg.at("generator").at("manuals").get<int>();

  Dataset ds;
  std::vector<std::string> ids;
  for (int i = 0; i < n_manuals; ++i) {
    const std::uint64_t manual_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
    const std::string id = manual_id_for(i, n_manuals);
    Manual m = generate_manual(gen, manual_seed, id);
    std::mt19937_64 crng(derive_seed(manual_seed, 0xC0DEULL));
    for (std::size_t k = 0; k < m.steps.size(); ++k) {
      const auto &step = m.steps[k];
      const int n_draws = uniform_int(crng, draws[0], draws[1]);
      for (int d = 0; d < n_draws; ++d) {
        CorruptedStep c = corrupt_step(step, m.world_dims, em, crng);
        Sample s;
        s.manual_id = id;
        s.step_index = static_cast<int>(k);
        s.draw = d;
        for (const auto &comp : step.components) s.component_ids.push_back(comp.id);
        s.corrupted_poses = std::move(c.poses);
        s.labels = std::move(c.labels);
        s.correct_poses = step.gt_poses;
        ds.samples.push_back(std::move(s));
      }
    }
    ids.push_back(id);
    ds.manuals.emplace(id, std::move(m));
  }
  ds.reindex();
  ds.splits = split_dataset(ids, ds.samples, derive_seed(seed, 0x5B117ULL),
                            cfg.at("split").at("setwise_fraction").get<double>(),
                            cfg.at("split").at("train_fraction").get<double>());
  ds.manifest = make_manifest(cfg, seed, ds);
  ds.manifest["config"] = cfg;
  return ds;
}

Dataset build_dataset(const json &cfg, std::uint64_t seed, const fs::path &root) {
  Dataset ds = build_dataset_in_memory(cfg, seed);
  ds.root = root;
  const bool images = cfg.at("dataset").at("write_images").get<bool>();
  const CameraConfig cam = camera_of(cfg);

  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create " + root.string() + ": " + ec.message());

  std::map<std::string, std::vector<const Sample *>> by_manual;
  for (const auto &s : ds.samples) by_manual[s.manual_id].push_back(&s);

  for (const auto &[id, m] : ds.manuals) {
    const fs::path mdir = root / "manuals" / id;
    for (std::size_t k = 0; k < m.steps.size(); ++k) {
      fs::create_directories(mdir / "steps" / std::to_string(k), ec);
      if (ec) throw IoError("cannot create " + (mdir / "steps").string() + ": " + ec.message());
      if (images) write_png(mdir / "steps" / std::to_string(k) / "gt.png", render(gt_state(m, k + 1), cam));
    }
    write_json_file(mdir / "manual.json", to_json(m));
    for (const auto *s : by_manual[id]) {
      const fs::path file = root / sample_path(*s);
      write_json_file(file, s->to_json());
      if (!images) continue;
      const fs::path sdir = file.parent_path() / ("sample_" + std::to_string(s->draw));
      fs::create_directories(sdir, ec);
      if (ec) throw IoError("cannot create " + sdir.string() + ": " + ec.message());
      AssemblyState assembled = gt_state(m, static_cast<std::size_t>(s->step_index));
      const auto &step = m.steps[static_cast<std::size_t>(s->step_index)];
      for (std::size_t i = 0; i < step.components.size(); ++i) {
        assembled.placed.push_back({step.components[i], s->corrupted_poses[i]});
        write_png(sdir / ("comp_" + std::to_string(i) + ".png"),
                  render_component(step.components[i], s->corrupted_poses[i], m.world_dims, cam));
      }
      write_png(sdir / "assembled.png", render(assembled, cam));
    }
  }
  write_json_file(root / "config.json", cfg);
  write_json_file(root / "manifest.json", ds.manifest);
  return ds;
}

Dataset Dataset::load(const fs::path &root) {
  Dataset ds;
  ds.root = root;
  ds.manifest = read_json_file(root / "manifest.json");
  try {
    if (ds.manifest.at("version").get<int>() != 1) {
      throw DataError("unsupported dataset version in " + (root / "manifest.json").string());
    }
    for (const auto &entry : ds.manifest.at("manuals")) {
      const auto id = entry.at("id").get<std::string>();
      Manual m = manual_from_json(read_json_file(root / entry.at("path").get<std::string>()));
      if (m.id != id) throw DataError("manual id mismatch for " + id);
      for (const auto &p : entry.at("samples")) {
        ds.samples.push_back(Sample::from_json(read_json_file(root / p.get<std::string>())));
      }
      ds.manuals.emplace(id, std::move(m));
    }
    const auto &sp = ds.manifest.at("splits");
    ds.splits.train = sp.at("train").get<std::vector<std::string>>();
    ds.splits.val = sp.at("val").get<std::vector<std::string>>();
    ds.splits.setwise_test = sp.at("setwise_test").get<std::vector<std::string>>();
    if (ds.manifest.at("counts").at("samples").get<std::size_t>() != ds.samples.size()) {
      throw DataError("manifest sample count does not match the sample files");
    }
  } catch (const json::exception &e) {
    throw DataError("malformed manifest in " + root.string() + ": " + e.what());
  } catch (const InputError &e) {
    throw DataError(std::string("malformed manual in ") + root.string() + ": " + e.what());
  }
  ds.reindex();
  for (const auto &key : ds.splits.train) ds.sample(key);
  for (const auto &key : ds.splits.val) ds.sample(key);
  for (const auto &id : ds.splits.setwise_test) ds.manual(id);
  return ds;
}

json DatasetStats::to_json() const {
  json props = json::object(), counts = json::object();
  for (int s = 0; s < kStatusCount; ++s) {
    props[status_name(static_cast<Status>(s))] = status_proportions[static_cast<std::size_t>(s)];
    counts[status_name(static_cast<Status>(s))] = status_counts[static_cast<std::size_t>(s)];
  }
  json steps = json::object(), comps = json::object();
  for (const auto &[k, v] : steps_histogram) steps[std::to_string(k)] = v;
  for (const auto &[k, v] : components_histogram) comps[std::to_string(k)] = v;
  return {{"manuals", manuals},
          {"samples", samples},
          {"components", components},
          {"status_counts", std::move(counts)},
          {"status_proportions", std::move(props)},
          {"steps_histogram", std::move(steps)},
          {"components_histogram", std::move(comps)}};
}

DatasetStats dataset_stats(const Dataset &dataset) {
  DatasetStats st;
  st.manuals = static_cast<int>(dataset.manuals.size());
  st.samples = static_cast<int>(dataset.samples.size());
  for (const auto &s : dataset.samples) {
    for (auto l : s.labels) ++st.status_counts[static_cast<std::size_t>(l)];
    st.components += static_cast<std::int64_t>(s.labels.size());
  }
  for (int s = 0; s < kStatusCount; ++s) {
    st.status_proportions[static_cast<std::size_t>(s)] =
        st.components > 0 ? static_cast<double>(st.status_counts[static_cast<std::size_t>(s)]) /
                                static_cast<double>(st.components)
                          : 0.0;
  }
  for (const auto &[id, m] : dataset.manuals) {
    ++st.steps_histogram[static_cast<int>(m.steps.size())];
    for (const auto &step : m.steps) ++st.components_histogram[static_cast<int>(step.components.size())];
  }
  return st;
}

void write_stats_png(const DatasetStats &stats, const fs::path &path) {
  constexpr int panel_w = 220, panel_h = 160, pad = 10;
  const int width = 3 * panel_w, height = panel_h;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3, 255);
  auto fill = [&](int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y < std::min(height, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(width, x1); ++x) {
        const auto i = (static_cast<std::size_t>(y) * width + x) * 3;
        rgb[i] = c.r;
        rgb[i + 1] = c.g;
        rgb[i + 2] = c.b;
      }
  };
  auto bars = [&](int panel, const std::vector<double> &values, Rgb color) {
    const double peak = values.empty() ? 0.0 : *std::max_element(values.begin(), values.end());
    const int x0 = panel * panel_w + pad, usable = panel_w - 2 * pad;
    fill(x0, panel_h - pad, x0 + usable, panel_h - pad + 1, {0, 0, 0});
    if (values.empty() || peak <= 0.0) return;
    const int bw = std::max(1, usable / static_cast<int>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
      const int h = static_cast<int>(std::lround((panel_h - 2 * pad) * values[i] / peak));
      const int bx = x0 + static_cast<int>(i) * bw;
      fill(bx + 1, panel_h - pad - h, bx + bw - 1, panel_h - pad, color);
    }
  };
  std::vector<double> steps, comps;
  if (!stats.steps_histogram.empty()) {
    for (int k = stats.steps_histogram.begin()->first; k <= stats.steps_histogram.rbegin()->first; ++k) {
      auto it = stats.steps_histogram.find(k);
      steps.push_back(it == stats.steps_histogram.end() ? 0.0 : it->second);
    }
  }
  if (!stats.components_histogram.empty()) {
    for (int k = stats.components_histogram.begin()->first;
         k <= stats.components_histogram.rbegin()->first; ++k) {
      auto it = stats.components_histogram.find(k);
      comps.push_back(it == stats.components_histogram.end() ? 0.0 : it->second);
    }
  }
  bars(0, steps, {40, 90, 230});
  bars(1, comps, {40, 180, 60});
  bars(2, {stats.status_proportions.begin(), stats.status_proportions.end()}, {230, 25, 25});
  write_png(path, width, height, rgb);
}

} // namespace scanet
