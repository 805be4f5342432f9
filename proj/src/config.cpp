#include "scanet/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scanet/errors.hpp"

namespace scanet {

using nlohmann::json;

json default_config() {
  return json::parse(R"({
    "world": {"dims": [16, 16, 12]},
    "image": {"size": 128, "view_dir": [1.0, -1.0, -1.0], "margin": 0.04},
    "component_box": [8, 8, 4],
    "generator": {
      "manuals": 100,
      "steps": [6, 10],
      "components_per_step": [2, 5],
      "draws_per_step": [3, 5],
      "shapes": ["brick_2x1", "brick_3x1", "brick_4x1", "brick_3x2", "brick_2x1x2",
                 "l_tromino", "l_tetromino", "t_tetromino", "s_tetromino", "corner_step"],
      "placement_region": 0.5,
      "max_retries": 500
    },
    "error_model": {"p": [0.35, 0.35, 0.05, 0.25], "max_offset": 2},
    "dataset": {"write_images": true},
    "split": {"setwise_fraction": 0.1, "train_fraction": 0.8},
    "model": {
      "c1": 128, "c2": 256, "c3": 128,
      "stem_channels": 64, "hourglass_depth": 3,
      "voxel_width": 32, "image_width": 32,
      "encoder_layers": 3, "decoder_layers": 3, "heads": 8, "ffn_dim": 512, "dropout": 0.0,
      "no_ar": false, "no_image_encoder": false, "no_6d_encoder": false
    },
    "train": {
      "lr": 1e-4, "weight_decay": 1e-4,
      "batch": 8, "grad_accumulation": 4, "epochs": 100,
      "alpha": 1.0, "beta": 1.0, "gamma": 0.5,
      "checkpoint_every": 1, "max_iterations": 0, "seed": 0, "double_precision": false,
      "cache_limit": 2048
    },
    "eval": {"replace": "selective", "seed": 0}
  })");
}

json load_config_file(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config file " + path.string() + " must hold an object");
  return j;
}

void merge_config(json &base, const json &overlay) {
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
      merge_config(base[it.key()], *it);
    } else {
      base[it.key()] = *it;
    }
  }
}

namespace {

json parse_scalar(const std::string &text) {
  try {
    return json::parse(text);
  } catch (const json::exception &) {
    return text;
  }
}

} // namespace

void apply_override(json &cfg, const std::string &dotted_key, const std::string &text) {
  if (dotted_key.empty()) throw ConfigError("empty override key");
  json *node = &cfg;
  std::stringstream ss(dotted_key);
  std::string seg;
  std::vector<std::string> segs;
  while (std::getline(ss, seg, '.')) {
    for (auto &ch : seg)
      if (ch == '-') ch = '_';
    if (seg.empty()) throw ConfigError("malformed override key '" + dotted_key + "'");
    segs.push_back(seg);
  }
  for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
    json &child = (*node)[segs[i]];
    if (!child.is_object()) {
      if (!child.is_null()) throw ConfigError("override key '" + dotted_key + "' crosses a leaf");
      child = json::object();
    }
    node = &child;
  }
  json value;
  if (text.find(',') != std::string::npos && (text.empty() || text.front() != '[')) {
    value = json::array();
    std::stringstream items(text);
    std::string item;
    while (std::getline(items, item, ',')) value.push_back(parse_scalar(item));
  } else {
    value = parse_scalar(text);
  }
  (*node)[segs.back()] = std::move(value);
}

namespace {

template <typename T> T get_at(const json &cfg, const json::json_pointer &ptr) {
  if (!cfg.contains(ptr)) throw ConfigError("missing config key " + ptr.to_string());
  try {
    return cfg.at(ptr).get<T>();
  } catch (const json::exception &) {
    throw ConfigError("config key " + ptr.to_string() + " has the wrong type");
  }
}

void require(bool ok, const std::string &what) {
  if (!ok) throw ConfigError(what);
}

void require_range(const json &cfg, const char *ptr, int min_value) {
  const auto r = get_at<std::vector<int>>(cfg, json::json_pointer(ptr));
  require(r.size() == 2 && r[0] >= min_value && r[0] <= r[1],
          std::string(ptr) + " must be [lo, hi] with " + std::to_string(min_value) + " <= lo <= hi");
}

} // namespace

void validate_config(const json &cfg) {
  const Int3 world = world_dims_of(cfg);
  // Degenerate axes would make pose normalization undefined.
  require(world.x >= 2 && world.y >= 2 && world.z >= 2, "world.dims must be >= 2 on every axis");
  const int size = get_at<int>(cfg, json::json_pointer("/image/size"));
  require(size >= 16 && size % 16 == 0, "image.size must be a positive multiple of 16");
  camera_of(cfg);
  const Int3 box = component_box_of(cfg);
  require(box.x >= 1 && box.y >= 1 && box.z >= 1, "component_box must be positive");

  require_range(cfg, "/generator/steps", 1);
  require_range(cfg, "/generator/components_per_step", 1);
  require_range(cfg, "/generator/draws_per_step", 1);
  require(get_at<int>(cfg, json::json_pointer("/generator/manuals")) >= 1,
          "generator.manuals must be >= 1");
  require(get_at<int>(cfg, json::json_pointer("/generator/max_retries")) >= 1,
          "generator.max_retries must be >= 1");
  const double region = get_at<double>(cfg, json::json_pointer("/generator/placement_region"));
  require(region > 0.0 && region <= 1.0, "generator.placement_region must be in (0, 1]");
  require(!get_at<std::vector<std::string>>(cfg, json::json_pointer("/generator/shapes")).empty(),
          "generator.shapes must not be empty");

  const auto p = get_at<std::vector<double>>(cfg, json::json_pointer("/error_model/p"));
  require(p.size() == 4, "error_model.p must have four entries");
  double sum = 0.0;
  for (double v : p) {
    require(v >= 0.0, "error_model.p entries must be non-negative");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "error_model.p must sum to 1");
  require(get_at<int>(cfg, json::json_pointer("/error_model/max_offset")) >= 1,
          "error_model.max_offset must be >= 1");

  const double setwise = get_at<double>(cfg, json::json_pointer("/split/setwise_fraction"));
  const double train = get_at<double>(cfg, json::json_pointer("/split/train_fraction"));
  require(setwise > 0.0 && setwise < 1.0, "split.setwise_fraction must be in (0, 1)");
  require(train > 0.0 && train < 1.0, "split.train_fraction must be in (0, 1)");

  const int c1 = get_at<int>(cfg, json::json_pointer("/model/c1"));
  const int c2 = get_at<int>(cfg, json::json_pointer("/model/c2"));
  const int c3 = get_at<int>(cfg, json::json_pointer("/model/c3"));
  require(c1 > 0 && c2 == 2 * c1, "model.c2 must equal 2 * model.c1");
  require(c3 > 0 && 2 * c3 == c2, "2 * model.c3 must equal model.c2");
  require(get_at<int>(cfg, json::json_pointer("/model/hourglass_depth")) >= 1,
          "model.hourglass_depth must be >= 1");
  require(get_at<int>(cfg, json::json_pointer("/model/decoder_layers")) >= 1,
          "model.decoder_layers must be >= 1");
  require(get_at<int>(cfg, json::json_pointer("/model/encoder_layers")) >= 0,
          "model.encoder_layers must be >= 0");
  const int heads = get_at<int>(cfg, json::json_pointer("/model/heads"));
  require(heads >= 1 && c2 % heads == 0, "model.heads must divide model.c2");

  require(get_at<double>(cfg, json::json_pointer("/train/lr")) > 0.0, "train.lr must be positive");
  require(get_at<double>(cfg, json::json_pointer("/train/weight_decay")) >= 0.0,
          "train.weight_decay must be non-negative");
  require(get_at<int>(cfg, json::json_pointer("/train/batch")) >= 1, "train.batch must be >= 1");
  require(get_at<int>(cfg, json::json_pointer("/train/grad_accumulation")) >= 1,
          "train.grad_accumulation must be >= 1");
  require(get_at<int>(cfg, json::json_pointer("/train/epochs")) >= 1, "train.epochs must be >= 1");
  for (const char *w : {"/train/alpha", "/train/beta", "/train/gamma"}) {
    require(get_at<double>(cfg, json::json_pointer(w)) >= 0.0,
            std::string(w) + " must be non-negative");
  }
  const auto replace = get_at<std::string>(cfg, json::json_pointer("/eval/replace"));
  require(replace == "selective" || replace == "full", "eval.replace must be selective or full");
}

std::string fnv1a_hex(const json &j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string interface_hash(const json &cfg) {
  json key;
  key["world"] = cfg.at("world");
  key["image"] = cfg.at("image");
  key["component_box"] = cfg.at("component_box");
  return fnv1a_hex(key);
}

Int3 world_dims_of(const json &cfg) {
  try {
    return int3_from_json(cfg.at("world").at("dims"));
  } catch (const std::exception &e) {
    throw ConfigError(std::string("world.dims: ") + e.what());
  }
}

CameraConfig camera_of(const json &cfg) {
  CameraConfig cam;
  try {
    const auto &img = cfg.at("image");
    cam.image_size = img.at("size").get<int>();
    const auto dir = img.at("view_dir").get<std::vector<double>>();
    if (dir.size() != 3) throw ConfigError("image.view_dir must have three entries");
    cam.view_dir = {dir[0], dir[1], dir[2]};
    cam.margin = img.at("margin").get<double>();
  } catch (const json::exception &e) {
    throw ConfigError(std::string("image: ") + e.what());
  }
  if (cam.margin < 0.0 || cam.margin >= 0.5) throw ConfigError("image.margin must be in [0, 0.5)");
  for (double v : cam.view_dir) {
    if (v == 0.0) throw ConfigError("image.view_dir must be oblique to every axis");
  }
  return cam;
}

Int3 component_box_of(const json &cfg) {
  try {
    return int3_from_json(cfg.at("component_box"));
  } catch (const std::exception &e) {
    throw ConfigError(std::string("component_box: ") + e.what());
  }
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

} // namespace scanet
