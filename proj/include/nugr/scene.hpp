#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nugr/error.hpp"
#include "nugr/geometry.hpp"

namespace nugr {

using Json = nlohmann::json;

enum class Category {
  Car,
  Truck,
  Bus,
  Trailer,
  ConstructionVehicle,
  Pedestrian,
  Motorcycle,
  Bicycle,
  Barrier,
  TrafficCone,
};

inline constexpr std::array<std::string_view, 10> kCategoryNames = {
    "car",        "truck",   "bus",     "trailer", "construction_vehicle",
    "pedestrian", "motorcycle", "bicycle", "barrier", "traffic_cone"};

inline constexpr std::array<std::string_view, 10> kColorPalette = {
    "white", "black", "silver", "gray",   "red",
    "blue",  "green", "yellow", "orange", "brown"};

inline std::string_view to_string(Category c) {
  return kCategoryNames[static_cast<std::size_t>(c)];
}

inline std::optional<Category> parse_category(std::string_view s) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
    if (kCategoryNames[i] == s) return static_cast<Category>(i);
  }
  return std::nullopt;
}

inline bool is_palette_color(std::string_view s) {
  return std::find(kColorPalette.begin(), kColorPalette.end(), s) !=
         kColorPalette.end();
}

struct EgoPose {
  Vec3 translation{0.0, 0.0, 0.0};
  double yaw = 0.0;  // radians, (-pi, pi]

  bool operator==(const EgoPose&) const = default;
};

struct InstanceAnnotation {
  std::string instance_id;
  Category category = Category::Car;
  Vec3 center{0.0, 0.0, 0.0};
  Vec3 size_wlh{1.0, 1.0, 1.0};
  double yaw = 0.0;
  std::optional<std::string> color;

  bool operator==(const InstanceAnnotation&) const = default;
};

struct SceneFrame {
  std::string frame_id;
  std::int64_t timestamp_us = 0;
  EgoPose ego_pose;
  std::vector<InstanceAnnotation> instances;

  const InstanceAnnotation* find(std::string_view instance_id) const {
    for (const auto& inst : instances) {
      if (inst.instance_id == instance_id) return &inst;
    }
    return nullptr;
  }

  bool operator==(const SceneFrame&) const = default;
};

struct Scene {
  std::string scene_id;
  std::vector<SceneFrame> frames;

  bool operator==(const Scene&) const = default;
};

// Global -> ego frame: subtract the ego translation, then rotate by -yaw.
// Ego convention is x forward, y left, z up.
inline Vec3 to_ego_frame(const EgoPose& pose, const Vec3& point) {
  const double dx = point[0] - pose.translation[0];
  const double dy = point[1] - pose.translation[1];
  const double dz = point[2] - pose.translation[2];
  const double c = std::cos(pose.yaw);
  const double s = std::sin(pose.yaw);
  return {c * dx + s * dy, -s * dx + c * dy, dz};
}

// ---------------------------------------------------------------------------
// Validation

inline void validate(const Scene& scene) {
  if (scene.frames.empty()) {
    throw ValidationError("scene has no frames", "frames");
  }
  std::set<std::string> frame_ids;
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    const SceneFrame& frame = scene.frames[f];
    const std::string fpath = "frames[" + std::to_string(f) + "]";
    if (!frame_ids.insert(frame.frame_id).second) {
      throw ValidationError("duplicate frame_id '" + frame.frame_id + "'",
                            fpath + ".frame_id");
    }
    if (f > 0 && frame.timestamp_us <= scene.frames[f - 1].timestamp_us) {
      throw ValidationError("timestamps must be strictly increasing",
                            fpath + ".timestamp_us");
    }
    if (!all_finite(frame.ego_pose.translation)) {
      throw ValidationError("non-finite translation",
                            fpath + ".ego_pose.translation");
    }
    const double yaw = frame.ego_pose.yaw;
    if (!std::isfinite(yaw) || yaw <= -std::numbers::pi ||
        yaw > std::numbers::pi) {
      throw ValidationError("yaw must lie in (-pi, pi]",
                            fpath + ".ego_pose.yaw_rad");
    }
    std::set<std::string> instance_ids;
    for (std::size_t i = 0; i < frame.instances.size(); ++i) {
      const InstanceAnnotation& inst = frame.instances[i];
      const std::string ipath = fpath + ".instances[" + std::to_string(i) + "]";
      if (!instance_ids.insert(inst.instance_id).second) {
        throw ValidationError("duplicate instance_id '" + inst.instance_id + "'",
                              ipath + ".instance_id");
      }
      if (!all_finite(inst.center)) {
        throw ValidationError("non-finite center", ipath + ".center");
      }
      for (const double s : inst.size_wlh) {
        if (!(s > 0.0) || !std::isfinite(s)) {
          throw ValidationError("size components must be positive",
                                ipath + ".size_wlh");
        }
      }
      if (!std::isfinite(inst.yaw)) {
        throw ValidationError("non-finite yaw", ipath + ".yaw_rad");
      }
      if (inst.color && !is_palette_color(*inst.color)) {
        throw ValidationError("color '" + *inst.color + "' not in palette",
                              ipath + ".color");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

inline const Json& require(const Json& obj, const char* key,
                           const std::string& path) {
  if (!obj.is_object()) throw ParseError("expected object", path);
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(std::string("missing field '") + key + "'", path);
  }
  return *it;
}

inline std::string get_string(const Json& obj, const char* key,
                              const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_string()) {
    throw ParseError("expected string", path + "." + key);
  }
  return v.get<std::string>();
}

inline double get_number(const Json& obj, const char* key,
                         const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_number()) {
    throw ParseError("expected number", path + "." + key);
  }
  return v.get<double>();
}

template <std::size_t N>
std::array<double, N> get_vec(const Json& obj, const char* key,
                              const std::string& path) {
  const Json& v = require(obj, key, path);
  const std::string vpath = path + "." + key;
  if (!v.is_array() || v.size() != N) {
    throw ParseError("expected array of " + std::to_string(N) + " numbers",
                     vpath);
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number()) {
      throw ParseError("expected number", vpath + "[" + std::to_string(i) + "]");
    }
    out[i] = v[i].get<double>();
  }
  return out;
}

inline const Json& get_array(const Json& obj, const char* key,
                             const std::string& path) {
  const Json& v = require(obj, key, path);
  if (!v.is_array()) throw ParseError("expected array", path + "." + key);
  return v;
}

inline std::string join_path(const std::string& base, const std::string& leaf) {
  return base.empty() ? leaf : base + "." + leaf;
}

}  // namespace detail

inline Json to_json(const Scene& scene) {
  Json frames = Json::array();
  for (const SceneFrame& frame : scene.frames) {
    Json instances = Json::array();
    for (const InstanceAnnotation& inst : frame.instances) {
      instances.push_back(Json{
          {"instance_id", inst.instance_id},
          {"category", std::string(to_string(inst.category))},
          {"center", inst.center},
          {"size_wlh", inst.size_wlh},
          {"yaw_rad", inst.yaw},
          {"color", inst.color ? Json(*inst.color) : Json(nullptr)},
      });
    }
    frames.push_back(Json{
        {"frame_id", frame.frame_id},
        {"timestamp_us", frame.timestamp_us},
        {"ego_pose",
         Json{{"translation", frame.ego_pose.translation},
              {"yaw_rad", frame.ego_pose.yaw}}},
        {"instances", std::move(instances)},
    });
  }
  return Json{{"scene_id", scene.scene_id}, {"frames", std::move(frames)}};
}

// Builds and validates a Scene. Throws ParseError on structural problems and
// ValidationError on invariant violations; never repairs input.
inline Scene scene_from_json(const Json& root) {
  using namespace detail;
  Scene scene;
  scene.scene_id = get_string(root, "scene_id", "$");
  const Json& frames = get_array(root, "frames", "$");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const std::string fpath = "frames[" + std::to_string(f) + "]";
    const Json& jf = frames[f];
    SceneFrame frame;
    frame.frame_id = get_string(jf, "frame_id", fpath);
    const Json& ts = require(jf, "timestamp_us", fpath);
    if (!ts.is_number_integer()) {
      throw ParseError("expected integer", fpath + ".timestamp_us");
    }
    frame.timestamp_us = ts.get<std::int64_t>();
    const Json& pose = require(jf, "ego_pose", fpath);
    frame.ego_pose.translation =
        get_vec<3>(pose, "translation", fpath + ".ego_pose");
    frame.ego_pose.yaw = get_number(pose, "yaw_rad", fpath + ".ego_pose");

    const Json& instances = get_array(jf, "instances", fpath);
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const std::string ipath = fpath + ".instances[" + std::to_string(i) + "]";
      const Json& ji = instances[i];
      InstanceAnnotation inst;
      inst.instance_id = get_string(ji, "instance_id", ipath);
      const std::string cat = get_string(ji, "category", ipath);
      const auto parsed = parse_category(cat);
      if (!parsed) {
        throw ValidationError("unknown category '" + cat + "'",
                              ipath + ".category");
      }
      inst.category = *parsed;
      inst.center = get_vec<3>(ji, "center", ipath);
      inst.size_wlh = get_vec<3>(ji, "size_wlh", ipath);
      inst.yaw = get_number(ji, "yaw_rad", ipath);
      const Json& color = require(ji, "color", ipath);
      if (color.is_string()) {
        inst.color = color.get<std::string>();
      } else if (!color.is_null()) {
        throw ParseError("expected string or null", ipath + ".color");
      }
      frame.instances.push_back(std::move(inst));
    }
    scene.frames.push_back(std::move(frame));
  }
  validate(scene);
  return scene;
}

inline Scene parse_scene(std::string_view text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(e.what(), "$");
  }
  return scene_from_json(root);
}

inline Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scene file", path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_scene(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(e.message(), path.string() + ":" + e.where());
  } catch (const ValidationError& e) {
    throw ValidationError(e.message(), path.string() + ":" + e.where());
  }
}

// All *.json files in `dir`, loaded in file-name order.
inline std::vector<Scene> load_scene_dir(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw IoError("not a directory", dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<Scene> scenes;
  std::set<std::string> ids;
  for (const auto& file : files) {
    scenes.push_back(load_scene(file));
    if (!ids.insert(scenes.back().scene_id).second) {
      throw ValidationError("duplicate scene_id '" + scenes.back().scene_id + "'",
                            file.string());
    }
  }
  return scenes;
}

}  // namespace nugr
