#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nugr/attributes.hpp"
#include "nugr/error.hpp"
#include "nugr/parallel.hpp"
#include "nugr/scene.hpp"

namespace nugr {

// Fixed attribute order; it defines template ids and canonical value strings.
enum class Attribute : std::uint8_t { Category = 0, Appearance = 1, Movement = 2, Relationship = 3 };

inline constexpr std::array<Attribute, 4> kAllAttributes = {
    Attribute::Category, Attribute::Appearance, Attribute::Movement,
    Attribute::Relationship};

inline std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::Category: return "category";
    case Attribute::Appearance: return "appearance";
    case Attribute::Movement: return "movement";
    case Attribute::Relationship: return "relationship";
  }
  return "category";
}

inline std::optional<Attribute> parse_attribute(std::string_view s) {
  for (const Attribute a : kAllAttributes) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

using AttributeValues = std::map<Attribute, std::string>;

struct Template {
  int template_id = 0;
  std::vector<Attribute> attributes;  // in fixed attribute order
  int level = 0;

  bool uses(Attribute a) const {
    return std::find(attributes.begin(), attributes.end(), a) != attributes.end();
  }
};

// All 15 nonempty attribute subsets: by size, then lexicographically over the
// fixed attribute order.
inline std::vector<Template> enumerate_templates() {
  std::vector<std::vector<Attribute>> subsets;
  for (unsigned mask = 1; mask < 16; ++mask) {
    std::vector<Attribute> s;
    for (const Attribute a : kAllAttributes) {
      if (mask & (1u << static_cast<unsigned>(a))) s.push_back(a);
    }
    subsets.push_back(std::move(s));
  }
  std::sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a < b;
  });
  std::vector<Template> out;
  for (std::size_t i = 0; i < subsets.size(); ++i) {
    Template t;
    t.template_id = static_cast<int>(i);
    t.level = static_cast<int>(subsets[i].size());
    t.attributes = std::move(subsets[i]);
    out.push_back(std::move(t));
  }
  return out;
}

inline std::string category_phrase(Category c, bool plural) {
  static constexpr std::array<std::string_view, 10> kSingular = {
      "car",        "truck",      "bus",     "trailer", "construction vehicle",
      "pedestrian", "motorcycle", "bicycle", "barrier", "traffic cone"};
  static constexpr std::array<std::string_view, 10> kPlural = {
      "cars",        "trucks",      "buses",    "trailers", "construction vehicles",
      "pedestrians", "motorcycles", "bicycles", "barriers", "traffic cones"};
  const auto i = static_cast<std::size_t>(c);
  return std::string(plural ? kPlural[i] : kSingular[i]);
}

namespace detail {

inline const std::string& value_of(const AttributeValues& values, Attribute a) {
  auto it = values.find(a);
  if (it == values.end()) {
    throw MissingValue("no value for attribute '" + std::string(to_string(a)) + "'");
  }
  return it->second;
}

inline RelationshipSector parse_sector(const std::string& s) {
  for (const auto sec :
       {RelationshipSector::Front, RelationshipSector::FrontLeft,
        RelationshipSector::FrontRight, RelationshipSector::Back,
        RelationshipSector::BackLeft, RelationshipSector::BackRight}) {
    if (to_string(sec) == s) return sec;
  }
  throw ValidationError("unknown relationship value '" + s + "'");
}

inline Category parse_category_value(const std::string& s) {
  const auto c = parse_category(s);
  if (!c) throw ValidationError("unknown category value '" + s + "'");
  return *c;
}

// Joins non-empty words with single spaces.
inline std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (w.empty()) continue;
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace detail

// "Please detect all the {movement} {color} {category|objects}
//  {in the {sector} of the ego vehicle}."
inline std::string render_text(const Template& tmpl, const AttributeValues& values) {
  std::vector<std::string> words = {"Please", "detect", "all", "the"};
  if (tmpl.uses(Attribute::Movement)) words.push_back(detail::value_of(values, Attribute::Movement));
  if (tmpl.uses(Attribute::Appearance)) words.push_back(detail::value_of(values, Attribute::Appearance));
  if (tmpl.uses(Attribute::Category)) {
    words.push_back(category_phrase(
        detail::parse_category_value(detail::value_of(values, Attribute::Category)), true));
  } else {
    words.push_back("objects");
  }
  if (tmpl.uses(Attribute::Relationship)) {
    const auto sector =
        detail::parse_sector(detail::value_of(values, Attribute::Relationship));
    words.push_back("in the " + sector_phrase(sector) + " of the ego vehicle");
  }
  return detail::join_words(words) + ".";
}

// The value an instance carries for an attribute, or nullopt if it lacks it.
inline std::optional<std::string> attribute_value(const AttributeSet& a, Attribute attr) {
  switch (attr) {
    case Attribute::Category: return std::string(to_string(a.category));
    case Attribute::Appearance: return a.appearance;
    case Attribute::Movement:
      if (a.movement == MovementState::Unknown) return std::nullopt;
      return std::string(to_string(a.movement));
    case Attribute::Relationship: return std::string(to_string(a.relationship));
  }
  return std::nullopt;
}

// "category=car;movement=moving" in fixed attribute order.
inline std::string canonical_value_string(const AttributeValues& values) {
  std::string out;
  for (const auto& [attr, value] : values) {
    if (!out.empty()) out += ';';
    out += to_string(attr);
    out += '=';
    out += value;
  }
  return out;
}

struct GtBox {
  std::string instance_id;
  Vec3 center{0.0, 0.0, 0.0};
  Vec3 size_wlh{1.0, 1.0, 1.0};
  double yaw = 0.0;
  Vec2 velocity_xy{0.0, 0.0};

  bool operator==(const GtBox&) const = default;
};

struct PromptRecord {
  std::string prompt_id;
  std::string scene_id;
  std::string frame_id;
  int template_id = 0;
  int level = 0;
  AttributeValues attribute_values;
  std::string text;
  std::vector<GtBox> gt;

  bool operator==(const PromptRecord&) const = default;
};

inline std::string make_prompt_id(const std::string& scene_id, const std::string& frame_id,
                                  int template_id, const AttributeValues& values) {
  return scene_id + "/" + frame_id + "/" + std::to_string(template_id) + "/" +
         canonical_value_string(values);
}

using LevelSet = std::set<int>;

inline const LevelSet& all_levels() {
  static const LevelSet levels = {1, 2, 3, 4};
  return levels;
}

// One record per (template, distinct value tuple) realized by at least one
// instance. Instances lacking an attribute the template needs are skipped
// for that template only. Sorted by (template_id, canonical value string).
inline std::vector<PromptRecord> generate_frame_prompts(
    const Scene& scene, std::size_t frame_index,
    const std::map<std::string, AttributeSet>& annotations, const LevelSet& levels) {
  const SceneFrame& frame = scene.frames.at(frame_index);
  std::vector<PromptRecord> out;
  for (const Template& tmpl : enumerate_templates()) {
    if (!levels.contains(tmpl.level)) continue;
    std::map<std::string, PromptRecord> groups;
    for (const InstanceAnnotation& inst : frame.instances) {
      const auto it = annotations.find(inst.instance_id);
      if (it == annotations.end()) {
        throw InstanceNotFound("no annotation for '" + inst.instance_id + "'");
      }
      const AttributeSet& attrs = it->second;
      AttributeValues values;
      bool complete = true;
      for (const Attribute a : tmpl.attributes) {
        auto v = attribute_value(attrs, a);
        if (!v) {
          complete = false;
          break;
        }
        values.emplace(a, std::move(*v));
      }
      if (!complete) continue;
      const std::string key = canonical_value_string(values);
      auto [slot, fresh] = groups.try_emplace(key);
      PromptRecord& rec = slot->second;
      if (fresh) {
        rec.scene_id = scene.scene_id;
        rec.frame_id = frame.frame_id;
        rec.template_id = tmpl.template_id;
        rec.level = tmpl.level;
        rec.prompt_id = make_prompt_id(scene.scene_id, frame.frame_id, tmpl.template_id, values);
        rec.text = render_text(tmpl, values);
        rec.attribute_values = std::move(values);
      }
      rec.gt.push_back(GtBox{inst.instance_id, inst.center, inst.size_wlh, inst.yaw,
                             attrs.velocity_xy});
    }
    for (auto& [key, rec] : groups) out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PromptRecord JSONL

inline Json to_json(const GtBox& box) {
  return Json{{"instance_id", box.instance_id},
              {"center", box.center},
              {"size_wlh", box.size_wlh},
              {"yaw_rad", box.yaw},
              {"velocity_xy", box.velocity_xy}};
}

inline Json to_json(const PromptRecord& rec) {
  Json values = Json::object();
  for (const auto& [attr, value] : rec.attribute_values) {
    values[std::string(to_string(attr))] = value;
  }
  Json gt = Json::array();
  for (const auto& box : rec.gt) gt.push_back(to_json(box));
  return Json{{"prompt_id", rec.prompt_id},
              {"scene_id", rec.scene_id},
              {"frame_id", rec.frame_id},
              {"template_id", rec.template_id},
              {"level", rec.level},
              {"attribute_values", std::move(values)},
              {"text", rec.text},
              {"gt", std::move(gt)}};
}

inline std::string to_jsonl_line(const PromptRecord& rec) { return to_json(rec).dump() + "\n"; }

inline PromptRecord prompt_record_from_json(const Json& j, const std::string& where) {
  using namespace detail;
  PromptRecord rec;
  rec.prompt_id = get_string(j, "prompt_id", where);
  rec.scene_id = get_string(j, "scene_id", where);
  rec.frame_id = get_string(j, "frame_id", where);
  const Json& tid = require(j, "template_id", where);
  const Json& lvl = require(j, "level", where);
  if (!tid.is_number_integer() || !lvl.is_number_integer()) {
    throw ParseError("template_id and level must be integers", where);
  }
  rec.template_id = tid.get<int>();
  rec.level = lvl.get<int>();
  if (rec.template_id < 0 || rec.template_id > 14 || rec.level < 1 || rec.level > 4) {
    throw ParseError("template_id or level out of range", where);
  }
  const Json& values = require(j, "attribute_values", where);
  if (!values.is_object()) throw ParseError("attribute_values must be an object", where);
  for (const auto& [key, value] : values.items()) {
    const auto attr = parse_attribute(key);
    if (!attr || !value.is_string()) {
      throw ParseError("bad attribute value '" + key + "'", where + ".attribute_values");
    }
    rec.attribute_values.emplace(*attr, value.get<std::string>());
  }
  rec.text = get_string(j, "text", where);
  const Json& gt = get_array(j, "gt", where);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::string gpath = where + ".gt[" + std::to_string(i) + "]";
    GtBox box;
    box.instance_id = get_string(gt[i], "instance_id", gpath);
    box.center = get_vec<3>(gt[i], "center", gpath);
    box.size_wlh = get_vec<3>(gt[i], "size_wlh", gpath);
    box.yaw = get_number(gt[i], "yaw_rad", gpath);
    box.velocity_xy = get_vec<2>(gt[i], "velocity_xy", gpath);
    rec.gt.push_back(std::move(box));
  }
  return rec;
}

// Calls fn(json, line_number) for each non-blank line; throws ParseError
// naming the line on malformed JSON.
template <typename Fn>
void for_each_jsonl(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(e.what(), source + ":" + std::to_string(line_no));
    }
    fn(j, source + ":" + std::to_string(line_no));
  }
}

inline std::vector<PromptRecord> read_prompt_records(std::istream& in,
                                                     const std::string& source) {
  std::vector<PromptRecord> out;
  for_each_jsonl(in, source, [&](const Json& j, const std::string& where) {
    out.push_back(prompt_record_from_json(j, where));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Dataset generation

// All records for all scenes in canonical order: (scene_id, frame_id,
// template_id, value string). Frames are processed in parallel.
inline std::vector<PromptRecord> generate_records(const std::vector<Scene>& scenes,
                                                  const LevelSet& levels) {
  struct FrameRef {
    const Scene* scene;
    std::size_t frame_index;
  };
  std::vector<FrameRef> frames;
  for (const Scene& s : scenes) {
    for (std::size_t f = 0; f < s.frames.size(); ++f) frames.push_back({&s, f});
  }
  std::sort(frames.begin(), frames.end(), [](const FrameRef& a, const FrameRef& b) {
    const auto& fa = a.scene->frames[a.frame_index];
    const auto& fb = b.scene->frames[b.frame_index];
    return std::tie(a.scene->scene_id, fa.frame_id) < std::tie(b.scene->scene_id, fb.frame_id);
  });
  std::vector<std::vector<PromptRecord>> per_frame(frames.size());
  parallel_for(frames.size(), [&](std::size_t i) {
    const FrameRef& ref = frames[i];
    per_frame[i] = generate_frame_prompts(*ref.scene, ref.frame_index,
                                          annotate_frame(*ref.scene, ref.frame_index), levels);
  });
  std::vector<PromptRecord> out;
  for (auto& chunk : per_frame) {
    std::move(chunk.begin(), chunk.end(), std::back_inserter(out));
  }
  return out;
}

inline std::size_t generate_dataset(const std::vector<Scene>& scenes, const LevelSet& levels,
                                    std::ostream& out) {
  const auto records = generate_records(scenes, levels);
  for (const auto& rec : records) out << to_jsonl_line(rec);
  if (!out) throw IoError("write failed");
  return records.size();
}

// ---------------------------------------------------------------------------
// Statistics

struct DatasetStats {
  std::size_t prompt_count = 0;
  std::array<std::size_t, 4> per_level{};  // index = level - 1
  std::size_t frame_count = 0;
  double prompts_per_frame = 0.0;
  std::map<std::size_t, std::size_t> objects_per_prompt;  // gt size -> records
  double objects_per_prompt_mean = 0.0;
  std::vector<std::pair<std::string, std::size_t>> top_words;  // at most 50
};

inline std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      cur += static_cast<char>(std::tolower(uc));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline DatasetStats compute_stats(const std::vector<PromptRecord>& records,
                                  std::size_t frame_count) {
  DatasetStats st;
  st.prompt_count = records.size();
  st.frame_count = frame_count;
  std::map<std::string, std::size_t> words;
  std::size_t objects = 0;
  for (const auto& rec : records) {
    if (rec.level >= 1 && rec.level <= 4) ++st.per_level[rec.level - 1];
    ++st.objects_per_prompt[rec.gt.size()];
    objects += rec.gt.size();
    for (auto& w : tokenize_words(rec.text)) ++words[w];
  }
  if (frame_count > 0) {
    st.prompts_per_frame = static_cast<double>(records.size()) / static_cast<double>(frame_count);
  }
  if (!records.empty()) {
    st.objects_per_prompt_mean = static_cast<double>(objects) / static_cast<double>(records.size());
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(words.begin(), words.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > 50) ranked.resize(50);
  st.top_words = std::move(ranked);
  return st;
}

inline Json to_json(const DatasetStats& st) {
  Json per_level = Json::object();
  Json proportion = Json::object();
  for (int l = 1; l <= 4; ++l) {
    const auto n = st.per_level[l - 1];
    per_level[std::to_string(l)] = n;
    proportion[std::to_string(l)] =
        st.prompt_count == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(st.prompt_count);
  }
  Json hist = Json::object();
  for (const auto& [k, v] : st.objects_per_prompt) hist[std::to_string(k)] = v;
  Json words = Json::array();
  for (const auto& [w, n] : st.top_words) words.push_back(Json{{"word", w}, {"count", n}});
  return Json{{"prompt_count", st.prompt_count},
              {"per_level", std::move(per_level)},
              {"level_proportion", std::move(proportion)},
              {"frame_count", st.frame_count},
              {"prompts_per_frame", st.prompts_per_frame},
              {"objects_per_prompt",
               Json{{"histogram", std::move(hist)}, {"mean", st.objects_per_prompt_mean}}},
              {"top_words", std::move(words)}};
}

}  // namespace nugr
