#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nugr/demo.hpp"
#include "nugr/error.hpp"
#include "nugr/eval.hpp"
#include "nugr/hog.hpp"
#include "nugr/scene.hpp"

namespace nugr {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitInternal = 2;

// Writes to a sibling temp file and renames, so readers never observe a
// partially written output.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing", tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed", tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("rename failed: " + ec.message(), path.string());
  }
}

inline LevelSet parse_levels(std::string_view text) {
  LevelSet levels;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string_view part = text.substr(start, comma - start);
    int level = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), level);
    if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size() || level < 1 || level > 4) {
      throw ValidationError("levels must be a comma-separated subset of 1,2,3,4", "--levels");
    }
    levels.insert(level);
    start = comma + 1;
  }
  return levels;
}

struct GenerateOptions {
  std::filesystem::path scenes_dir;
  std::filesystem::path out;
  LevelSet levels = all_levels();
};

struct StatsOptions {
  std::filesystem::path prompts;
  std::filesystem::path out;
};

struct EvalOptions {
  std::filesystem::path gt;
  std::filesystem::path pred;
  std::filesystem::path out;
  EvalConfig config;
};

struct DemoOptions {
  std::filesystem::path scenes_dir;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
};

namespace detail {

// Maps exceptions to exit codes: library errors are input problems (1),
// anything else is internal (2).
template <typename Fn>
int run_guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

inline std::vector<Scene> load_scenes_nonempty(const std::filesystem::path& dir) {
  auto scenes = load_scene_dir(dir);
  if (scenes.empty()) throw ValidationError("no scenes found", dir.string());
  return scenes;
}

inline std::string pretty(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

inline int cmd_generate(const GenerateOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::run_guarded(err, [&] {
    const auto scenes = detail::load_scenes_nonempty(opt.scenes_dir);
    std::ostringstream buf;
    const std::size_t count = generate_dataset(scenes, opt.levels, buf);
    write_file_atomic(opt.out, buf.str());
    out << count << " prompts written to " << opt.out.string() << "\n";
    return kExitOk;
  });
}

inline int cmd_stats(const StatsOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::run_guarded(err, [&] {
    std::ifstream in(opt.prompts);
    if (!in) throw IoError("cannot open prompts file", opt.prompts.string());
    const auto records = read_prompt_records(in, opt.prompts.string());
    std::set<std::pair<std::string, std::string>> frames;
    for (const auto& r : records) frames.emplace(r.scene_id, r.frame_id);
    const DatasetStats st = compute_stats(records, frames.size());
    write_file_atomic(opt.out, detail::pretty(to_json(st)));
    out << st.prompt_count << " prompts over " << st.frame_count << " frames\n";
    return kExitOk;
  });
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::run_guarded(err, [&] {
    if (!(opt.config.conf_threshold > 0.0) || !(opt.config.dist_threshold > 0.0)) {
      throw ValidationError("thresholds must be positive");
    }
    const MetricsReport r = evaluate_files(opt.gt, opt.pred, opt.config);
    write_file_atomic(opt.out, detail::pretty(to_json(r)));
    char line[256];
    std::snprintf(line, sizeof(line), "P=%.4f R=%.4f mAP=%.4f NDS=%.4f\n", r.precision, r.recall,
                  r.map, r.nds);
    out << line;
    return kExitOk;
  });
}

// Writes prompts.jsonl, predictions.jsonl, traces.jsonl, losses.jsonl,
// losses.json, metrics.json and config.json into out_dir. Everything is
// computed before the first file is written.
inline int cmd_demo(const DemoOptions& opt, std::ostream& out, std::ostream& err) {
  std::string stage = "load";
  try {
    const auto scenes = detail::load_scenes_nonempty(opt.scenes_dir);
    stage = "pipeline";
    DemoConfig cfg;
    cfg.seed = opt.seed;
    cfg.fuser.seed = opt.seed;
    const DemoPipeline pipeline(cfg);
    const DemoResult result = pipeline.run(scenes);

    stage = "serialize";
    std::string prompts, preds, traces, losses;
    for (std::size_t i = 0; i < result.prompts.size(); ++i) {
      const auto& p = result.prompts[i];
      const auto& r = result.runs[i];
      prompts += to_jsonl_line(p);
      preds += prediction_line(p.prompt_id, r.predictions);
      Json t = to_json(r.trace, pipeline.vocabulary());
      t["prompt_id"] = p.prompt_id;
      traces += t.dump() + "\n";
      Json l = to_json(r.loss);
      l["prompt_id"] = p.prompt_id;
      losses += l.dump() + "\n";
    }
    Json config = to_json(cfg.fuser);
    config["num_queries"] = cfg.num_queries;
    config["query_dim"] = cfg.query_dim;
    config["hidden_dim"] = cfg.hidden_dim;

    stage = "write";
    std::filesystem::create_directories(opt.out_dir);
    write_file_atomic(opt.out_dir / "prompts.jsonl", prompts);
    write_file_atomic(opt.out_dir / "predictions.jsonl", preds);
    write_file_atomic(opt.out_dir / "traces.jsonl", traces);
    write_file_atomic(opt.out_dir / "losses.jsonl", losses);
    write_file_atomic(opt.out_dir / "losses.json", detail::pretty(to_json(result.mean_loss)));
    write_file_atomic(opt.out_dir / "metrics.json", detail::pretty(to_json(result.metrics)));
    write_file_atomic(opt.out_dir / "config.json", detail::pretty(config));
    char line[256];
    std::snprintf(line, sizeof(line), "%zu prompts, mAP=%.4f NDS=%.4f, loss=%.4f\n",
                  result.prompts.size(), result.metrics.map, result.metrics.nds,
                  result.mean_loss.total);
    out << line;
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error [" << stage << "]: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace nugr
