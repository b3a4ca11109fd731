// tap: command-line front end for the tracking pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tap/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tap;
using namespace tap::pipeline;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

int exit_code_for(const Error& e) {
  if (e.is_internal()) return kInternal;
  if (e.code() == ErrorCode::InvalidConfig || e.code() == ErrorCode::InvalidArgument) return kUsage;
  return kData;
}

std::string flag_for_key(std::string_view key) {
  std::string name(key);
  if (name.rfind("synth.", 0) == 0) name = name.substr(6);
  for (auto& c : name) {
    if (c == '_' || c == '.') c = '-';
  }
  return "--" + name;
}

// Options common to every subcommand: a config file, a manifest to rerun,
// and one flag per config key.
struct Common {
  std::string config_path;
  std::string manifest_path;
  std::string out;
  std::map<std::string, std::string> flags;
};

void add_common(CLI::App* sub, Common& c, bool needs_out = true) {
  sub->add_option("--config", c.config_path, "flat key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--manifest", c.manifest_path, "rerun from a manifest; inputs must be unchanged")
      ->check(CLI::ExistingFile);
  auto* out = sub->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  for (auto key : config_keys()) {
    sub->add_option_function<std::string>(
           flag_for_key(key), [&c, key](const std::string& v) { c.flags[std::string(key)] = v; },
           "config key " + std::string(key))
        ->group("Config");
  }
}

struct Resolved {
  PipelineConfig config;
  std::map<std::string, std::string> inputs;
};

Resolved resolve(const Common& c, std::string_view command) {
  Resolved r;
  if (!c.manifest_path.empty()) {
    const auto m = in_stage("config", c.manifest_path, [&] { return parse_config(io::read_file(c.manifest_path)); });
    if (auto it = m.tool.find("command"); it != m.tool.end() && it->second != command) {
      throw Error(ErrorCode::InvalidArgument,
                  "manifest was written by '" + it->second + "', not '" + std::string(command) + "'");
    }
    in_stage("config", c.manifest_path, [&] {
      verify_digests(m);
      return 0;
    });
    r.config = m.config;
    r.inputs = m.inputs;
  }
  if (!c.config_path.empty()) {
    r.config = in_stage("config", c.config_path,
                        [&] { return parse_config(io::read_file(c.config_path), r.config).config; });
  }
  in_stage("config", {}, [&] {
    for (const auto& [k, v] : c.flags) set_key(r.config, k, v);
    r.config.validate();
    return 0;
  });
  return r;
}

// An explicit path flag wins over the manifest's recorded input.
std::optional<fs::path> pick(const std::string& flag, const Resolved& r, const std::string& name) {
  if (!flag.empty()) return fs::path(flag);
  if (auto it = r.inputs.find(name); it != r.inputs.end()) return fs::path(it->second);
  return std::nullopt;
}

fs::path need(const std::optional<fs::path>& p, std::string_view what) {
  if (!p) throw Error(ErrorCode::InvalidArgument, "missing required input " + std::string(what));
  return *p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tap: depth-gated multi-object tracking and evaluation"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);

  Common synth_c, filter_c, track_c, eval_c, relight_c, labels_c;

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic sequence");
  add_common(synth_cmd, synth_c);

  std::string det, emb, depth_dir, seqinfo, motion;
  auto* filter_cmd = app.add_subcommand("filter-depth", "drop background detections by depth");
  add_common(filter_cmd, filter_c);
  filter_cmd->add_option("--det", det, "MOT detection file");
  filter_cmd->add_option("--emb", emb, "embedding file aligned with --det");
  filter_cmd->add_option("--depth", depth_dir, "directory of NNNNNN.pgm depth maps");
  filter_cmd->add_option("--seqinfo", seqinfo, "sequence info file");

  auto* track_cmd = app.add_subcommand("track", "link detections into tracks");
  add_common(track_cmd, track_c);
  track_cmd->add_option("--det", det, "MOT detection file");
  track_cmd->add_option("--emb", emb, "embedding file aligned with --det");
  track_cmd->add_option("--depth", depth_dir, "depth maps; enables depth gating");
  track_cmd->add_option("--seqinfo", seqinfo, "sequence info file");
  track_cmd->add_option("--camera-motion", motion, "per-frame camera motion file");

  std::vector<std::string> gts, preds, seqinfos;
  auto* eval_cmd = app.add_subcommand("evaluate", "score tracks against ground truth");
  add_common(eval_cmd, eval_c, false);
  eval_cmd->add_option("--gt", gts, "ground-truth MOT file (repeatable)");
  eval_cmd->add_option("--pred", preds, "tracker MOT file, paired with --gt in order (repeatable)");
  eval_cmd->add_option("--seqinfo", seqinfos, "sequence info, paired with --gt in order (repeatable)");

  std::string image;
  auto* relight_cmd = app.add_subcommand("relight", "apply luminance-adaptive relighting");
  add_common(relight_cmd, relight_c);
  relight_cmd->add_option("--image", image, "8-bit PGM or PPM frame");

  std::string candidates, overrides;
  auto* labels_cmd = app.add_subcommand("labels", "export weak training labels");
  add_common(labels_cmd, labels_c);
  labels_cmd->add_option("--candidates", candidates, "MOT file whose conf column holds detector logits");
  labels_cmd->add_option("--seqinfo", seqinfo, "sequence info file");
  labels_cmd->add_option("--overrides", overrides, "corrected labels keyed by image id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (synth_cmd->parsed()) {
      const auto r = resolve(synth_c, "synth");
      run_synth(r.config, synth_c.out);
    } else if (filter_cmd->parsed()) {
      const auto r = resolve(filter_c, "filter-depth");
      DetectionInputs in;
      in.detections = need(pick(det, r, "det"), "--det");
      in.embeddings = pick(emb, r, "emb");
      in.depth_dir = need(pick(depth_dir, r, "depth"), "--depth");
      in.seqinfo = pick(seqinfo, r, "seqinfo");
      const auto s = run_filter_depth(r.config, in, filter_c.out);
      std::printf("input %zu retained %zu discarded %zu unsupported %zu\n", s.input, s.retained, s.discarded,
                  s.unsupported);
    } else if (track_cmd->parsed()) {
      const auto r = resolve(track_c, "track");
      DetectionInputs in;
      in.detections = need(pick(det, r, "det"), "--det");
      in.embeddings = pick(emb, r, "emb");
      in.depth_dir = pick(depth_dir, r, "depth");
      in.seqinfo = pick(seqinfo, r, "seqinfo");
      in.motion = pick(motion, r, "motion");
      const auto recs = run_track(r.config, in, track_c.out);
      std::printf("wrote %zu track records\n", recs.size());
    } else if (eval_cmd->parsed()) {
      const auto r = resolve(eval_c, "evaluate");
      std::vector<EvalInput> inputs;
      if (gts.empty() && preds.empty()) {
        for (std::size_t k = 0; r.inputs.count("gt" + std::to_string(k)); ++k) {
          EvalInput in{r.inputs.at("gt" + std::to_string(k)), need(pick("", r, "pred" + std::to_string(k)), "pred"),
                       pick("", r, "seqinfo" + std::to_string(k))};
          inputs.push_back(in);
        }
      } else {
        if (gts.size() != preds.size()) {
          throw Error(ErrorCode::InvalidArgument, "--gt and --pred must be given the same number of times");
        }
        if (!seqinfos.empty() && seqinfos.size() != gts.size()) {
          throw Error(ErrorCode::InvalidArgument, "--seqinfo must be given once per --gt or not at all");
        }
        for (std::size_t k = 0; k < gts.size(); ++k) {
          EvalInput in{gts[k], preds[k], std::nullopt};
          if (!seqinfos.empty()) in.seqinfo = seqinfos[k];
          inputs.push_back(in);
        }
      }
      const auto reports = run_evaluate(r.config, inputs, eval_c.out);
      std::cout << io::write_report(reports);
    } else if (relight_cmd->parsed()) {
      const auto r = resolve(relight_c, "relight");
      const auto s = run_relight(r.config, need(pick(image, r, "image"), "--image"), relight_c.out);
      std::printf("luminance %.3f alpha %.4f beta %.4f output %.3f\n", s.luminance, s.alpha, s.beta,
                  s.output_luminance);
    } else if (labels_cmd->parsed()) {
      const auto r = resolve(labels_c, "labels");
      LabelInputs in;
      in.candidates = need(pick(candidates, r, "candidates"), "--candidates");
      in.seqinfo = need(pick(seqinfo, r, "seqinfo"), "--seqinfo");
      in.overrides = pick(overrides, r, "overrides");
      const auto written = run_labels(r.config, in, labels_c.out);
      std::printf("wrote %zu label files\n", written.size());
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "tap: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tap: internal error: %s\n", e.what());
    return kInternal;
  }
  return kOk;
}
