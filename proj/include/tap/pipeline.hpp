#pragma once

#include <cstdio>
#include <filesystem>
#include <future>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "tap/depth_filter.hpp"
#include "tap/error.hpp"
#include "tap/io.hpp"
#include "tap/kalman.hpp"
#include "tap/metrics.hpp"
#include "tap/relight.hpp"
#include "tap/synth.hpp"
#include "tap/tracker.hpp"
#include "tap/weak_labels.hpp"

namespace tap::pipeline {

inline constexpr std::string_view kToolName = "tap";
inline constexpr std::string_view kToolVersion = "1.0.0";

/// Every tunable of the end-to-end flow, with each owning module's default.
struct PipelineConfig {
  std::uint32_t tau_d = depth::kDefaultTauD;
  std::int64_t interval = 5;
  double label_tau = 0.35;
  relight::RelightCurves curves = relight::default_curves();
  TrackerConfig tracker;
  double iou_threshold = metrics::kDefaultIouThreshold;
  bool depth_filter = true;
  synth::ScenarioConfig synth;

  void validate() const {
    depth::DepthFilterConfig{tau_d};
    labels::LabelThreshold{label_tau};
    if (interval < 1) throw Error(ErrorCode::InvalidConfig, "interval must be >= 1");
    tracker.validate();
    if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
      throw Error(ErrorCode::InvalidConfig, "iou_threshold must lie in (0,1]");
    }
  }

  synth::ScenarioConfig scenario() const {
    synth::ScenarioConfig s = synth;
    s.tau_d = tau_d;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Flat "key = value" config text

namespace detail {

inline std::string format_curve(const relight::PiecewiseLinear& c) {
  std::string s;
  for (const auto& [l, f] : c.knots()) {
    if (!s.empty()) s += ',';
    s += io::format_shortest(l) + ':' + io::format_shortest(f);
  }
  return s;
}

inline relight::PiecewiseLinear parse_curve(std::string_view v) {
  std::vector<relight::PiecewiseLinear::Knot> knots;
  for (auto part : io::split(v, ',')) {
    const auto kv = io::split(part, ':');
    if (kv.size() != 2) throw Error(ErrorCode::InvalidConfig, "curve knot must be luminance:factor");
    knots.emplace_back(io::parse_double(kv[0]), io::parse_double(kv[1]));
  }
  return relight::PiecewiseLinear(std::move(knots));
}

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw Error(ErrorCode::InvalidConfig, "expected true or false, got '" + std::string(v) + "'");
}

inline std::string format_range(const synth::DepthRange& r) {
  return std::to_string(r.lo) + ":" + std::to_string(r.hi);
}

inline synth::DepthRange parse_range(std::string_view v) {
  const auto kv = io::split(v, ':');
  if (kv.size() != 2) throw Error(ErrorCode::InvalidConfig, "depth range must be lo:hi");
  return {io::parse_int<std::uint32_t>(kv[0]), io::parse_int<std::uint32_t>(kv[1])};
}

inline std::string_view motion_name(synth::MotionKind m) {
  switch (m) {
    case synth::MotionKind::Linear: return "linear";
    case synth::MotionKind::Sinusoidal: return "sinusoidal";
    case synth::MotionKind::Mixed: return "mixed";
  }
  return "linear";
}

inline synth::MotionKind parse_motion(std::string_view v) {
  if (v == "linear") return synth::MotionKind::Linear;
  if (v == "sinusoidal") return synth::MotionKind::Sinusoidal;
  if (v == "mixed") return synth::MotionKind::Mixed;
  throw Error(ErrorCode::InvalidConfig, "motion must be linear, sinusoidal or mixed");
}

// "first-last:occluder>occluded;..." with 0-based frames and object indices.
inline std::string format_occlusions(const std::vector<synth::OcclusionEvent>& events) {
  std::string s;
  for (const auto& e : events) {
    if (!s.empty()) s += ';';
    s += std::to_string(e.first_frame) + '-' + std::to_string(e.last_frame) + ':' +
         std::to_string(e.occluder) + '>' + std::to_string(e.occluded);
  }
  return s;
}

inline std::vector<synth::OcclusionEvent> parse_occlusions(std::string_view v) {
  std::vector<synth::OcclusionEvent> out;
  if (v.empty()) return out;
  for (auto part : io::split(v, ';')) {
    const auto span_objs = io::split(part, ':');
    if (span_objs.size() != 2) throw Error(ErrorCode::InvalidConfig, "occlusion must be first-last:a>b");
    const auto span = io::split(span_objs[0], '-');
    const auto objs = io::split(span_objs[1], '>');
    if (span.size() != 2 || objs.size() != 2) {
      throw Error(ErrorCode::InvalidConfig, "occlusion must be first-last:a>b");
    }
    out.push_back({io::parse_int<int>(span[0]), io::parse_int<int>(span[1]), io::parse_int<int>(objs[0]),
                   io::parse_int<int>(objs[1])});
  }
  return out;
}

using Setter = void (*)(PipelineConfig&, std::string_view);
using Getter = std::string (*)(const PipelineConfig&);

struct Key {
  std::string_view name;
  Getter get;
  Setter set;
};

#define TAP_NUM_KEY(NAME, FIELD, PARSE, FORMAT)                                              \
  Key {                                                                                     \
    NAME, [](const PipelineConfig& c) { return std::string(FORMAT(c.FIELD)); },             \
        [](PipelineConfig& c, std::string_view v) { c.FIELD = PARSE(v); }                   \
  }

inline std::string fmt_d(double v) { return io::format_shortest(v); }
template <typename T>
std::string fmt_i(T v) { return std::to_string(v); }
inline std::string fmt_b(bool v) { return v ? "true" : "false"; }
inline double parse_d(std::string_view v) { return io::parse_double(v); }
inline int parse_i(std::string_view v) { return io::parse_int<int>(v); }
inline std::int64_t parse_i64(std::string_view v) { return io::parse_int<std::int64_t>(v); }
inline std::uint32_t parse_u32(std::string_view v) { return io::parse_int<std::uint32_t>(v); }
inline std::uint64_t parse_u64(std::string_view v) { return io::parse_int<std::uint64_t>(v); }
inline std::uint16_t parse_u16(std::string_view v) { return io::parse_int<std::uint16_t>(v); }

inline const std::vector<Key>& keys() {
  static const std::vector<Key> k{
      TAP_NUM_KEY("tau_d", tau_d, parse_u32, fmt_i),
      TAP_NUM_KEY("interval", interval, parse_i64, fmt_i),
      TAP_NUM_KEY("label_tau", label_tau, parse_d, fmt_d),
      Key{"relight.alpha", [](const PipelineConfig& c) { return format_curve(c.curves.alpha); },
          [](PipelineConfig& c, std::string_view v) {
            c.curves = relight::RelightCurves(parse_curve(v), c.curves.beta);
          }},
      Key{"relight.beta", [](const PipelineConfig& c) { return format_curve(c.curves.beta); },
          [](PipelineConfig& c, std::string_view v) {
            c.curves = relight::RelightCurves(c.curves.alpha, parse_curve(v));
          }},
      TAP_NUM_KEY("high_conf_threshold", tracker.high_conf_threshold, parse_d, fmt_d),
      TAP_NUM_KEY("low_conf_threshold", tracker.low_conf_threshold, parse_d, fmt_d),
      TAP_NUM_KEY("iou_gate", tracker.iou_gate, parse_d, fmt_d),
      TAP_NUM_KEY("appearance_gate", tracker.appearance_gate, parse_d, fmt_d),
      TAP_NUM_KEY("lambda", tracker.fusion_lambda, parse_d, fmt_d),
      TAP_NUM_KEY("max_age", tracker.max_age, parse_i, fmt_i),
      TAP_NUM_KEY("min_hits", tracker.min_hits, parse_i, fmt_i),
      TAP_NUM_KEY("process_noise", tracker.process_noise, parse_d, fmt_d),
      TAP_NUM_KEY("measurement_noise", tracker.measurement_noise, parse_d, fmt_d),
      TAP_NUM_KEY("feature_momentum", tracker.feature_momentum, parse_d, fmt_d),
      TAP_NUM_KEY("iou_threshold", iou_threshold, parse_d, fmt_d),
      TAP_NUM_KEY("depth_filter", depth_filter, parse_bool, fmt_b),
      Key{"synth.sequence_id", [](const PipelineConfig& c) { return c.synth.sequence_id; },
          [](PipelineConfig& c, std::string_view v) { c.synth.sequence_id = std::string(v); }},
      TAP_NUM_KEY("synth.num_foreground", synth.num_foreground, parse_i, fmt_i),
      TAP_NUM_KEY("synth.num_background", synth.num_background, parse_i, fmt_i),
      TAP_NUM_KEY("synth.frames", synth.frame_count, parse_i, fmt_i),
      TAP_NUM_KEY("synth.width", synth.image_width, parse_i, fmt_i),
      TAP_NUM_KEY("synth.height", synth.image_height, parse_i, fmt_i),
      Key{"synth.motion", [](const PipelineConfig& c) { return std::string(motion_name(c.synth.motion)); },
          [](PipelineConfig& c, std::string_view v) { c.synth.motion = parse_motion(v); }},
      Key{"synth.occlusions", [](const PipelineConfig& c) { return format_occlusions(c.synth.occlusions); },
          [](PipelineConfig& c, std::string_view v) { c.synth.occlusions = parse_occlusions(v); }},
      TAP_NUM_KEY("synth.noise_sigma", synth.detection_noise_sigma, parse_d, fmt_d),
      TAP_NUM_KEY("synth.confidence_noise", synth.confidence_noise, parse_d, fmt_d),
      TAP_NUM_KEY("synth.base_confidence", synth.base_confidence, parse_d, fmt_d),
      TAP_NUM_KEY("synth.fp_rate", synth.false_positive_rate, parse_d, fmt_d),
      TAP_NUM_KEY("synth.miss_rate", synth.miss_rate, parse_d, fmt_d),
      Key{"synth.fg_depth", [](const PipelineConfig& c) { return format_range(c.synth.foreground_depth); },
          [](PipelineConfig& c, std::string_view v) { c.synth.foreground_depth = parse_range(v); }},
      Key{"synth.bg_depth", [](const PipelineConfig& c) { return format_range(c.synth.background_depth); },
          [](PipelineConfig& c, std::string_view v) { c.synth.background_depth = parse_range(v); }},
      TAP_NUM_KEY("synth.far_plane", synth.far_plane, parse_u16, fmt_i),
      TAP_NUM_KEY("synth.ablation", synth.ablation_mode, parse_bool, fmt_b),
      TAP_NUM_KEY("synth.embedding_dim", synth.embedding_dim, parse_i, fmt_i),
      TAP_NUM_KEY("synth.embedding_noise", synth.embedding_noise, parse_d, fmt_d),
      TAP_NUM_KEY("synth.min_size", synth.min_size, parse_d, fmt_d),
      TAP_NUM_KEY("synth.max_size", synth.max_size, parse_d, fmt_d),
      TAP_NUM_KEY("synth.max_speed", synth.max_speed, parse_d, fmt_d),
      TAP_NUM_KEY("synth.seed", synth.seed, parse_u64, fmt_i),
  };
  return k;
}

#undef TAP_NUM_KEY

}  // namespace detail

/// Applies one `key = value` setting.
inline void set_key(PipelineConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& k : detail::keys()) {
    if (k.name == key) {
      try {
        k.set(cfg, value);
      } catch (const Error& e) {
        throw Error(ErrorCode::InvalidConfig, std::string(key) + ": " + e.message());
      }
      return;
    }
  }
  throw Error(ErrorCode::InvalidConfig, "unknown key '" + std::string(key) + "'");
}

inline std::vector<std::string_view> config_keys() {
  std::vector<std::string_view> names;
  for (const auto& k : detail::keys()) names.push_back(k.name);
  return names;
}

inline std::string write_config(const PipelineConfig& cfg) {
  std::string s;
  for (const auto& k : detail::keys()) s += std::string(k.name) + " = " + k.get(cfg) + '\n';
  return s;
}

/// Parsed config or manifest. Manifest-only keys (tool.*, input.*,
/// digest.*) are collected rather than applied.
struct ConfigFile {
  PipelineConfig config;
  std::map<std::string, std::string> tool, inputs, digests;
};

inline ConfigFile parse_config(std::string_view text, PipelineConfig base = {}) {
  ConfigFile out{std::move(base), {}, {}, {}};
  const auto ls = io::lines(text);
  for (std::size_t n = 0; n < ls.size(); ++n) {
    std::string_view line = ls[n];
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::InvalidConfig, "expected key = value", n + 1);
    }
    const std::string key(io::trim(line.substr(0, eq)));
    const std::string value(io::trim(line.substr(eq + 1)));
    auto take = [&](std::string_view prefix, std::map<std::string, std::string>& into) {
      if (key.rfind(prefix, 0) != 0) return false;
      into[key.substr(prefix.size())] = value;
      return true;
    };
    if (take("tool.", out.tool) || take("input.", out.inputs) || take("digest.", out.digests)) continue;
    try {
      set_key(out.config, key, value);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidConfig, e.message(), n + 1);
    }
  }
  out.config.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Digests and manifests

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::InvariantViolation, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex.push_back(kHex[md[i] >> 4]);
    hex.push_back(kHex[md[i] & 0xF]);
  }
  return hex;
}

/// Files hash their bytes; directories hash the sorted (name, file digest)
/// list of their regular files.
inline std::string path_digest(const std::filesystem::path& p) {
  if (std::filesystem::is_directory(p)) {
    std::vector<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(p)) {
      if (e.is_regular_file()) names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    std::string listing;
    for (const auto& n : names) listing += n + '\0' + sha256_hex(io::read_file(p / n)) + '\n';
    return sha256_hex(listing);
  }
  return sha256_hex(io::read_file(p));
}

using Inputs = std::map<std::string, std::filesystem::path>;

/// Resolved config, tool identity and input digests. Output locations are
/// left out so that reruns into another directory give identical bytes.
inline std::string write_manifest(std::string_view command, const PipelineConfig& cfg, const Inputs& inputs) {
  std::string s = "# tap run manifest\n";
  s += "tool.name = " + std::string(kToolName) + '\n';
  s += "tool.version = " + std::string(kToolVersion) + '\n';
  s += "tool.command = " + std::string(command) + '\n';
  s += write_config(cfg);
  for (const auto& [name, path] : inputs) s += "input." + name + " = " + path.string() + '\n';
  for (const auto& [name, path] : inputs) s += "digest." + name + " = " + path_digest(path) + '\n';
  return s;
}

/// Checks that every input listed in a manifest still has its recorded
/// digest.
inline void verify_digests(const ConfigFile& manifest) {
  for (const auto& [name, path] : manifest.inputs) {
    auto it = manifest.digests.find(name);
    if (it == manifest.digests.end()) continue;
    if (path_digest(path) != it->second) {
      throw Error(ErrorCode::FormatError, "input '" + name + "' (" + path + ") changed since the manifest");
    }
  }
}

/// Rethrows library errors with the failing stage and file named.
template <typename Fn>
auto in_stage(std::string_view stage, const std::filesystem::path& file, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    std::string where = "stage '" + std::string(stage) + "'";
    if (!file.empty()) where += ", file '" + file.string() + "'";
    if (e.line() > 0) where += ", line " + std::to_string(e.line());
    throw Error(e.code(), where + ": " + e.message(), e.line());
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(ErrorCode::FormatError, "stage '" + std::string(stage) + "', file '" + file.string() +
                                            "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sequence info: flat key = value with sequence_id, width, height, frames.

struct SequenceInfo {
  std::string sequence_id = "seq";
  int width = 0;
  int height = 0;
  std::int64_t frames = 0;
};

inline SequenceInfo parse_seqinfo(std::string_view text) {
  SequenceInfo info;
  const auto ls = io::lines(text);
  for (std::size_t n = 0; n < ls.size(); ++n) {
    std::string_view line = io::trim(ls[n]);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(ErrorCode::ParseError, "expected key = value", n + 1);
    const auto key = io::trim(line.substr(0, eq));
    const auto value = io::trim(line.substr(eq + 1));
    if (key == "sequence_id") {
      info.sequence_id = std::string(value);
    } else if (key == "width") {
      info.width = io::parse_int<int>(value, n + 1);
    } else if (key == "height") {
      info.height = io::parse_int<int>(value, n + 1);
    } else if (key == "frames") {
      info.frames = io::parse_int<std::int64_t>(value, n + 1);
    } else {
      throw Error(ErrorCode::ParseError, "unknown seqinfo key '" + std::string(key) + "'", n + 1);
    }
  }
  if (info.width <= 0 || info.height <= 0 || info.frames <= 0) {
    throw Error(ErrorCode::FormatError, "seqinfo needs positive width, height and frames");
  }
  return info;
}

inline std::string write_seqinfo(const SequenceInfo& info) {
  return "sequence_id = " + info.sequence_id + "\nwidth = " + std::to_string(info.width) +
         "\nheight = " + std::to_string(info.height) + "\nframes = " + std::to_string(info.frames) + '\n';
}

inline std::filesystem::path depth_map_path(const std::filesystem::path& dir, std::int64_t frame_index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06lld.pgm", static_cast<long long>(frame_index + 1));
  return dir / name;
}

inline std::string image_id(std::int64_t frame_index) {
  char name[32];
  std::snprintf(name, sizeof name, "%06lld", static_cast<long long>(frame_index + 1));
  return name;
}

/// Camera motion per line: "frame a11 a12 tx a21 a22 ty" (1-based frame).
inline std::map<std::int64_t, kalman::AffineMotion> parse_motion_file(std::string_view text) {
  std::map<std::int64_t, kalman::AffineMotion> out;
  const auto ls = io::lines(text);
  for (std::size_t n = 0; n < ls.size(); ++n) {
    const auto f = io::split_ws(ls[n]);
    if (f.empty() || f[0].front() == '#') continue;
    if (f.size() != 7) throw Error(ErrorCode::ParseError, "motion line needs frame and 6 values", n + 1);
    const auto frame = io::parse_int<std::int64_t>(f[0], n + 1);
    kalman::AffineMotion m;
    for (int k = 0; k < 6; ++k) m.matrix(k / 3, k % 3) = io::parse_double(f[static_cast<std::size_t>(k + 1)], n + 1);
    kalman::validate(m);
    out[frame - 1] = m;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages

/// Writes seqinfo.txt, gt.txt, det.txt, emb.bin, depth/NNNNNN.pgm and
/// manifest.txt under `out`.
inline void run_synth(const PipelineConfig& cfg, const std::filesystem::path& out) {
  const auto seq = in_stage("synth", {}, [&] { return synth::generate(cfg.scenario()); });
  in_stage("synth", out, [&] {
    const auto& sc = cfg.synth;
    io::write_file_atomic(out / "seqinfo.txt",
                          write_seqinfo({sc.sequence_id, sc.image_width, sc.image_height, sc.frame_count}));
    std::vector<io::MotRecord> gt, det;
    io::EmbeddingTable emb{sc.embedding_dim, {}};
    for (std::size_t t = 0; t < seq.gt.frames.size(); ++t) {
      for (const auto& a : seq.gt.frames[t]) {
        Detection d;
        d.frame_index = static_cast<std::int64_t>(t);
        d.box = a.box;
        gt.push_back(io::to_mot(d, a.id, 1.0));
      }
      for (const auto& d : seq.detections[t]) {
        det.push_back(io::to_mot(d, -1, -1.0));
        emb.rows.push_back(*d.embedding);
      }
      io::write_file_atomic(depth_map_path(out / "depth", static_cast<std::int64_t>(t)),
                            io::write_depth_pgm(seq.depth[t]));
    }
    io::write_file_atomic(out / "gt.txt", io::write_mot(gt));
    io::write_file_atomic(out / "det.txt", io::write_mot(det));
    io::write_file_atomic(out / "emb.bin", io::write_embeddings(emb));
    io::write_file_atomic(out / "manifest.txt", write_manifest("synth", cfg, {}));
    return 0;
  });
}

struct DetectionInputs {
  std::filesystem::path detections;
  std::optional<std::filesystem::path> embeddings;
  std::optional<std::filesystem::path> depth_dir;
  std::optional<std::filesystem::path> seqinfo;
  std::optional<std::filesystem::path> motion;

  Inputs manifest_inputs() const {
    Inputs in{{"det", detections}};
    if (embeddings) in["emb"] = *embeddings;
    if (depth_dir) in["depth"] = *depth_dir;
    if (seqinfo) in["seqinfo"] = *seqinfo;
    if (motion) in["motion"] = *motion;
    return in;
  }
};

namespace detail {

struct LoadedDetections {
  std::optional<SequenceInfo> info;
  std::int64_t frames = 0;
  std::vector<std::vector<Detection>> by_frame;
  std::vector<io::MotRecord> records;
};

inline LoadedDetections load_detections(const DetectionInputs& in) {
  LoadedDetections l;
  if (in.seqinfo) {
    l.info = in_stage("load", *in.seqinfo, [&] { return parse_seqinfo(io::read_file(*in.seqinfo)); });
  }
  l.records = in_stage("load", in.detections, [&] { return io::parse_mot(io::read_file(in.detections)); });
  std::optional<io::EmbeddingTable> emb;
  if (in.embeddings) {
    emb = in_stage("load", *in.embeddings, [&] { return io::parse_embeddings(io::read_file(*in.embeddings)); });
  }
  l.frames = l.info ? l.info->frames : io::max_frame(l.records);
  l.by_frame = in_stage("load", in.detections, [&] {
    return io::detections_by_frame(l.records, l.frames, emb ? &*emb : nullptr);
  });
  return l;
}

inline depth::DepthMap load_depth(const std::filesystem::path& dir, std::int64_t t) {
  const auto path = depth_map_path(dir, t);
  return in_stage("filter-depth", path, [&] { return io::read_depth_pgm(io::read_file(path)); });
}

}  // namespace detail

struct FilterSummary {
  std::size_t input = 0, retained = 0, discarded = 0, unsupported = 0;
};

/// Depth-gates a detection file. Writes det.txt (plus emb.bin when
/// embeddings were given), unsupported.txt listing fail-open detections as
/// "frame,index" and manifest.txt.
inline FilterSummary run_filter_depth(const PipelineConfig& cfg, const DetectionInputs& in,
                                      const std::filesystem::path& out) {
  if (!in.depth_dir) throw Error(ErrorCode::InvalidArgument, "filter-depth needs a depth directory");
  const auto loaded = detail::load_detections(in);
  const depth::DepthFilterConfig dcfg(cfg.tau_d);
  FilterSummary summary;
  std::vector<io::MotRecord> kept;
  io::EmbeddingTable emb{0, {}};
  std::string unsupported;
  for (std::int64_t t = 0; t < loaded.frames; ++t) {
    const auto& dets = loaded.by_frame[static_cast<std::size_t>(t)];
    summary.input += dets.size();
    if (dets.empty()) continue;
    const auto map = detail::load_depth(*in.depth_dir, t);
    const int w = loaded.info ? loaded.info->width : map.width;
    const int h = loaded.info ? loaded.info->height : map.height;
    const auto result = in_stage("filter-depth", depth_map_path(*in.depth_dir, t),
                                 [&] { return depth::filter_detections(dets, map, dcfg, w, h); });
    for (const auto& d : result.retained) {
      kept.push_back(io::to_mot(d, -1, -1.0));
      if (d.embedding) {
        emb.dim = static_cast<int>(d.embedding->size());
        emb.rows.push_back(*d.embedding);
      }
    }
    for (auto i : result.unsupported) unsupported += std::to_string(t + 1) + ',' + std::to_string(i) + '\n';
    summary.retained += result.retained.size();
    summary.discarded += result.discarded.size();
    summary.unsupported += result.unsupported.size();
  }
  in_stage("filter-depth", out, [&] {
    io::write_file_atomic(out / "det.txt", io::write_mot(kept));
    if (in.embeddings) {
      if (emb.dim == 0) emb.dim = io::parse_embeddings(io::read_file(*in.embeddings)).dim;
      io::write_file_atomic(out / "emb.bin", io::write_embeddings(emb));
    }
    io::write_file_atomic(out / "unsupported.txt", unsupported);
    io::write_file_atomic(out / "manifest.txt", write_manifest("filter-depth", cfg, in.manifest_inputs()));
    return 0;
  });
  return summary;
}

/// Runs the tracker over every frame, depth-gating first when a depth
/// directory is given and the config enables it. Returns the emitted
/// records; writes tracks.txt and manifest.txt under `out` when non-empty.
inline std::vector<io::MotRecord> run_track(const PipelineConfig& cfg, const DetectionInputs& in,
                                            const std::filesystem::path& out) {
  cfg.validate();
  const auto loaded = detail::load_detections(in);
  std::map<std::int64_t, kalman::AffineMotion> motion;
  if (in.motion) {
    motion = in_stage("track", *in.motion, [&] { return parse_motion_file(io::read_file(*in.motion)); });
  }
  const bool filtering = in.depth_dir && cfg.depth_filter;
  const depth::DepthFilterConfig dcfg(cfg.tau_d);
  Tracker tracker(cfg.tracker);
  std::vector<io::MotRecord> records;
  for (std::int64_t t = 0; t < loaded.frames; ++t) {
    std::vector<Detection> dets = loaded.by_frame[static_cast<std::size_t>(t)];
    if (filtering && !dets.empty()) {
      const auto map = detail::load_depth(*in.depth_dir, t);
      const int w = loaded.info ? loaded.info->width : map.width;
      const int h = loaded.info ? loaded.info->height : map.height;
      dets = in_stage("filter-depth", depth_map_path(*in.depth_dir, t),
                      [&] { return depth::filter_detections(dets, map, dcfg, w, h).retained; });
    }
    std::optional<kalman::AffineMotion> m;
    if (auto it = motion.find(t); it != motion.end()) m = it->second;
    for (const auto& o : in_stage("track", in.detections, [&] { return tracker.step(t, dets, m); })) {
      records.push_back(io::to_mot(o.detection, o.track_id, -1.0));
    }
  }
  if (!out.empty()) {
    in_stage("track", out, [&] {
      io::write_file_atomic(out / "tracks.txt", io::write_mot(records));
      io::write_file_atomic(out / "manifest.txt", write_manifest("track", cfg, in.manifest_inputs()));
      return 0;
    });
  }
  return records;
}

struct EvalInput {
  std::filesystem::path gt;
  std::filesystem::path pred;
  /// Optional; frame range and sequence name. Without it the range is the
  /// last gt frame and the name the gt file's parent directory.
  std::optional<std::filesystem::path> seqinfo;
};

/// Scores each sequence (concurrently) and appends the unweighted average.
/// Writes report.txt and manifest.txt under `out` when non-empty.
inline std::vector<metrics::MetricReport> run_evaluate(const PipelineConfig& cfg,
                                                       const std::vector<EvalInput>& inputs,
                                                       const std::filesystem::path& out) {
  if (inputs.empty()) throw Error(ErrorCode::EmptyInput, "stage 'evaluate': no sequences given");
  std::vector<std::future<metrics::MetricReport>> jobs;
  for (const auto& in : inputs) {
    jobs.push_back(std::async(std::launch::async, [&cfg, in] {
      std::optional<SequenceInfo> info;
      if (in.seqinfo) {
        info = in_stage("evaluate", *in.seqinfo, [&] { return parse_seqinfo(io::read_file(*in.seqinfo)); });
      }
      const auto gt = in_stage("evaluate", in.gt, [&] { return io::parse_mot(io::read_file(in.gt)); });
      const auto pred = in_stage("evaluate", in.pred, [&] { return io::parse_mot(io::read_file(in.pred)); });
      const std::int64_t frames = info ? info->frames : io::max_frame(gt);
      std::string name = info ? info->sequence_id : in.gt.parent_path().filename().string();
      if (name.empty()) name = in.gt.stem().string();
      const auto gt_seq = in_stage("evaluate", in.gt, [&] { return io::to_sequence(gt, frames, name); });
      const auto pred_seq = in_stage("evaluate", in.pred, [&] { return io::to_sequence(pred, frames, name); });
      return in_stage("evaluate", in.pred,
                      [&] { return metrics::evaluate(gt_seq, pred_seq, cfg.iou_threshold); });
    }));
  }
  std::vector<metrics::MetricReport> reports;
  for (auto& j : jobs) reports.push_back(j.get());
  reports.push_back(metrics::average_reports(reports));
  reports.back().sequence_id = "avg";
  if (!out.empty()) {
    Inputs manifest_inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      manifest_inputs["gt" + std::to_string(k)] = inputs[k].gt;
      manifest_inputs["pred" + std::to_string(k)] = inputs[k].pred;
      if (inputs[k].seqinfo) manifest_inputs["seqinfo" + std::to_string(k)] = *inputs[k].seqinfo;
    }
    in_stage("evaluate", out, [&] {
      io::write_file_atomic(out / "report.txt", io::write_report(reports));
      io::write_file_atomic(out / "manifest.txt", write_manifest("evaluate", cfg, manifest_inputs));
      return 0;
    });
  }
  return reports;
}

struct RelightSummary {
  double luminance = 0, alpha = 0, beta = 0, output_luminance = 0;
};

/// Relights one 8-bit PGM/PPM frame into out/relit.pgm.
inline RelightSummary run_relight(const PipelineConfig& cfg, const std::filesystem::path& image,
                                  const std::filesystem::path& out) {
  const auto img = in_stage("relight", image, [&] { return io::read_luma(io::read_file(image)); });
  const auto lit = relight::relight(img, cfg.curves);
  RelightSummary s;
  s.luminance = relight::frame_luminance(img);
  s.alpha = cfg.curves.alpha(s.luminance);
  s.beta = cfg.curves.beta(s.luminance);
  s.output_luminance = relight::frame_luminance(lit);
  in_stage("relight", out, [&] {
    io::write_file_atomic(out / "relit.pgm", io::write_luma_pgm(lit));
    io::write_file_atomic(out / "stats.txt",
                          "luminance = " + io::format_fixed(s.luminance, 6) + "\nalpha = " +
                              io::format_fixed(s.alpha, 6) + "\nbeta = " + io::format_fixed(s.beta, 6) +
                              "\noutput_luminance = " + io::format_fixed(s.output_luminance, 6) + '\n');
    io::write_file_atomic(out / "manifest.txt", write_manifest("relight", cfg, {{"image", image}}));
    return 0;
  });
  return s;
}

struct LabelInputs {
  /// MOT file whose confidence column carries the raw detector logit.
  std::filesystem::path candidates;
  std::filesystem::path seqinfo;
  std::optional<std::filesystem::path> overrides;
};

/// Sub-samples frames, keeps candidates with sigmoid(logit) >= tau, merges
/// overrides and writes out/labels/<image_id>.txt per sampled frame.
/// Returns the written labels keyed by image id.
inline std::map<std::string, std::vector<labels::LabelRecord>> run_labels(const PipelineConfig& cfg,
                                                                         const LabelInputs& in,
                                                                         const std::filesystem::path& out) {
  const auto info = in_stage("labels", in.seqinfo, [&] { return parse_seqinfo(io::read_file(in.seqinfo)); });
  const auto records = in_stage("labels", in.candidates, [&] { return io::parse_mot(io::read_file(in.candidates)); });
  const labels::LabelThreshold threshold(cfg.label_tau);

  std::map<std::int64_t, std::vector<labels::LabelCandidate>> by_frame;
  for (const auto& r : records) {
    if (r.frame > info.frames) {
      throw Error(ErrorCode::FrameRangeMismatch, "stage 'labels', file '" + in.candidates.string() +
                                                     "': candidate beyond the sequence");
    }
    by_frame[r.frame - 1].push_back({r.box(), r.conf, image_id(r.frame - 1), r.class_id});
  }

  std::map<std::string, std::vector<labels::LabelRecord>> out_labels;
  for (auto t : labels::subsample_indices({info.frames, cfg.interval})) {
    std::vector<Detection> dets;
    for (const auto& c : labels::confidence_filter(by_frame[t], threshold)) {
      Detection d;
      d.frame_index = t;
      d.box = c.box;
      d.confidence = labels::sigmoid(c.logit);
      d.class_id = c.class_id;
      dets.push_back(std::move(d));
    }
    out_labels[image_id(t)] = in_stage("labels", in.candidates,
                                       [&] { return labels::export_labels(dets, info.width, info.height); });
  }
  Inputs manifest_inputs{{"candidates", in.candidates}, {"seqinfo", in.seqinfo}};
  if (in.overrides) {
    const auto ov = in_stage("labels", *in.overrides, [&] { return io::parse_overrides(io::read_file(*in.overrides)); });
    labels::merge_overrides(out_labels, ov);
    manifest_inputs["overrides"] = *in.overrides;
  }
  if (!out.empty()) {
    in_stage("labels", out, [&] {
      for (const auto& [id, recs] : out_labels) {
        io::write_file_atomic(out / "labels" / (id + ".txt"), io::write_labels(recs));
      }
      io::write_file_atomic(out / "manifest.txt", write_manifest("labels", cfg, manifest_inputs));
      return 0;
    });
  }
  return out_labels;
}

}  // namespace tap::pipeline
