#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "tap/pipeline.hpp"

using namespace tap;
using namespace tap::pipeline;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("tap_pipeline_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

PipelineConfig clean_config() {
  PipelineConfig cfg;
  cfg.synth.num_foreground = 3;
  cfg.synth.num_background = 0;
  cfg.synth.frame_count = 40;
  cfg.synth.seed = 11;
  return cfg;
}

DetectionInputs synth_inputs(const fs::path& dir) {
  return {dir / "det.txt", dir / "emb.bin", dir / "depth", dir / "seqinfo.txt", std::nullopt};
}

}  // namespace

TEST(Config, WriteParseRoundTrip) {
  PipelineConfig cfg;
  cfg.tau_d = 1500;
  cfg.tracker.fusion_lambda = 0.25;
  cfg.synth.motion = synth::MotionKind::Mixed;
  cfg.synth.occlusions = {{3, 9, 0, 1}, {20, 25, 2, 0}};
  cfg.synth.ablation_mode = true;
  cfg.synth.seed = 1234567890123ULL;
  cfg.depth_filter = false;
  const auto text = write_config(cfg);
  const auto parsed = parse_config(text);
  EXPECT_EQ(write_config(parsed.config), text);
  EXPECT_EQ(parsed.config.tau_d, 1500u);
  EXPECT_EQ(parsed.config.synth.occlusions.size(), 2u);
  EXPECT_FALSE(parsed.config.depth_filter);
}

TEST(Config, CommentsAndPartialFiles) {
  const auto f = parse_config("# tuned\n\nlambda = 0.5  \ninterval=3\n");
  EXPECT_EQ(f.config.tracker.fusion_lambda, 0.5);
  EXPECT_EQ(f.config.interval, 3);
  EXPECT_EQ(f.config.tau_d, depth::kDefaultTauD);
}

TEST(Config, Rejects) {
  auto code = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvariantViolation;
  };
  EXPECT_EQ(code("no_such_key = 1\n"), ErrorCode::InvalidConfig);
  EXPECT_EQ(code("lambda = 2\n"), ErrorCode::InvalidConfig);
  EXPECT_EQ(code("interval = 0\n"), ErrorCode::InvalidConfig);
  EXPECT_EQ(code("synth.motion = spiral\n"), ErrorCode::InvalidConfig);
  EXPECT_EQ(code("lambda\n"), ErrorCode::InvalidConfig);
  EXPECT_EQ(code("relight.alpha = 0:1,0:2\n"), ErrorCode::InvalidConfig);
}

TEST(Config, EveryKeyIsWritten) {
  const auto text = write_config(PipelineConfig{});
  for (auto k : config_keys()) EXPECT_NE(text.find(std::string(k) + " = "), std::string::npos) << k;
}

TEST(Manifest, DeterministicAndVerified) {
  TempDir dir;
  io::write_file_atomic(dir / "a.txt", "hello\n");
  io::write_file_atomic(dir / "d" / "x.pgm", "P5\n");
  const Inputs in{{"a", dir / "a.txt"}, {"d", dir / "d"}};
  const auto m1 = write_manifest("track", PipelineConfig{}, in);
  EXPECT_EQ(write_manifest("track", PipelineConfig{}, in), m1);
  const auto parsed = parse_config(m1);
  EXPECT_EQ(parsed.tool.at("command"), "track");
  EXPECT_EQ(parsed.digests.at("a"), sha256_hex("hello\n"));
  EXPECT_NO_THROW(verify_digests(parsed));
  io::write_file_atomic(dir / "d" / "x.pgm", "P6\n");
  EXPECT_THROW(verify_digests(parsed), Error);
}

TEST(Digest, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(SeqInfo, RoundTripAndRejects) {
  const SequenceInfo info{"walk", 640, 480, 90};
  const auto parsed = parse_seqinfo(write_seqinfo(info));
  EXPECT_EQ(parsed.sequence_id, "walk");
  EXPECT_EQ(parsed.frames, 90);
  EXPECT_EQ(write_seqinfo(parsed), write_seqinfo(info));
  EXPECT_THROW(parse_seqinfo("sequence_id = x\nwidth = 0\nheight = 4\nframes = 2\n"), Error);
  EXPECT_THROW(parse_seqinfo("bogus = 1\n"), Error);
}

TEST(MotionFile, Parse) {
  const auto m = parse_motion_file("# frame a11 a12 tx a21 a22 ty\n2 1 0 5 0 1 -3\n");
  ASSERT_EQ(m.count(1), 1u);
  EXPECT_EQ(m.at(1).matrix(0, 2), 5.0);
  EXPECT_EQ(m.at(1).matrix(1, 2), -3.0);
  EXPECT_THROW(parse_motion_file("2 1 0 5\n"), Error);
}

TEST(Pipeline, ZeroNoiseSynthTrackEvaluateIsPerfect) {
  TempDir dir;
  const auto cfg = clean_config();
  run_synth(cfg, dir / "synth");
  run_track(cfg, synth_inputs(dir / "synth"), dir / "track");
  run_evaluate(cfg, {{dir / "synth" / "gt.txt", dir / "track" / "tracks.txt", dir / "synth" / "seqinfo.txt"}},
               dir / "eval");
  const auto report = io::parse_report(io::read_file(dir / "eval" / "report.txt"));
  ASSERT_EQ(report.count("synth"), 1u);
  EXPECT_EQ(report.at("synth").at("MOTA"), "100.0");
  EXPECT_EQ(report.at("synth").at("HOTA"), "100.0");
  EXPECT_EQ(report.at("synth").at("IDF1"), "100.0");
  EXPECT_EQ(report.at("avg").at("MOTA"), "100.0");
}

TEST(Pipeline, RerunIsByteIdentical) {
  TempDir a, b;
  auto cfg = clean_config();
  cfg.synth.detection_noise_sigma = 1.0;
  cfg.synth.false_positive_rate = 0.5;
  cfg.synth.num_background = 2;
  for (const auto* d : {&a, &b}) {
    run_synth(cfg, *d / "s");
    run_track(cfg, synth_inputs(*d / "s"), *d / "t");
  }
  EXPECT_EQ(io::read_file(a / "s" / "det.txt"), io::read_file(b / "s" / "det.txt"));
  EXPECT_EQ(io::read_file(a / "s" / "emb.bin"), io::read_file(b / "s" / "emb.bin"));
  EXPECT_EQ(io::read_file(a / "t" / "tracks.txt"), io::read_file(b / "t" / "tracks.txt"));
  EXPECT_EQ(path_digest(a / "s" / "depth"), path_digest(b / "s" / "depth"));
}

TEST(Pipeline, FilterDepthDropsClutter) {
  TempDir dir;
  auto cfg = clean_config();
  cfg.synth.ablation_mode = true;
  cfg.synth.num_background = 5;
  cfg.synth.false_positive_rate = 1.0;
  run_synth(cfg, dir / "s");
  const auto summary = run_filter_depth(cfg, synth_inputs(dir / "s"), dir / "f");
  EXPECT_GT(summary.discarded, 0u);
  EXPECT_EQ(summary.input, summary.retained + summary.discarded);
  const auto kept = io::parse_mot(io::read_file(dir / "f" / "det.txt"));
  EXPECT_EQ(kept.size(), summary.retained);
  EXPECT_EQ(io::parse_embeddings(io::read_file(dir / "f" / "emb.bin")).rows.size(), kept.size());
  const auto gt = io::parse_mot(io::read_file(dir / "s" / "gt.txt"));
  EXPECT_EQ(kept.size(), gt.size());
}

TEST(Pipeline, EvaluateFrameRangeMismatchNamesStage) {
  TempDir dir;
  io::write_file_atomic(dir / "s" / "gt.txt", "1,1,0,0,10,10,1,0,1\n2,1,0,0,10,10,1,0,1\n");
  io::write_file_atomic(dir / "s" / "pred.txt", "1,1,0,0,10,10,1,0,1\n5,1,0,0,10,10,1,0,1\n");
  try {
    run_evaluate(PipelineConfig{}, {{dir / "s" / "gt.txt", dir / "s" / "pred.txt", std::nullopt}}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FrameRangeMismatch);
    EXPECT_NE(std::string(e.what()).find("stage 'evaluate'"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("pred.txt"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, ParseErrorNamesFileAndLine) {
  TempDir dir;
  io::write_file_atomic(dir / "det.txt", "1,-1,0,0,10,10,0.9,0,-1\n1,-1,0,0\n");
  try {
    run_track(PipelineConfig{}, {dir / "det.txt", std::nullopt, std::nullopt, std::nullopt, std::nullopt}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, MissingFileIsFormatError) {
  TempDir dir;
  try {
    run_relight(PipelineConfig{}, dir / "nope.pgm", dir / "out");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FormatError);
  }
}

TEST(Pipeline, RelightIdentityCurves) {
  TempDir dir;
  relight::LumaImage img(4, 3);
  for (std::size_t k = 0; k < img.pixels.size(); ++k) img.pixels[k] = std::uint8_t(20 * k);
  io::write_file_atomic(dir / "in.pgm", io::write_luma_pgm(img));
  PipelineConfig cfg;
  set_key(cfg, "relight.alpha", "0:1,255:1");
  set_key(cfg, "relight.beta", "0:1,255:1");
  const auto s = run_relight(cfg, dir / "in.pgm", dir / "out");
  EXPECT_EQ(s.alpha, 1.0);
  EXPECT_EQ(io::read_file(dir / "out" / "relit.pgm"), io::write_luma_pgm(img));
}

TEST(Pipeline, LabelsSubsampleThresholdAndOverride) {
  TempDir dir;
  io::write_file_atomic(dir / "seqinfo.txt", write_seqinfo({"cam", 100, 100, 12}));
  // Logits: 2.0 -> 0.88 kept, -2.0 -> 0.12 dropped.
  io::write_file_atomic(dir / "cand.txt",
                        "1,-1,10,10,20,20,2.0,0,-1\n"
                        "1,-1,50,50,20,20,-2.0,0,-1\n"
                        "2,-1,10,10,20,20,2.0,0,-1\n"
                        "6,-1,0,0,50,100,2.0,1,-1\n");
  io::write_file_atomic(dir / "over.txt", "000011 4 0.500000 0.500000 0.100000 0.100000\n");
  const auto out = run_labels(PipelineConfig{}, {dir / "cand.txt", dir / "seqinfo.txt", dir / "over.txt"},
                              dir / "out");
  ASSERT_EQ(out.size(), 3u);
  ASSERT_EQ(out.at("000001").size(), 1u);
  EXPECT_NEAR(out.at("000001")[0].cx, 0.2, 1e-12);
  ASSERT_EQ(out.at("000006").size(), 1u);
  EXPECT_EQ(out.at("000006")[0].class_id, 1);
  EXPECT_NEAR(out.at("000006")[0].w, 0.5, 1e-12);
  EXPECT_EQ(out.at("000011")[0].class_id, 4);
  EXPECT_EQ(io::read_file(dir / "out" / "labels" / "000006.txt"), io::write_labels(out.at("000006")));
  EXPECT_FALSE(fs::exists(dir / "out" / "labels" / "000002.txt"));
}
