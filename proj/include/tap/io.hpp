#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tap/depth_filter.hpp"
#include "tap/error.hpp"
#include "tap/geometry.hpp"
#include "tap/metrics.hpp"
#include "tap/relight.hpp"
#include "tap/weak_labels.hpp"

namespace tap::io {

// ---------------------------------------------------------------------------
// Small text helpers

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

/// Lines of a text file; a trailing newline does not produce an empty line.
inline std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    out.push_back(line);
    start = end + 1;
  }
  return out;
}

inline double parse_double(std::string_view field, std::size_t line = 0) {
  field = trim(field);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
    throw Error(ErrorCode::ParseError, "not a number: '" + std::string(field) + "'", line);
  }
  return v;
}

template <typename Int>
Int parse_int(std::string_view field, std::size_t line = 0) {
  field = trim(field);
  Int v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::ParseError, "not an integer: '" + std::string(field) + "'", line);
  }
  return v;
}

/// Six significant digits, printf %g style.
inline std::string format_g6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v == 0.0 ? 0.0 : v);
  return buf;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s.rfind("-0.", 0) == 0 && s.find_first_not_of("-0.") == std::string::npos) s.erase(0, 1);
  return s;
}

/// Shortest text that parses back to the same double.
inline std::string format_shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FormatError, "cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// Writes to a sibling temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::FormatError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::FormatError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// MOT CSV: frame,id,x,y,w,h,conf,class,visibility

struct MotRecord {
  std::int64_t frame = 1;
  int id = -1;
  double x = 0, y = 0, w = 0, h = 0;
  double conf = 1.0;
  int class_id = 0;
  double visibility = 1.0;

  BoundingBox box() const { return BoundingBox::from_tlwh(x, y, w, h); }

  friend bool operator==(const MotRecord&, const MotRecord&) = default;
};

inline std::vector<MotRecord> parse_mot(std::string_view text) {
  std::vector<MotRecord> out;
  const auto ls = lines(text);
  for (std::size_t n = 0; n < ls.size(); ++n) {
    const std::size_t line_no = n + 1;
    if (trim(ls[n]).empty()) continue;
    const auto f = split(ls[n], ',');
    if (f.size() != 9) {
      throw Error(ErrorCode::ParseError,
                  "expected 9 fields, found " + std::to_string(f.size()), line_no);
    }
    MotRecord r;
    r.frame = parse_int<std::int64_t>(f[0], line_no);
    r.id = parse_int<int>(f[1], line_no);
    r.x = parse_double(f[2], line_no);
    r.y = parse_double(f[3], line_no);
    r.w = parse_double(f[4], line_no);
    r.h = parse_double(f[5], line_no);
    r.conf = parse_double(f[6], line_no);
    r.class_id = parse_int<int>(f[7], line_no);
    r.visibility = parse_double(f[8], line_no);
    if (r.frame < 1) throw Error(ErrorCode::ParseError, "frame numbers start at 1", line_no);
    out.push_back(r);
  }
  return out;
}

inline std::string write_mot(const std::vector<MotRecord>& records) {
  std::string s;
  for (const auto& r : records) {
    s += std::to_string(r.frame) + ',' + std::to_string(r.id) + ',' + format_g6(r.x) + ',' +
         format_g6(r.y) + ',' + format_g6(r.w) + ',' + format_g6(r.h) + ',' + format_g6(r.conf) +
         ',' + std::to_string(r.class_id) + ',' + format_g6(r.visibility) + '\n';
  }
  return s;
}

inline MotRecord to_mot(const Detection& d, int id, double visibility = -1.0) {
  MotRecord r;
  r.frame = d.frame_index + 1;
  r.id = id;
  r.x = d.box.x_min;
  r.y = d.box.y_min;
  r.w = d.box.width();
  r.h = d.box.height();
  r.conf = d.confidence;
  r.class_id = d.class_id;
  r.visibility = visibility;
  return r;
}

/// Annotated sequence over `frame_count` frames from gt or tracker output.
inline metrics::AnnotatedSequence to_sequence(const std::vector<MotRecord>& records,
                                              std::int64_t frame_count, std::string sequence_id) {
  metrics::AnnotatedSequence seq;
  seq.sequence_id = std::move(sequence_id);
  seq.frames.resize(static_cast<std::size_t>(frame_count));
  for (const auto& r : records) {
    if (r.frame > frame_count) {
      throw Error(ErrorCode::FrameRangeMismatch,
                  "record at frame " + std::to_string(r.frame) + " beyond the " +
                      std::to_string(frame_count) + "-frame range");
    }
    seq.frames[static_cast<std::size_t>(r.frame - 1)].push_back({r.id, r.box()});
  }
  return seq;
}

inline std::int64_t max_frame(const std::vector<MotRecord>& records) {
  std::int64_t m = 0;
  for (const auto& r : records) m = std::max(m, r.frame);
  return m;
}

// ---------------------------------------------------------------------------
// Netpbm

namespace detail {

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0;
  int maxval = 0;
  std::size_t data_offset = 0;
};

inline PnmHeader parse_pnm_header(std::string_view bytes) {
  PnmHeader h;
  std::size_t i = 0;
  auto skip_space = [&] {
    while (i < bytes.size()) {
      if (bytes[i] == '#') {
        while (i < bytes.size() && bytes[i] != '\n') ++i;
      } else if (std::isspace(static_cast<unsigned char>(bytes[i]))) {
        ++i;
      } else {
        break;
      }
    }
  };
  auto token = [&]() -> std::string_view {
    skip_space();
    const std::size_t start = i;
    while (i < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[i])) && bytes[i] != '#') ++i;
    if (i == start) throw Error(ErrorCode::FormatError, "truncated PNM header");
    return bytes.substr(start, i - start);
  };
  h.magic = std::string(token());
  auto number = [&] {
    const auto t = token();
    int v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || v <= 0) {
      throw Error(ErrorCode::FormatError, "bad PNM header field '" + std::string(t) + "'");
    }
    return v;
  };
  h.width = number();
  h.height = number();
  h.maxval = number();
  if (i >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[i]))) {
    throw Error(ErrorCode::FormatError, "truncated PNM header");
  }
  h.data_offset = i + 1;
  return h;
}

}  // namespace detail

/// Binary PGM, maxval 65535, big-endian samples.
inline depth::DepthMap read_depth_pgm(std::string_view bytes) {
  const auto h = detail::parse_pnm_header(bytes);
  if (h.magic != "P5") throw Error(ErrorCode::FormatError, "depth map must be binary PGM (P5)");
  if (h.maxval != 65535) {
    throw Error(ErrorCode::FormatError, "depth map maxval must be 65535, found " + std::to_string(h.maxval));
  }
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  if (bytes.size() - h.data_offset < 2 * n) throw Error(ErrorCode::FormatError, "truncated depth payload");
  depth::DepthMap m(h.width, h.height);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  for (std::size_t k = 0; k < n; ++k) {
    m.values[k] = static_cast<std::uint16_t>((p[2 * k] << 8) | p[2 * k + 1]);
  }
  return m;
}

inline std::string write_depth_pgm(const depth::DepthMap& m) {
  std::string s = "P5\n" + std::to_string(m.width) + " " + std::to_string(m.height) + "\n65535\n";
  s.reserve(s.size() + 2 * m.values.size());
  for (auto v : m.values) {
    s.push_back(static_cast<char>(v >> 8));
    s.push_back(static_cast<char>(v & 0xFF));
  }
  return s;
}

/// 8-bit PGM (P5) as-is, or binary PPM (P6) reduced to BT.601 luma.
inline relight::LumaImage read_luma(std::string_view bytes) {
  const auto h = detail::parse_pnm_header(bytes);
  if (h.maxval != 255) throw Error(ErrorCode::FormatError, "image maxval must be 255");
  const std::size_t n = static_cast<std::size_t>(h.width) * h.height;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + h.data_offset);
  relight::LumaImage img(h.width, h.height);
  if (h.magic == "P5") {
    if (bytes.size() - h.data_offset < n) throw Error(ErrorCode::FormatError, "truncated image payload");
    std::memcpy(img.pixels.data(), p, n);
  } else if (h.magic == "P6") {
    if (bytes.size() - h.data_offset < 3 * n) throw Error(ErrorCode::FormatError, "truncated image payload");
    for (std::size_t k = 0; k < n; ++k) img.pixels[k] = relight::luma_bt601(p[3 * k], p[3 * k + 1], p[3 * k + 2]);
  } else {
    throw Error(ErrorCode::FormatError, "image must be P5 or P6");
  }
  return img;
}

inline std::string write_luma_pgm(const relight::LumaImage& img) {
  std::string s = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  s.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return s;
}

// ---------------------------------------------------------------------------
// Embeddings: "dim=<D>\n" then little-endian float32 rows, one row per
// detection record in detection-file order.

struct EmbeddingTable {
  int dim = 0;
  std::vector<std::vector<float>> rows;

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

inline EmbeddingTable parse_embeddings(std::string_view bytes) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw Error(ErrorCode::FormatError, "embedding header missing");
  const std::string_view header = bytes.substr(0, nl);
  if (header.substr(0, 4) != "dim=") throw Error(ErrorCode::FormatError, "embedding header must be dim=<D>");
  EmbeddingTable t;
  try {
    t.dim = parse_int<int>(header.substr(4));
  } catch (const Error&) {
    throw Error(ErrorCode::FormatError, "embedding header must be dim=<D>");
  }
  if (t.dim <= 0) throw Error(ErrorCode::FormatError, "embedding dim must be positive");
  const std::string_view payload = bytes.substr(nl + 1);
  const std::size_t row_bytes = 4 * static_cast<std::size_t>(t.dim);
  if (payload.size() % row_bytes != 0) {
    throw Error(ErrorCode::FormatError, "embedding payload is not a whole number of rows");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (std::size_t off = 0; off < payload.size(); off += row_bytes) {
    std::vector<float> row(static_cast<std::size_t>(t.dim));
    for (std::size_t k = 0; k < row.size(); ++k) {
      const unsigned char* q = p + off + 4 * k;
      const std::uint32_t bits = static_cast<std::uint32_t>(q[0]) | (static_cast<std::uint32_t>(q[1]) << 8) |
                                 (static_cast<std::uint32_t>(q[2]) << 16) |
                                 (static_cast<std::uint32_t>(q[3]) << 24);
      std::memcpy(&row[k], &bits, 4);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string write_embeddings(const EmbeddingTable& t) {
  std::string s = "dim=" + std::to_string(t.dim) + "\n";
  for (const auto& row : t.rows) {
    if (static_cast<int>(row.size()) != t.dim) throw Error(ErrorCode::ShapeMismatch, "embedding row length");
    for (float f : row) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &f, 4);
      for (int b = 0; b < 4; ++b) s.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  }
  return s;
}

/// Groups detection records by frame (0-based index = MOT frame - 1) over
/// `frame_count` frames, keeping file order within a frame. Embedding rows,
/// when given, pair with records in file order.
inline std::vector<std::vector<Detection>> detections_by_frame(const std::vector<MotRecord>& records,
                                                               std::int64_t frame_count,
                                                               const EmbeddingTable* embeddings = nullptr) {
  if (embeddings && embeddings->rows.size() != records.size()) {
    throw Error(ErrorCode::ShapeMismatch, std::to_string(embeddings->rows.size()) + " embeddings for " +
                                              std::to_string(records.size()) + " detections");
  }
  std::vector<std::vector<Detection>> out(static_cast<std::size_t>(frame_count));
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& r = records[k];
    if (r.frame > frame_count) {
      throw Error(ErrorCode::FrameRangeMismatch,
                  "record at frame " + std::to_string(r.frame) + " beyond " + std::to_string(frame_count));
    }
    if (!(r.w > 0.0 && r.h > 0.0)) throw Error(ErrorCode::FormatError, "record with nonpositive size");
    Detection d;
    d.frame_index = r.frame - 1;
    d.box = r.box();
    d.confidence = r.conf;
    d.class_id = r.class_id;
    if (embeddings) d.embedding = embeddings->rows[k];
    out[static_cast<std::size_t>(r.frame - 1)].push_back(std::move(d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training labels: "class cx cy w h [x1 y1 ...]", six decimals.

namespace detail {

inline labels::LabelRecord parse_label_fields(const std::vector<std::string_view>& f, std::size_t first,
                                              std::size_t line_no) {
  if (f.size() < first + 5 || (f.size() - first - 5) % 2 != 0) {
    throw Error(ErrorCode::ParseError, "label needs class, 4 box values and coordinate pairs", line_no);
  }
  labels::LabelRecord r;
  r.class_id = parse_int<int>(f[first], line_no);
  r.cx = parse_double(f[first + 1], line_no);
  r.cy = parse_double(f[first + 2], line_no);
  r.w = parse_double(f[first + 3], line_no);
  r.h = parse_double(f[first + 4], line_no);
  for (std::size_t k = first + 5; k < f.size(); k += 2) {
    r.polygon.emplace_back(parse_double(f[k], line_no), parse_double(f[k + 1], line_no));
  }
  return r;
}

inline std::string label_fields(const labels::LabelRecord& r) {
  std::string s = std::to_string(r.class_id) + ' ' + format_fixed(r.cx, 6) + ' ' + format_fixed(r.cy, 6) +
                  ' ' + format_fixed(r.w, 6) + ' ' + format_fixed(r.h, 6);
  for (auto [x, y] : r.polygon) s += ' ' + format_fixed(x, 6) + ' ' + format_fixed(y, 6);
  return s;
}

}  // namespace detail

inline std::vector<labels::LabelRecord> parse_labels(std::string_view text) {
  std::vector<labels::LabelRecord> out;
  const auto ls = lines(text);
  for (std::size_t n = 0; n < ls.size(); ++n) {
    const auto f = split_ws(ls[n]);
    if (f.empty()) continue;
    out.push_back(detail::parse_label_fields(f, 0, n + 1));
  }
  return out;
}

inline std::string write_labels(const std::vector<labels::LabelRecord>& records) {
  std::string s;
  for (const auto& r : records) s += detail::label_fields(r) + '\n';
  return s;
}

/// Corrected labels keyed by image: "image_id class cx cy w h [...]".
inline std::map<std::string, std::vector<labels::LabelRecord>> parse_overrides(std::string_view text) {
  std::map<std::string, std::vector<labels::LabelRecord>> out;
  const auto ls = lines(text);
  for (std::size_t n = 0; n < ls.size(); ++n) {
    const auto f = split_ws(ls[n]);
    if (f.empty() || f[0].front() == '#') continue;
    out[std::string(f[0])].push_back(detail::parse_label_fields(f, 1, n + 1));
  }
  return out;
}

inline std::string write_overrides(const std::map<std::string, std::vector<labels::LabelRecord>>& m) {
  std::string s;
  for (const auto& [id, records] : m) {
    for (const auto& r : records) s += id + ' ' + detail::label_fields(r) + '\n';
  }
  return s;
}

// ---------------------------------------------------------------------------
// Metric report: fixed column order, percentages with one decimal.

inline const std::vector<std::string>& report_columns() {
  static const std::vector<std::string> cols{"IDF1", "IDP",  "IDR", "HOTA", "MOTA", "Rcll", "Prec", "DetA",
                                             "AssA", "GT",   "TP",  "FP",   "FN",   "IDSW"};
  return cols;
}

inline std::string write_report(const std::vector<metrics::MetricReport>& rows) {
  std::ostringstream os;
  os << "# tap metric report; rates in percent\n";
  os << "sequence";
  for (const auto& c : report_columns()) os << ' ' << c;
  os << '\n';
  for (const auto& r : rows) {
    auto pct = [](double v) { return format_fixed(100.0 * v, 1); };
    os << r.sequence_id << ' ' << pct(r.idf1) << ' ' << pct(r.idp) << ' ' << pct(r.idr) << ' '
       << pct(r.hota) << ' ' << pct(r.mota) << ' ' << pct(r.recall) << ' ' << pct(r.precision) << ' '
       << pct(r.deta) << ' ' << pct(r.assa) << ' ' << r.gt_count << ' ' << r.tp << ' ' << r.fp << ' '
       << r.fn << ' ' << r.idsw << '\n';
  }
  return os.str();
}

/// sequence id -> column -> printed value.
inline std::map<std::string, std::map<std::string, std::string>> parse_report(std::string_view text) {
  std::map<std::string, std::map<std::string, std::string>> out;
  std::vector<std::string_view> header;
  const auto ls = lines(text);
  for (std::size_t n = 0; n < ls.size(); ++n) {
    const auto f = split_ws(ls[n]);
    if (f.empty() || f[0].front() == '#') continue;
    if (header.empty()) {
      header = f;
      continue;
    }
    if (f.size() != header.size()) throw Error(ErrorCode::ParseError, "report row width", n + 1);
    auto& row = out[std::string(f[0])];
    for (std::size_t k = 1; k < f.size(); ++k) row[std::string(header[k])] = std::string(f[k]);
  }
  return out;
}

}  // namespace tap::io
