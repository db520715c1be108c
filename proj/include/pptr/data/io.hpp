#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "pptr/common/keyvalue.hpp"
#include "pptr/geometry/types.hpp"
#include "pptr/primitives/assignment.hpp"

namespace pptr::data {

namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;

/// 17 significant digits: enough for any f64 to survive a text round trip.
inline std::string format_double(double v) {
  char buf[40];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, r.ptr);
}

inline std::string frame_file_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.xyz", t);
  return buf;
}

inline std::string planes_file_name(std::size_t t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "planes_%04zu.txt", t);
  return buf;
}

struct SequenceFile {
  geometry::PointSequence sequence;
  std::vector<primitives::PrimitiveAssignment> primitives;  // empty unless stored
};

namespace detail {

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + p.string());
  return out;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> tok;
  std::istringstream in(line);
  std::string t;
  while (in >> t) tok.push_back(t);
  return tok;
}

inline double parse_num(const std::string& s, std::size_t line) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ParseError(line, "not a number: '" + s + "'");
  return v;
}

inline int parse_label(const std::string& s, std::size_t line) {
  int v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ParseError(line, "not an integer label: '" + s + "'");
  return v;
}

inline std::vector<std::size_t> parse_counts(const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    std::size_t v = 0;
    const std::string t = trim(tok);
    auto r = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size())
      throw Error(Errc::MalformedManifest, "bad point count '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

inline bool manifest_flag(const KeyValue& kv, const std::string& key, bool required) {
  if (!kv.has(key)) {
    if (required) throw Error(Errc::MalformedManifest, "missing key '" + key + "'");
    return false;
  }
  const std::string& v = kv.get(key);
  if (v != "0" && v != "1") throw Error(Errc::MalformedManifest, key + " must be 0 or 1");
  return v == "1";
}

}  // namespace detail

/// Write one sequence directory. Per-point class labels travel inside the
/// frames; when `prims` is given an extra primitive-id column is appended
/// and each frame gets a planes sidecar (`id a b c d rms` per line).
inline void write_sequence(const geometry::PointSequence& seq, const fs::path& dir,
                           const std::vector<primitives::PrimitiveAssignment>* prims = nullptr) {
  validate(seq);
  if (prims && prims->size() != seq.length())
    throw Error(Errc::LengthMismatch, "one primitive assignment per frame required");
  const bool normals = seq.frames.front().has_normals();
  const bool labels = seq.frames.front().has_labels();
  std::ostringstream counts;
  for (std::size_t t = 0; t < seq.length(); ++t) {
    const auto& f = seq.frames[t];
    if (f.has_normals() != normals || f.has_labels() != labels)
      throw Error(Errc::InvalidConfig, "frames disagree on normals/labels presence");
    if (prims && (*prims)[t].size() != f.size())
      throw Error(Errc::LengthMismatch, "primitive labels length differs from point count");
    counts << (t ? "," : "") << f.size();
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string() + ": " + ec.message());

  KeyValue manifest;
  manifest.set_num("format_version", kFormatVersion);
  manifest.set_num("L", seq.length());
  manifest.set("N", counts.str());
  manifest.set("has_normals", normals ? "1" : "0");
  manifest.set("has_labels", labels ? "1" : "0");
  if (prims) {
    manifest.set("has_primitives", "1");
    manifest.set_num("m_target", prims->front().m_target);
  }
  {
    auto out = detail::open_out(dir / "manifest");
    manifest.write(out);
  }

  for (std::size_t t = 0; t < seq.length(); ++t) {
    const auto& f = seq.frames[t];
    std::string text;
    text.reserve(f.size() * 64);
    for (std::size_t i = 0; i < f.size(); ++i) {
      const auto& p = f.positions[i];
      text += format_double(p.x()) + ' ' + format_double(p.y()) + ' ' + format_double(p.z());
      if (normals) {
        const auto& n = (*f.normals)[i];
        text += ' ' + format_double(n.x()) + ' ' + format_double(n.y()) + ' ' + format_double(n.z());
      }
      if (labels) text += ' ' + std::to_string((*f.labels)[i]);
      if (prims) text += ' ' + std::to_string((*prims)[t].labels[i]);
      text += '\n';
    }
    auto out = detail::open_out(dir / frame_file_name(t));
    out << text;
    if (prims) {
      auto po = detail::open_out(dir / planes_file_name(t));
      const auto& a = (*prims)[t];
      for (std::size_t j = 0; j < a.planes.size(); ++j) {
        const auto& pl = a.planes[j];
        po << (j + 1) << ' ' << format_double(pl.normal.x()) << ' ' << format_double(pl.normal.y()) << ' '
           << format_double(pl.normal.z()) << ' ' << format_double(pl.offset) << ' '
           << format_double(pl.rms_residual) << '\n';
      }
    }
  }
}

inline SequenceFile read_sequence(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::IoError, "not a directory: " + dir.string());
  const fs::path mpath = dir / "manifest";
  if (!fs::exists(mpath)) throw Error(Errc::MalformedManifest, "missing manifest in " + dir.string());
  KeyValue kv;
  try {
    kv = KeyValue::load(mpath.string(), Errc::MalformedManifest);
  } catch (const Error& e) {
    throw Error(Errc::MalformedManifest, e.what());
  }
  for (const char* key : {"format_version", "L", "N"})
    if (!kv.has(key)) throw Error(Errc::MalformedManifest, std::string("missing key '") + key + "'");
  std::int64_t version = 0, length = 0;
  try {
    version = kv.get_int("format_version");
    length = kv.get_int("L");
  } catch (const Error& e) {
    throw Error(Errc::MalformedManifest, e.what());
  }
  if (version != kFormatVersion)
    throw Error(Errc::MalformedManifest, "unsupported format_version " + std::to_string(version));
  if (length < 1) throw Error(Errc::MalformedManifest, "L must be >= 1");
  const auto counts = detail::parse_counts(kv.get("N"));
  if (counts.size() != static_cast<std::size_t>(length))
    throw Error(Errc::MalformedManifest, "N lists " + std::to_string(counts.size()) + " counts for L=" +
                                             std::to_string(length));
  const bool normals = detail::manifest_flag(kv, "has_normals", true);
  const bool labels = detail::manifest_flag(kv, "has_labels", true);
  const bool prims = detail::manifest_flag(kv, "has_primitives", false);
  std::size_t m_target = 0;
  if (prims) {
    if (!kv.has("m_target")) throw Error(Errc::MalformedManifest, "missing key 'm_target'");
    m_target = static_cast<std::size_t>(kv.get_int("m_target"));
  }

  static const std::regex frame_re(R"(frame_\d{4}\.xyz)");
  std::size_t on_disk = 0;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && std::regex_match(entry.path().filename().string(), frame_re)) ++on_disk;
  if (on_disk != static_cast<std::size_t>(length))
    throw Error(Errc::FrameCountMismatch, "manifest L=" + std::to_string(length) + " but " +
                                              std::to_string(on_disk) + " frame files");

  const std::size_t width = 3 + (normals ? 3 : 0) + (labels ? 1 : 0) + (prims ? 1 : 0);
  SequenceFile out;
  for (std::size_t t = 0; t < static_cast<std::size_t>(length); ++t) {
    const fs::path fpath = dir / frame_file_name(t);
    std::ifstream in(fpath, std::ios::binary);
    if (!in) throw Error(Errc::FrameCountMismatch, "missing " + fpath.filename().string());
    geometry::PointFrame f;
    f.frame_index = static_cast<int>(t);
    if (normals) f.normals.emplace();
    if (labels) f.labels.emplace();
    primitives::PrimitiveAssignment a;
    a.m_target = m_target;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto tok = detail::split_ws(line);
      if (tok.empty()) throw ParseError(lineno, "empty line");
      if (tok.size() != width)
        throw ParseError(lineno, "expected " + std::to_string(width) + " fields, found " +
                                     std::to_string(tok.size()));
      std::size_t k = 0;
      geometry::Vec3 p;
      for (int d = 0; d < 3; ++d) p[d] = detail::parse_num(tok[k++], lineno);
      f.positions.push_back(p);
      if (normals) {
        geometry::Vec3 n;
        for (int d = 0; d < 3; ++d) n[d] = detail::parse_num(tok[k++], lineno);
        f.normals->push_back(n);
      }
      if (labels) f.labels->push_back(detail::parse_label(tok[k++], lineno));
      if (prims) a.labels.push_back(detail::parse_label(tok[k++], lineno));
    }
    if (f.size() != counts[t])
      throw ParseError(lineno + 1, fpath.filename().string() + ": expected " + std::to_string(counts[t]) +
                                       " points, found " + std::to_string(f.size()));
    try {
      geometry::validate(f);
    } catch (const Error& e) {
      throw Error(e.code(), fpath.filename().string() + ": " + e.what());
    }
    if (prims) {
      const fs::path ppath = dir / planes_file_name(t);
      std::ifstream pin(ppath, std::ios::binary);
      if (!pin) throw Error(Errc::IoError, "missing " + ppath.filename().string());
      std::size_t pl_line = 0;
      while (std::getline(pin, line)) {
        ++pl_line;
        const auto tok = detail::split_ws(line);
        if (tok.size() != 6) throw ParseError(pl_line, ppath.filename().string() + ": expected 6 fields");
        if (detail::parse_label(tok[0], pl_line) != static_cast<int>(a.planes.size() + 1))
          throw ParseError(pl_line, "plane ids must count up from 1");
        geometry::PlaneParams pl;
        pl.normal = geometry::Vec3(detail::parse_num(tok[1], pl_line), detail::parse_num(tok[2], pl_line),
                                   detail::parse_num(tok[3], pl_line));
        pl.offset = detail::parse_num(tok[4], pl_line);
        pl.rms_residual = detail::parse_num(tok[5], pl_line);
        a.planes.push_back(pl);
      }
      a.m_actual = a.planes.size();
      primitives::check_invariants(a);
      out.primitives.push_back(std::move(a));
    }
    out.sequence.frames.push_back(std::move(f));
  }
  return out;
}

}  // namespace pptr::data
