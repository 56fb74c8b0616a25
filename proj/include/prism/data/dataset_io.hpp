#pragma once

// On-disk dataset layout.
//
//   manifest.tsv   metadata lines starting with '#', then a header
//                  gene_id chromosome tss expression seq_file sig_file [aux...]
//                  and one row per gene. File paths are relative to the manifest.
//   seq/*.seq      ASCII bases, exactly L characters, no newline.
//   sig/*.prsg     "PRSG" u32 version=1, u32 L, u32 d, L*d float32 LE row-major.

#include <charconv>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "prism/data/record.hpp"
#include "prism/errors.hpp"
#include "prism/numerics/binio.hpp"

namespace prism::data {

inline constexpr std::uint32_t kSignalVersion = 1;
inline constexpr std::string_view kManifestName = "manifest.tsv";

struct DatasetMeta {
  std::string target_transform = "log1p";
  std::string signal_normalization = "p99";
  std::vector<float> signal_scales;
  std::vector<std::string> track_names;
  std::vector<std::string> aux_names;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<GeneRecord> records;
};

/// Shortest decimal text that parses back to the identical float.
inline std::string format_float(float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_float(std::string_view s, float& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline bool parse_int(std::string_view s, std::int64_t& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

inline std::vector<std::string> split_tabs(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = line.find('\t', start);
    out.emplace_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

inline binio::Writer encode_signal_file(const Matrix<float>& S) {
  binio::Writer w;
  w.bytes("PRSG");
  w.u32(kSignalVersion);
  w.u32(static_cast<std::uint32_t>(S.rows()));
  w.u32(static_cast<std::uint32_t>(S.cols()));
  for (Eigen::Index i = 0; i < S.size(); ++i) w.f32(S.data()[i]);
  return w;
}

/// Parse a signal file. Negative or non-finite values are rejected, never clamped.
inline Matrix<float> read_signal_file(binio::Reader r) {
  r.expect_magic("PRSG");
  const auto version = r.u32("version");
  if (version != kSignalVersion) r.fail("unsupported signal version " + std::to_string(version));
  const auto L = r.u32("L");
  const auto d = r.u32("d");
  if (static_cast<std::uint64_t>(L) * d * 4 != r.remaining())
    r.fail("payload is " + std::to_string(r.remaining()) + " bytes, header promises " +
           std::to_string(static_cast<std::uint64_t>(L) * d * 4));
  Matrix<float> S(L, d);
  for (Eigen::Index i = 0; i < S.size(); ++i) {
    const auto at = r.offset();
    const float v = r.f32("signal value");
    if (!std::isfinite(v) || v < 0.0f)
      throw ValidationError(r.name() + " @" + std::to_string(at) + ": signal value " + format_float(v) +
                            " is negative or non-finite");
    S.data()[i] = v;
  }
  return S;
}

inline Matrix<float> load_signal_file(const std::string& path) { return read_signal_file(binio::Reader::open(path)); }

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path, 0, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Write records plus metadata under `dir`; returns the manifest path.
inline std::string save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "seq");
  fs::create_directories(fs::path(dir) / "sig");
  std::set<std::string> ids;
  for (const auto& r : ds.records)
    if (!ids.insert(r.gene_id).second) throw ValidationError("save_dataset: duplicate gene_id " + r.gene_id);

  std::ostringstream m;
  m << "#prism-manifest\t1\n";
  m << "#target_transform\t" << ds.meta.target_transform << "\n";
  m << "#signal_normalization\t" << ds.meta.signal_normalization << "\n";
  m << "#signal_scales";
  for (float s : ds.meta.signal_scales) m << '\t' << format_float(s);
  m << "\n#tracks";
  for (const auto& t : ds.meta.track_names) m << '\t' << t;
  m << "\ngene_id\tchromosome\ttss\texpression\tseq_file\tsig_file";
  const std::size_t k = ds.records.empty() ? ds.meta.aux_names.size() : ds.records.front().aux.size();
  for (std::size_t j = 0; j < k; ++j)
    m << '\t' << (j < ds.meta.aux_names.size() ? ds.meta.aux_names[j] : "aux" + std::to_string(j));
  m << '\n';

  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& r = ds.records[i];
    PRISM_REQUIRE(r.aux.size() == k, "save_dataset: aux width differs for " + r.gene_id);
    char name[32];
    std::snprintf(name, sizeof name, "g%06zu", i);
    const std::string seq_rel = std::string("seq/") + name + ".seq";
    const std::string sig_rel = std::string("sig/") + name + ".prsg";
    {
      std::ofstream out(fs::path(dir) / seq_rel, std::ios::binary | std::ios::trunc);
      const auto bases = decode_sequence(r.X);
      out.write(bases.data(), static_cast<std::streamsize>(bases.size()));
      if (!out) throw std::runtime_error("write failed: " + (fs::path(dir) / seq_rel).string());
    }
    encode_signal_file(r.S).save((fs::path(dir) / sig_rel).string());
    m << r.gene_id << '\t' << r.chromosome << '\t' << r.tss << '\t' << format_float(r.y) << '\t' << seq_rel << '\t'
      << sig_rel;
    for (float a : r.aux) m << '\t' << format_float(a);
    m << '\n';
  }
  const auto manifest = (fs::path(dir) / kManifestName).string();
  std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
  out << m.str();
  if (!out) throw std::runtime_error("write failed: " + manifest);
  return manifest;
}

/// Load a dataset from a manifest path or a directory containing manifest.tsv.
inline Dataset load_dataset(const std::string& manifest_or_dir) {
  namespace fs = std::filesystem;
  fs::path manifest = manifest_or_dir;
  if (fs::is_directory(manifest)) manifest /= kManifestName;
  const std::string mpath = manifest.string();
  const fs::path base = manifest.parent_path();
  const std::string text = read_text_file(mpath);

  Dataset ds;
  std::set<std::string> ids;
  bool have_header = false;
  std::size_t aux_count = 0;
  Eigen::Index L = -1, d = -1;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t line_start = pos;
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (line.front() == '#') {
      const std::string key = fields[0].substr(1);
      if (key == "target_transform" && fields.size() > 1) ds.meta.target_transform = fields[1];
      if (key == "signal_normalization" && fields.size() > 1) ds.meta.signal_normalization = fields[1];
      if (key == "tracks") ds.meta.track_names.assign(fields.begin() + 1, fields.end());
      if (key == "signal_scales")
        for (std::size_t j = 1; j < fields.size(); ++j) {
          float v = 0;
          if (!parse_float(fields[j], v)) throw FormatError(mpath, line_start, "bad signal scale '" + fields[j] + "'");
          ds.meta.signal_scales.push_back(v);
        }
      continue;
    }
    if (!have_header) {
      static const char* expected[] = {"gene_id", "chromosome", "tss", "expression", "seq_file", "sig_file"};
      if (fields.size() < 6) throw FormatError(mpath, line_start, "header needs at least 6 columns");
      for (int j = 0; j < 6; ++j)
        if (fields[j] != expected[j])
          throw FormatError(mpath, line_start, "header column " + std::to_string(j) + " should be '" + expected[j] +
                                                   "', found '" + fields[j] + "'");
      ds.meta.aux_names.assign(fields.begin() + 6, fields.end());
      aux_count = ds.meta.aux_names.size();
      have_header = true;
      continue;
    }
    if (fields.size() != 6 + aux_count)
      throw FormatError(mpath, line_start,
                        "expected " + std::to_string(6 + aux_count) + " columns, found " + std::to_string(fields.size()));
    GeneRecord r;
    r.gene_id = fields[0];
    r.chromosome = fields[1];
    if (r.gene_id.empty()) throw FormatError(mpath, line_start, "empty gene_id");
    if (!ids.insert(r.gene_id).second) throw ValidationError(mpath + ": duplicate gene_id " + r.gene_id);
    if (!parse_int(fields[2], r.tss)) throw FormatError(mpath, line_start, "bad tss '" + fields[2] + "'");
    if (!parse_float(fields[3], r.y) || !std::isfinite(r.y))
      throw FormatError(mpath, line_start, "bad expression '" + fields[3] + "'");
    for (std::size_t j = 0; j < aux_count; ++j) {
      float v = 0;
      if (!parse_float(fields[6 + j], v) || !std::isfinite(v))
        throw FormatError(mpath, line_start, "bad aux value '" + fields[6 + j] + "'");
      r.aux.push_back(v);
    }
    const std::string seq_path = (base / fields[4]).string();
    const std::string bases = read_text_file(seq_path);
    try {
      r.X = encode_sequence(bases);
    } catch (const ParseError& e) {
      throw FormatError(seq_path, e.position(), e.what());
    }
    const std::string sig_path = (base / fields[5]).string();
    r.S = load_signal_file(sig_path);
    if (r.S.rows() != r.X.rows())
      throw FormatError(sig_path, 8, "signal length " + std::to_string(r.S.rows()) + " differs from sequence length " +
                                         std::to_string(r.X.rows()));
    if (L < 0) {
      L = r.X.rows();
      d = r.S.cols();
    } else if (r.X.rows() != L) {
      throw FormatError(seq_path, 0, "window length " + std::to_string(r.X.rows()) + " differs from dataset length " +
                                         std::to_string(L));
    } else if (r.S.cols() != d) {
      throw FormatError(sig_path, 12, "track count " + std::to_string(r.S.cols()) + " differs from dataset track count " +
                                          std::to_string(d));
    }
    ds.records.push_back(std::move(r));
  }
  if (!have_header) throw FormatError(mpath, text.size(), "missing header line");
  return ds;
}

}  // namespace prism::data
