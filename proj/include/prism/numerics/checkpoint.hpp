#pragma once

// Checkpoint files.
//
//   PRCK: "PRCK" u32 version=1, then until end of file, per entry:
//         u32 name_len, name bytes (UTF-8), u32 rank, u32 dims[rank],
//         product(dims) little-endian float32 values (row-major).
//   PRMO: "PRMO" u32 version=1, u64 optimizer step, then per entry:
//         u32 name_len, name, u32 rank, u32 dims[rank], first moments (f32),
//         second moments (f32).
//
// Parameters and batch-norm running statistics are both stored as PRCK
// entries; names are unique within a file.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "prism/errors.hpp"
#include "prism/numerics/binio.hpp"
#include "prism/numerics/optim.hpp"
#include "prism/numerics/tensor.hpp"

namespace prism {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<float> values;
  std::uint64_t offset = 0;  // where the entry starts in the file
};

namespace detail {

inline void write_header(binio::Writer& w, const std::string& name, const Shape& shape) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.bytes(name);
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.u32(d);
}

template <typename T>
void write_values(binio::Writer& w, const Matrix<T>& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) w.f32(static_cast<float>(m.data()[i]));
}

inline std::pair<std::string, Shape> read_header(binio::Reader& r) {
  const auto len = r.u32("name length");
  if (len == 0 || len > 4096) r.fail("implausible name length " + std::to_string(len));
  std::string name = r.bytes(len, "name");
  const auto rank = r.u32("rank");
  if (rank > 8) r.fail("implausible rank " + std::to_string(rank));
  Shape shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32("dimension"));
  if (shape_size(shape) * 4 > r.remaining()) r.fail("entry " + name + " runs past end of file");
  return {std::move(name), std::move(shape)};
}

}  // namespace detail

template <typename T>
binio::Writer encode_checkpoint(const ParamList<T>& params, const BufferList<T>& buffers) {
  binio::Writer w;
  w.bytes("PRCK");
  w.u32(kCheckpointVersion);
  for (auto* p : params) {
    detail::write_header(w, p->name(), p->shape());
    detail::write_values(w, p->value());
  }
  for (auto* b : buffers) {
    detail::write_header(w, b->name, b->shape);
    detail::write_values(w, b->value);
  }
  return w;
}

template <typename T>
void save_checkpoint(const std::string& path, const ParamList<T>& params, const BufferList<T>& buffers) {
  encode_checkpoint(params, buffers).save(path);
}

inline std::vector<CheckpointEntry> read_checkpoint(binio::Reader r) {
  r.expect_magic("PRCK");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  std::vector<CheckpointEntry> entries;
  std::set<std::string> seen;
  while (!r.at_end()) {
    CheckpointEntry e;
    e.offset = r.offset();
    auto [name, shape] = detail::read_header(r);
    if (!seen.insert(name).second) r.fail("duplicate entry " + name);
    e.name = std::move(name);
    e.shape = std::move(shape);
    const auto n = shape_size(e.shape);
    e.values.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) e.values[i] = r.f32("values");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline std::vector<CheckpointEntry> load_checkpoint_file(const std::string& path) {
  return read_checkpoint(binio::Reader::open(path));
}

/// Copy checkpoint entries into live parameters and buffers. Every target must
/// be present with an identical shape, and the file may not carry extras.
template <typename T>
void apply_checkpoint(const std::string& file, const std::vector<CheckpointEntry>& entries,
                      const ParamList<T>& params, const BufferList<T>& buffers) {
  std::map<std::string, const CheckpointEntry*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;
  std::size_t used = 0;
  auto assign = [&](const std::string& name, const Shape& shape, Matrix<T>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError(file, 0, "missing entry " + name);
    const auto& e = *it->second;
    if (e.shape != shape) throw FormatError(file, e.offset, "shape mismatch for " + name);
    for (Eigen::Index i = 0; i < dst.size(); ++i) dst.data()[i] = static_cast<T>(e.values[i]);
    ++used;
  };
  for (auto* p : params) assign(p->name(), p->shape(), p->value());
  for (auto* b : buffers) assign(b->name, b->shape, b->value);
  if (used != entries.size()) {
    std::set<std::string> known;
    for (auto* p : params) known.insert(p->name());
    for (auto* b : buffers) known.insert(b->name);
    for (const auto& e : entries)
      if (!known.count(e.name)) throw FormatError(file, e.offset, "unexpected entry " + e.name);
  }
}

template <typename T>
void load_checkpoint(const std::string& path, const ParamList<T>& params, const BufferList<T>& buffers) {
  apply_checkpoint(path, load_checkpoint_file(path), params, buffers);
}

template <typename T>
void save_moments(const std::string& path, const ParamList<T>& params, const Adam<T>& adam) {
  binio::Writer w;
  w.bytes("PRMO");
  w.u32(kCheckpointVersion);
  w.u64(static_cast<std::uint64_t>(adam.steps_taken()));
  const auto& m = adam.first_moments();
  const auto& v = adam.second_moments();
  for (std::size_t i = 0; i < params.size(); ++i) {
    detail::write_header(w, params[i]->name(), params[i]->shape());
    if (i < m.size()) {
      detail::write_values(w, m[i]);
      detail::write_values(w, v[i]);
    } else {
      for (Eigen::Index k = 0; k < 2 * params[i]->size(); ++k) w.f32(0.0f);
    }
  }
  w.save(path);
}

template <typename T>
void load_moments(const std::string& path, const ParamList<T>& params, Adam<T>& adam) {
  auto r = binio::Reader::open(path);
  r.expect_magic("PRMO");
  const auto version = r.u32("version");
  if (version != kCheckpointVersion) r.fail("unsupported moments version " + std::to_string(version));
  const auto steps = static_cast<std::int64_t>(r.u64("step"));
  std::vector<Matrix<T>> m, v;
  for (auto* p : params) {
    const auto at = r.offset();
    auto [name, shape] = detail::read_header(r);
    if (name != p->name() || shape != p->shape()) throw FormatError(path, at, "moments do not match " + p->name());
    Matrix<T> mm(p->value().rows(), p->value().cols()), vv(p->value().rows(), p->value().cols());
    for (Eigen::Index k = 0; k < mm.size(); ++k) mm.data()[k] = static_cast<T>(r.f32("first moment"));
    for (Eigen::Index k = 0; k < vv.size(); ++k) vv.data()[k] = static_cast<T>(r.f32("second moment"));
    m.push_back(std::move(mm));
    v.push_back(std::move(vv));
  }
  if (!r.at_end()) r.fail("trailing bytes after last moment entry");
  adam.restore(steps, std::move(m), std::move(v));
}

}  // namespace prism
