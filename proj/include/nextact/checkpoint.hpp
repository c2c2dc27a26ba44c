#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "nextact/io.hpp"
#include "nextact/nn.hpp"

namespace nextact {

// Flat checkpoint container: magic, format version, an opaque config text
// blob, then (name, shape, float32 data) triples in registry order. All
// integers and floats are little-endian.
namespace ckpt {

constexpr char kMagic[8] = {'N', 'X', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <class R>
void save(const std::string& path, const ParamSet<R>& params, const std::string& config_blob) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 8);
  lio::write_u32(os, kVersion);
  lio::write_str(os, config_blob);
  lio::write_u32(os, static_cast<uint32_t>(params.items().size()));
  for (const auto& [name, t] : params.items()) {
    lio::write_str(os, name);
    lio::write_u32(os, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) lio::write_u32(os, static_cast<uint32_t>(d));
    for (R v : t.data()) lio::write_f32(os, static_cast<float>(v));
  }
  if (!os) throw IoError("write failure on checkpoint: " + path);
}

namespace detail {
inline std::string read_header(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw ValidationError("not a checkpoint file: " + path);
  const uint32_t version = lio::read_u32(is);
  if (version != kVersion)
    throw ValidationError("unsupported checkpoint version " + std::to_string(version) + " in " +
                          path);
  return lio::read_str(is);
}
}  // namespace detail

// Loads values into an already constructed ParamSet; names and shapes must
// match exactly (no missing and no extra parameters). Returns the stored
// config blob.
template <class R>
std::string load(const std::string& path, ParamSet<R>& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint for reading: " + path);
  std::string blob = detail::read_header(is, path);
  const uint32_t count = lio::read_u32(is);
  if (count != params.items().size())
    throw ValidationError("checkpoint holds " + std::to_string(count) + " parameters, model has " +
                          std::to_string(params.items().size()));
  for (uint32_t idx = 0; idx < count; ++idx) {
    const std::string name = lio::read_str(is);
    const uint32_t rank = lio::read_u32(is);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(lio::read_u32(is));
    Tensor<R>* p = params.find(name);
    if (!p) throw ValidationError("checkpoint parameter '" + name + "' not present in model");
    if (p->shape() != shape)
      throw ShapeError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) +
                       ", model expects " + shape_str(p->shape()));
    for (auto& v : p->data()) v = static_cast<R>(lio::read_f32(is));
    if (!is) throw IoError("truncated checkpoint: " + path);
  }
  return blob;
}

// Reads just the config blob without needing a model.
inline std::string peek_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint for reading: " + path);
  std::string blob = detail::read_header(is, path);
  if (!is) throw IoError("truncated checkpoint: " + path);
  return blob;
}

}  // namespace ckpt
}  // namespace nextact
