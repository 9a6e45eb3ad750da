/* Copyright 2026 The teedkit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "teed/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace teed {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

std::uint32_t crc32_of(const char* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", v);
  return buf;
}

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

Shape parse_shape(const std::string& text) {
  Shape shape;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, 'x')) shape.push_back(std::stoi(part));
  return shape;
}

template <typename Src, typename T>
Tensor<T> decode(const char* bytes, const Shape& shape) {
  std::vector<Src> raw(shape_numel(shape));
  std::memcpy(raw.data(), bytes, raw.size() * sizeof(Src));
  std::vector<T> values(raw.begin(), raw.end());
  return Tensor<T>(shape, std::move(values));
}

}  // namespace

template <typename T>
void write_archive(const std::filesystem::path& path, const Archive<T>& archive) {
  std::string manifest;
  std::size_t offset = 0;
  for (const auto& [key, value] : archive.meta) {
    if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ContractError("checkpoint metadata must not contain spaces in keys or newlines");
    }
    manifest += "meta " + key + " " + value + "\n";
  }
  for (const auto& e : archive.tensors.entries()) {
    if (e.name.find_first_of(" \n") != std::string::npos) {
      throw ContractError("tensor name contains whitespace: " + e.name);
    }
    std::string dims;
    for (std::size_t i = 0; i < e.tensor.rank(); ++i) {
      dims += (i ? "x" : "") + std::to_string(e.tensor.dim(i));
    }
    const std::size_t bytes = e.tensor.size() * sizeof(T);
    manifest += "tensor " + e.name + " " + dtype_name<T>() + " " + dims + " " +
                std::to_string(offset) + " " + std::to_string(bytes) + " " +
                hex32(crc32_of(reinterpret_cast<const char*>(e.tensor.data()), bytes)) + "\n";
    offset += bytes;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kCheckpointMagic, kCheckpointMagicSize);
  out << "manifest " << manifest.size() << " " << hex32(crc32_of(manifest.data(), manifest.size()))
      << "\n";
  out << manifest;
  for (const auto& e : archive.tensors.entries()) {
    out.write(reinterpret_cast<const char*>(e.tensor.data()),
              static_cast<std::streamsize>(e.tensor.size() * sizeof(T)));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

template <typename T>
Archive<T> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (content.size() < kCheckpointMagicSize) {
    throw ChecksumError(path.string() + ": truncated before the header");
  }
  if (std::memcmp(content.data(), kCheckpointMagic, kCheckpointMagicSize - 1) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  if (content[kCheckpointMagicSize - 1] != kCheckpointMagic[kCheckpointMagicSize - 1]) {
    throw VersionError(path.string() + ": unknown format version " +
                       std::to_string(static_cast<int>(content[kCheckpointMagicSize - 1])));
  }

  std::size_t pos = kCheckpointMagicSize;
  const std::size_t header_end = content.find('\n', pos);
  if (header_end == std::string::npos) throw ChecksumError(path.string() + ": truncated header");
  std::istringstream header(content.substr(pos, header_end - pos));
  std::string tag, crc_text;
  std::size_t manifest_size = 0;
  if (!(header >> tag >> manifest_size >> crc_text) || tag != "manifest") {
    throw CheckpointError(path.string() + ": malformed header");
  }
  pos = header_end + 1;
  if (content.size() - pos < manifest_size) throw ChecksumError(path.string() + ": truncated manifest");
  const std::string manifest = content.substr(pos, manifest_size);
  if (hex32(crc32_of(manifest.data(), manifest.size())) != crc_text) {
    throw ChecksumError(path.string() + ": manifest checksum mismatch");
  }
  const char* payload = content.data() + pos + manifest_size;
  const std::size_t payload_size = content.size() - pos - manifest_size;

  Archive<T> archive;
  std::istringstream lines(manifest);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "meta") {
      std::string key, value;
      fields >> key;
      std::getline(fields, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      archive.meta[key] = value;
      continue;
    }
    if (kind != "tensor") throw CheckpointError(path.string() + ": unknown manifest entry " + kind);
    std::string name, dtype, dims, crc;
    std::size_t offset = 0, bytes = 0;
    if (!(fields >> name >> dtype >> dims >> offset >> bytes >> crc)) {
      throw CheckpointError(path.string() + ": malformed manifest line: " + line);
    }
    if (offset > payload_size || payload_size - offset < bytes) {
      throw ChecksumError(path.string() + ": tensor " + name + " truncated");
    }
    if (hex32(crc32_of(payload + offset, bytes)) != crc) {
      throw ChecksumError(path.string() + ": checksum mismatch for " + name);
    }
    const Shape shape = parse_shape(dims);
    const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
    if (width == 0) throw CheckpointError(path.string() + ": unknown dtype " + dtype);
    if (shape_numel(shape) * width != bytes) {
      throw CheckpointError(path.string() + ": size mismatch for " + name);
    }
    archive.tensors.add(name, width == 4 ? decode<float, T>(payload + offset, shape)
                                         : decode<double, T>(payload + offset, shape));
  }
  return archive;
}

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const std::filesystem::path& path) {
  write_archive(path, Archive<T>{params, {}});
}

template <typename T>
ParamStore<T> extract_params(const ParamStore<T>& tensors, const ModelConfig& config) {
  ParamStore<T> params;
  for (const auto& layer : layer_table(config)) {
    for (const char* suffix : {".weight", ".bias"}) {
      const std::string name = layer.name + suffix;
      if (!tensors.contains(name)) throw MissingParameterError("checkpoint lacks parameter " + name);
      const Tensor<T>& t = tensors.at(name);
      const Shape expected =
          std::string(suffix) == ".weight" ? layer.weight_shape : Shape{layer.bias_size};
      if (t.shape() != expected) {
        throw CheckpointError("parameter " + name + " has shape " + shape_str(t.shape()) +
                              ", expected " + shape_str(expected));
      }
      params.add(name, t);
    }
  }
  return params;
}

template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig& config) {
  return extract_params(read_archive<T>(path).tensors, config);
}

#define TEED_INSTANTIATE_CHECKPOINT(T)                                                   \
  template void write_archive(const std::filesystem::path&, const Archive<T>&);         \
  template Archive<T> read_archive(const std::filesystem::path&);                       \
  template void save_checkpoint(const ParamStore<T>&, const std::filesystem::path&);    \
  template ParamStore<T> extract_params(const ParamStore<T>&, const ModelConfig&);      \
  template ParamStore<T> load_checkpoint(const std::filesystem::path&, const ModelConfig&);

TEED_INSTANTIATE_CHECKPOINT(float)
TEED_INSTANTIATE_CHECKPOINT(double)

}  // namespace teed
