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

#ifndef TEED_CHECKPOINT_HPP_
#define TEED_CHECKPOINT_HPP_

#include <filesystem>
#include <map>
#include <string>

#include "teed/errors.hpp"
#include "teed/model.hpp"

namespace teed {

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};
class ChecksumError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class VersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class MissingParameterError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// Leading bytes of every checkpoint; the last byte is the format version.
inline constexpr char kCheckpointMagic[] = "TEEDCKPT\x01";
inline constexpr std::size_t kCheckpointMagicSize = 9;

/// Named tensors plus string metadata. File layout:
///
///   TEEDCKPT\x01
///   manifest <bytes> <crc32>\n
///   meta <key> <value>\n                                   (any number)
///   tensor <name> <f32|f64> <d0xd1x..> <offset> <bytes> <crc32>\n
///   <raw little-endian tensor data, offsets relative to here>
template <typename T>
struct Archive {
  ParamStore<T> tensors;
  std::map<std::string, std::string> meta;
};

template <typename T>
void write_archive(const std::filesystem::path& path, const Archive<T>& archive);

/// Tensors stored in the other precision are converted to T.
template <typename T>
Archive<T> read_archive(const std::filesystem::path& path);

template <typename T>
void save_checkpoint(const ParamStore<T>& params, const std::filesystem::path& path);

/// Loads the parameters of `config` from `path`. Extra entries (optimizer
/// state) are ignored; a missing layer raises MissingParameterError.
template <typename T>
ParamStore<T> load_checkpoint(const std::filesystem::path& path, const ModelConfig& config = {});

/// Restricts an archive to the parameters of `config`, in layer order.
template <typename T>
ParamStore<T> extract_params(const ParamStore<T>& tensors, const ModelConfig& config);

}  // namespace teed

#endif  // TEED_CHECKPOINT_HPP_
