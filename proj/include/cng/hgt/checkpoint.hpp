#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cng/core/layers.hpp"
#include "cng/core/tensor.hpp"

namespace cng {

inline constexpr int kCheckpointFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

// A single file: 8-byte magic "CNGCKPT\0", little-endian u64 manifest
// length, the JSON manifest, then every tensor as contiguous little-endian
// float32 in manifest order.
struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::vector<NamedTensor> tensors;

  const Tensor& tensor(const std::string& name) const;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint checkpoint_from_store(std::string kind, nlohmann::json config, const ParameterStore& store);
// Copies tensors into a store with matching names and shapes.
void restore_store(ParameterStore& store, const Checkpoint& ckpt);
// Rounds every parameter to the nearest float32 so that the in-memory model
// and a reloaded checkpoint compute the same values.
void round_to_float32(ParameterStore& store);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace cng
