#pragma once

// "PMAN" tensor container. Layout, all integers little-endian:
//   magic "PMAN" | u32 version | u32 tensor count |
//   per tensor: u32 name length | UTF-8 name | u32 ndim | u32 dims... |
//               f32 values in row-major order

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pman/ad/parameters.hpp"
#include "pman/ad/tensor.hpp"

namespace pman::ad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor<float>>;

std::vector<std::uint8_t> encode_checkpoint(const TensorMap& tensors);
/// Throws FormatError naming the byte offset of the first problem.
TensorMap decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::filesystem::path& path);

/// Parameters and buffers flattened into one map ("param:" and "buffer:"
/// prefixes keep the two namespaces apart).
TensorMap to_tensor_map(const ParameterStore<float>& store, const std::string& prefix = {});
/// Loads every matching entry into the store; shapes must agree.
void load_into(ParameterStore<float>& store, const TensorMap& tensors, const std::string& prefix = {});

}  // namespace pman::ad
