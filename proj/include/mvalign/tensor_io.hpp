#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mvalign/geometry.hpp"

namespace mvalign {

/// Tensor container: a JSON header at <prefix>.json describing dtype, shape,
/// row-major order and little-endian byte order, plus the raw payload at
/// <prefix>.bin.
enum class Dtype { f32, u8 };

struct TensorData {
  Dtype dtype = Dtype::f32;
  std::vector<std::size_t> shape;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;

  std::size_t element_count() const;
};

/// Writes <prefix>.json and <prefix>.bin atomically (temp file + rename).
void write_tensor(const std::filesystem::path& prefix, const TensorData& tensor);

/// Reads and validates a tensor container; payload length must match the
/// header exactly. Throws IoError on any mismatch.
TensorData read_tensor(const std::filesystem::path& prefix);

void atomic_write_file(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

// Conversions between maps/poses and tensors. Point maps are [H, W, 3] f32,
// scalar maps [H, W] f32, masks [H, W] u8, poses [4, 4] f32 row-major.
TensorData to_tensor(const PointMap& map);
TensorData to_tensor(const ScalarMap& map);
TensorData to_tensor(const MaskMap& map);
TensorData to_tensor(const PoseSE3& pose);
PointMap point_map_from_tensor(const TensorData& t);
ScalarMap scalar_map_from_tensor(const TensorData& t);
MaskMap mask_map_from_tensor(const TensorData& t);
PoseSE3 pose_from_tensor(const TensorData& t);

}  // namespace mvalign
