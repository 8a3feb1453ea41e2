#include "mvalign/tensor_io.hpp"

#include <cstring>
#include <fstream>

#include "json.hpp"

namespace mvalign {

namespace {

using nlohmann::json;

std::string dtype_name(Dtype d) { return d == Dtype::f32 ? "f32" : "u8"; }

Dtype dtype_from_name(const std::string& name) {
  if (name == "f32") return Dtype::f32;
  if (name == "u8") return Dtype::u8;
  throw IoError("tensor header: unsupported dtype \"" + name + "\"");
}

std::size_t dtype_size(Dtype d) { return d == Dtype::f32 ? 4 : 1; }

void atomic_write_bytes(const std::filesystem::path& path, const char* data, std::size_t size) {
  std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::size_t TensorData::element_count() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

void write_tensor(const std::filesystem::path& prefix, const TensorData& tensor) {
  const std::size_t count = tensor.element_count();
  const std::size_t stored = tensor.dtype == Dtype::f32 ? tensor.f32.size() : tensor.u8.size();
  if (count != stored) {
    throw IoError("write_tensor: shape implies " + std::to_string(count) + " elements but " +
                  std::to_string(stored) + " are stored");
  }
  json header;
  header["dtype"] = dtype_name(tensor.dtype);
  header["shape"] = tensor.shape;
  header["order"] = "row-major";
  header["endianness"] = "little";
  atomic_write_file(std::filesystem::path(prefix.string() + ".json"), header.dump(2) + "\n");

  const char* data = tensor.dtype == Dtype::f32
                         ? reinterpret_cast<const char*>(tensor.f32.data())
                         : reinterpret_cast<const char*>(tensor.u8.data());
  atomic_write_bytes(std::filesystem::path(prefix.string() + ".bin"), data,
                     count * dtype_size(tensor.dtype));
}

TensorData read_tensor(const std::filesystem::path& prefix) {
  const std::filesystem::path header_path(prefix.string() + ".json");
  const std::filesystem::path payload_path(prefix.string() + ".bin");

  json header;
  try {
    header = json::parse(read_file(header_path));
  } catch (const json::exception& e) {
    throw IoError("tensor header " + header_path.string() + ": " + e.what());
  }
  TensorData t;
  try {
    t.dtype = dtype_from_name(header.at("dtype").get<std::string>());
    t.shape = header.at("shape").get<std::vector<std::size_t>>();
    if (header.at("order").get<std::string>() != "row-major") {
      throw IoError("tensor header: only row-major order is supported");
    }
    if (header.at("endianness").get<std::string>() != "little") {
      throw IoError("tensor header: only little-endian payloads are supported");
    }
  } catch (const json::exception& e) {
    throw IoError("tensor header " + header_path.string() + ": " + e.what());
  }

  std::ifstream in(payload_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + payload_path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t expected = t.element_count() * dtype_size(t.dtype);
  if (bytes.size() != expected) {
    throw IoError("tensor payload " + payload_path.string() + ": expected " +
                  std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
  }
  if (t.dtype == Dtype::f32) {
    t.f32.resize(t.element_count());
    std::memcpy(t.f32.data(), bytes.data(), bytes.size());
  } else {
    t.u8.assign(bytes.begin(), bytes.end());
  }
  return t;
}

void atomic_write_file(const std::filesystem::path& path, const std::string& contents) {
  atomic_write_bytes(path, contents.data(), contents.size());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

TensorData to_tensor(const PointMap& map) {
  TensorData t;
  t.dtype = Dtype::f32;
  t.shape = {static_cast<std::size_t>(map.height), static_cast<std::size_t>(map.width), 3};
  t.f32.resize(static_cast<std::size_t>(map.size()) * 3);
  for (int p = 0; p < map.size(); ++p) {
    for (int c = 0; c < 3; ++c) {
      t.f32[static_cast<std::size_t>(p) * 3 + c] = static_cast<float>(map.points(c, p));
    }
  }
  return t;
}

TensorData to_tensor(const ScalarMap& map) {
  TensorData t;
  t.dtype = Dtype::f32;
  t.shape = {static_cast<std::size_t>(map.height), static_cast<std::size_t>(map.width)};
  t.f32.resize(static_cast<std::size_t>(map.size()));
  for (int p = 0; p < map.size(); ++p) t.f32[p] = static_cast<float>(map.values[p]);
  return t;
}

TensorData to_tensor(const MaskMap& map) {
  TensorData t;
  t.dtype = Dtype::u8;
  t.shape = {static_cast<std::size_t>(map.height), static_cast<std::size_t>(map.width)};
  t.u8 = map.values;
  return t;
}

TensorData to_tensor(const PoseSE3& pose) {
  TensorData t;
  t.dtype = Dtype::f32;
  t.shape = {4, 4};
  const Mat4 m = pose.matrix();
  t.f32.resize(16);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) t.f32[r * 4 + c] = static_cast<float>(m(r, c));
  }
  return t;
}

PointMap point_map_from_tensor(const TensorData& t) {
  if (t.dtype != Dtype::f32 || t.shape.size() != 3 || t.shape[2] != 3) {
    throw IoError("point map tensor must be f32 with shape [H, W, 3]");
  }
  PointMap m = PointMap::zeros(static_cast<int>(t.shape[1]), static_cast<int>(t.shape[0]));
  for (int p = 0; p < m.size(); ++p) {
    for (int c = 0; c < 3; ++c) m.points(c, p) = t.f32[static_cast<std::size_t>(p) * 3 + c];
  }
  return m;
}

ScalarMap scalar_map_from_tensor(const TensorData& t) {
  if (t.dtype != Dtype::f32 || t.shape.size() != 2) {
    throw IoError("scalar map tensor must be f32 with shape [H, W]");
  }
  ScalarMap m = ScalarMap::constant(static_cast<int>(t.shape[1]), static_cast<int>(t.shape[0]), 0.0);
  for (int p = 0; p < m.size(); ++p) m.values[p] = t.f32[p];
  return m;
}

MaskMap mask_map_from_tensor(const TensorData& t) {
  if (t.dtype != Dtype::u8 || t.shape.size() != 2) {
    throw IoError("mask tensor must be u8 with shape [H, W]");
  }
  MaskMap m = MaskMap::constant(static_cast<int>(t.shape[1]), static_cast<int>(t.shape[0]), false);
  m.values = t.u8;
  return m;
}

PoseSE3 pose_from_tensor(const TensorData& t) {
  if (t.dtype != Dtype::f32 || t.shape != std::vector<std::size_t>{4, 4}) {
    throw IoError("pose tensor must be f32 with shape [4, 4]");
  }
  Mat4 m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = t.f32[r * 4 + c];
  }
  return PoseSE3::from_matrix(m);
}

}  // namespace mvalign
