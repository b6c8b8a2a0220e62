#include "adattn/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace adattn {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'N', '1'};

[[noreturn]] void fail(const std::filesystem::path& path, size_t offset,
                       const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what + " (byte offset " +
                           std::to_string(offset) + ")");
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 24));
}

uint32_t get_u32(const std::vector<uint8_t>& b, size_t at) {
  return uint32_t(b[at]) | uint32_t(b[at + 1]) << 8 | uint32_t(b[at + 2]) << 16 |
         uint32_t(b[at + 3]) << 24;
}

uint64_t get_u64(const std::vector<uint8_t>& b, size_t at) {
  return uint64_t(get_u32(b, at)) | uint64_t(get_u32(b, at + 4)) << 32;
}

}  // namespace

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());

  if (bytes.size() < 9) fail(path, bytes.size(), "truncated header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(path, 0, "bad magic");
  const uint8_t dt = bytes[4];
  if (dt > 1) fail(path, 4, "unknown dtype byte");
  const uint32_t rank = get_u32(bytes, 5);
  if (rank < 1 || rank > 3) fail(path, 5, "rank must be 1..3");
  if (bytes.size() < 9 + 4 * size_t(rank)) fail(path, bytes.size(), "truncated dims");

  Tensor t;
  t.dtype = Dtype(dt);
  uint64_t count = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    const uint32_t d = get_u32(bytes, 9 + 4 * size_t(i));
    if (d < 1) fail(path, 9 + 4 * size_t(i), "zero dimension");
    t.dims.push_back(d);
    count *= d;
  }
  if (count > (uint64_t(1) << 32)) fail(path, 9, "tensor too large");

  const size_t payload_at = 9 + 4 * size_t(rank);
  const size_t width = dt == 0 ? 4 : 8;
  const size_t need = payload_at + count * width;
  if (bytes.size() != need)
    fail(path, std::min(bytes.size(), need), "payload size mismatch");

  t.values.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    const size_t at = payload_at + i * width;
    if (dt == 0)
      t.values[i] = double(std::bit_cast<float>(get_u32(bytes, at)));
    else
      t.values[i] = std::bit_cast<double>(get_u64(bytes, at));
  }
  return t;
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  if (t.dims.size() < 1 || t.dims.size() > 3)
    throw std::invalid_argument("save_tensor: rank must be 1..3");
  if (t.count() != t.values.size())
    throw std::invalid_argument("save_tensor: dims disagree with value count");

  std::vector<uint8_t> bytes;
  bytes.reserve(9 + 4 * t.dims.size() + 8 * t.values.size());
  bytes.insert(bytes.end(), kMagic, kMagic + 4);
  bytes.push_back(uint8_t(t.dtype));
  put_u32(bytes, uint32_t(t.dims.size()));
  for (uint32_t d : t.dims) put_u32(bytes, d);
  for (double v : t.values) {
    if (t.dtype == Dtype::kF32) {
      put_u32(bytes, std::bit_cast<uint32_t>(float(v)));
    } else {
      const uint64_t u = std::bit_cast<uint64_t>(v);
      put_u32(bytes, uint32_t(u));
      put_u32(bytes, uint32_t(u >> 32));
    }
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp.string() + ": cannot open for write");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace adattn
