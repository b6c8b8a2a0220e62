#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace adattn {

enum class Dtype : uint8_t { kF32 = 0, kF64 = 1 };

// In-memory tensor. Values are always held as doubles; `dtype` records the
// on-disk storage width.
struct Tensor {
  Dtype dtype = Dtype::kF64;
  std::vector<uint32_t> dims;
  std::vector<double> values;

  size_t count() const {
    size_t c = 1;
    for (uint32_t d : dims) c *= d;
    return c;
  }
};

// Binary format: magic "ATN1", one dtype byte (0 = f32, 1 = f64), rank as
// u32, then rank u32 dims, then the payload row-major little-endian. Rank
// must be 1, 2 or 3. Parse errors report the byte offset. Writes go to a
// temp file in the same directory and rename into place, so a failed write
// never leaves a partial tensor behind.
Tensor load_tensor(const std::filesystem::path& path);
void save_tensor(const Tensor& t, const std::filesystem::path& path);

}  // namespace adattn
