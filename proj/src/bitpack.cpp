#include "adattn/bitpack.hpp"

#include <stdexcept>

namespace adattn {

int find_nth_set(uint32_t word, int n) {
  if (n < 0 || n >= std::popcount(word)) return -1;
  int pos = 0;
  uint32_t w = word;
  for (int half = 16; half >= 1; half >>= 1) {
    const int pc = std::popcount(w & ((1u << half) - 1));
    if (n >= pc) {
      n -= pc;
      pos += half;
      w >>= half;
    }
  }
  return pos;
}

int popcount_portable(uint32_t w) {
  w = w - ((w >> 1) & 0x55555555u);
  w = (w & 0x33333333u) + ((w >> 2) & 0x33333333u);
  w = (w + (w >> 4)) & 0x0f0f0f0fu;
  return int((w * 0x01010101u) >> 24);
}

int find_nth_set_portable(uint32_t word, int n) {
  if (n < 0 || n >= popcount_portable(word)) return -1;
  uint32_t w = word;
  while (n-- > 0) w &= w - 1;  // strip the n lowest set bits
  static const int kDeBruijn[32] = {0,  1,  28, 2,  29, 14, 24, 3,  30, 22, 20,
                                    15, 25, 17, 4,  8,  31, 27, 13, 23, 21, 19,
                                    16, 7,  26, 12, 18, 6,  11, 5,  10, 9};
  return kDeBruijn[((w & (0u - w)) * 0x077CB531u) >> 27];
}

uint64_t packed_capacity(int word_bits, int bins, int block_cols) {
  if (bins <= 0 || word_bits % bins != 0)
    throw std::invalid_argument("packed_capacity: bins must divide word_bits");
  const int b = word_bits / bins;
  if (b < 4 || b > 32)
    throw std::invalid_argument("packed_capacity: bits per bin out of range");
  return uint64_t(block_cols) * ((uint64_t(1) << b) - 1);
}

int flush_schedule(int t_c, int bits_per_bin) {
  if (t_c < 1 || bits_per_bin < 1)
    throw std::invalid_argument("flush_schedule: bad arguments");
  const uint64_t per = (uint64_t(1) << bits_per_bin) - 1;
  return int((uint64_t(t_c) + per - 1) / per);
}

PackedHistogramAcc::PackedHistogramAcc(int word_bits, int bins)
    : word_bits_(word_bits), bins_(bins) {
  if (word_bits != 32 && word_bits != 64 && word_bits != 128)
    throw std::invalid_argument("PackedHistogramAcc: word_bits must be 32, 64 or 128");
  if (bins <= 0 || word_bits % bins != 0)
    throw std::invalid_argument("PackedHistogramAcc: bins must divide word_bits");
  bits_per_bin_ = word_bits / bins;
  if (bits_per_bin_ < 4)
    throw std::invalid_argument("PackedHistogramAcc: needs at least 4 bits per bin");
  bin_max_ = bits_per_bin_ >= 64 ? ~uint64_t(0) : (uint64_t(1) << bits_per_bin_) - 1;
}

void PackedHistogramAcc::increment(int bin) {
  if (bin < 0 || bin >= bins_)
    throw std::invalid_argument("PackedHistogramAcc: bin out of range");
  const int shift = bin * bits_per_bin_;
  uint64_t& w = shift < 64 ? lo_ : hi_;
  const int s = shift < 64 ? shift : shift - 64;
  if (((w >> s) & bin_max_) == bin_max_)
    throw std::overflow_error("PackedHistogramAcc: bin saturated");
  w += uint64_t(1) << s;
}

std::vector<uint32_t> PackedHistogramAcc::extract() const {
  std::vector<uint32_t> out(bins_);
  for (int k = 0; k < bins_; ++k) {
    const int shift = k * bits_per_bin_;
    const uint64_t w = shift < 64 ? lo_ : hi_;
    const int s = shift < 64 ? shift : shift - 64;
    out[k] = uint32_t((w >> s) & bin_max_);
  }
  return out;
}

FlushAccumulator::FlushAccumulator(int rows, int bins) : rows_(rows), bins_(bins) {
  if (rows < 1 || bins < 1)
    throw std::invalid_argument("FlushAccumulator: bad dimensions");
  counts_.assign(size_t(rows) * bins, 0);
}

void FlushAccumulator::flush_from(PackedHistogramAcc& acc, int row) {
  if (row < 0 || row >= rows_)
    throw std::invalid_argument("FlushAccumulator: row out of range");
  if (acc.bins() != bins_)
    throw std::invalid_argument("FlushAccumulator: bin count mismatch");
  const std::vector<uint32_t> c = acc.extract();
  uint64_t* dst = counts_.data() + size_t(row) * bins_;
  for (int k = 0; k < bins_; ++k) dst[k] += c[k];
  acc.reset();
}

PackedBlockMask::PackedBlockMask(int t_r, int t_c)
    : t_r_(t_r), t_c_(t_c), words_per_row_((t_c + 31) / 32) {
  if (t_r < 1 || t_c < 1)
    throw std::invalid_argument("PackedBlockMask: bad dimensions");
  words_.assign(size_t(t_r) * words_per_row_, 0);
}

void PackedBlockMask::set(int i, int j) {
  if (i < 0 || i >= t_r_ || j < 0 || j >= t_c_)
    throw std::invalid_argument("PackedBlockMask: index out of range");
  words_[size_t(i) * words_per_row_ + j / 32] |= uint32_t(1) << (j % 32);
}

bool PackedBlockMask::test(int i, int j) const {
  if (i < 0 || i >= t_r_ || j < 0 || j >= t_c_)
    throw std::invalid_argument("PackedBlockMask: index out of range");
  return (words_[size_t(i) * words_per_row_ + j / 32] >> (j % 32)) & 1u;
}

int PackedBlockMask::row_popcount(int i) const {
  const uint32_t* row = words_.data() + size_t(i) * words_per_row_;
  int pc = 0;
  for (int m = 0; m < words_per_row_; ++m) pc += std::popcount(row[m]);
  return pc;
}

uint64_t PackedBlockMask::total_popcount() const {
  uint64_t pc = 0;
  for (uint32_t w : words_) pc += std::popcount(w);
  return pc;
}

PackedBlockMask PackedBlockMask::transposed() const {
  PackedBlockMask out(t_c_, t_r_);
  for (int i = 0; i < t_r_; ++i)
    for_each_set(i, [&](int j) { out.set(j, i); });
  return out;
}

std::vector<uint8_t> PackedBlockMask::serialize() const {
  std::vector<uint8_t> out;
  out.reserve(8 + words_.size() * 4);
  auto put_u32 = [&](uint32_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 24));
  };
  put_u32(uint32_t(t_r_));
  put_u32(uint32_t(t_c_));
  for (uint32_t w : words_) put_u32(w);
  return out;
}

PackedBlockMask PackedBlockMask::deserialize(const std::vector<uint8_t>& bytes) {
  auto get_u32 = [&](size_t at) -> uint32_t {
    return uint32_t(bytes[at]) | uint32_t(bytes[at + 1]) << 8 |
           uint32_t(bytes[at + 2]) << 16 | uint32_t(bytes[at + 3]) << 24;
  };
  if (bytes.size() < 8)
    throw std::invalid_argument("PackedBlockMask: truncated header");
  const uint32_t t_r = get_u32(0), t_c = get_u32(4);
  if (t_r < 1 || t_c < 1 || t_r > (1u << 24) || t_c > (1u << 24))
    throw std::invalid_argument("PackedBlockMask: implausible dimensions");
  PackedBlockMask mask{int(t_r), int(t_c)};
  const size_t need = 8 + mask.words_.size() * 4;
  if (bytes.size() != need)
    throw std::invalid_argument("PackedBlockMask: payload size mismatch");
  for (size_t m = 0; m < mask.words_.size(); ++m)
    mask.words_[m] = get_u32(8 + m * 4);
  return mask;
}

}  // namespace adattn
