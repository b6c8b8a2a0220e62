#pragma once

#include <bit>
#include <cstdint>
#include <vector>

namespace adattn {

// Position of the n-th set bit of `word` (n = 0 gives the lowest), or -1
// when n is out of range. The default build rides the hardware popcount via
// <bit>; the _portable variant uses only shifts and a de Bruijn multiply and
// exists so the two can be checked against each other.
int find_nth_set(uint32_t word, int n);
int find_nth_set_portable(uint32_t word, int n);

int popcount_portable(uint32_t word);

// Largest total count a packed accumulator row can absorb before any bin
// saturates: B_c * (2^(w/B) - 1).
uint64_t packed_capacity(int word_bits, int bins, int block_cols);

// Number of flush events needed to stream t_c key tiles through b-bit bins:
// ceil(t_c / (2^b - 1)).
int flush_schedule(int t_c, int bits_per_bin);

// One histogram packed into a single machine word: B bins of w/B bits each,
// bin 0 in the least significant bits. 128-bit layouts run as a pair of
// 64-bit words behind the same interface.
class PackedHistogramAcc {
 public:
  PackedHistogramAcc(int word_bits, int bins);

  // Adds one count to `bin`. Throws std::overflow_error when the bin is
  // already at 2^b - 1 (the streaming pipeline flushes before that).
  void increment(int bin);

  std::vector<uint32_t> extract() const;
  void reset() { lo_ = hi_ = 0; }

  int word_bits() const { return word_bits_; }
  int bins() const { return bins_; }
  int bits_per_bin() const { return bits_per_bin_; }
  // Raw storage, low word first.
  uint64_t word_lo() const { return lo_; }
  uint64_t word_hi() const { return hi_; }

 private:
  uint64_t lo_ = 0, hi_ = 0;
  int word_bits_, bins_, bits_per_bin_;
  uint64_t bin_max_;
};

// Wide per-row histogram counts that packed accumulators drain into.
class FlushAccumulator {
 public:
  FlushAccumulator(int rows, int bins);

  // Adds acc's counts into `row` and resets acc.
  void flush_from(PackedHistogramAcc& acc, int row);

  uint64_t count(int row, int bin) const { return counts_[size_t(row) * bins_ + bin]; }
  int rows() const { return rows_; }
  int bins() const { return bins_; }

 private:
  std::vector<uint64_t> counts_;
  int rows_, bins_;
};

// Bit-per-block sparsity mask over a t_r x t_c tile grid. Each row packs
// into ceil(t_c/32) little-endian words; trailing bits stay zero.
class PackedBlockMask {
 public:
  PackedBlockMask(int t_r, int t_c);

  void set(int i, int j);
  bool test(int i, int j) const;

  int row_popcount(int i) const;
  uint64_t total_popcount() const;

  // Calls fn(j) for every set column of row i in ascending order; work is
  // proportional to the set bits, found via popcount + find_nth_set.
  template <typename Fn>
  void for_each_set(int i, Fn&& fn) const {
    const uint32_t* row = words_.data() + size_t(i) * words_per_row_;
    for (int m = 0; m < words_per_row_; ++m) {
      const uint32_t w = row[m];
      const int pc = std::popcount(w);
      for (int t = 0; t < pc; ++t) fn(32 * m + find_nth_set(w, t));
    }
  }

  PackedBlockMask transposed() const;

  // Layout: t_r, t_c, then the words row-major, all as little-endian u32.
  std::vector<uint8_t> serialize() const;
  static PackedBlockMask deserialize(const std::vector<uint8_t>& bytes);

  int tile_rows() const { return t_r_; }
  int tile_cols() const { return t_c_; }
  size_t byte_size() const { return words_.size() * 4; }
  const std::vector<uint32_t>& words() const { return words_; }

  bool operator==(const PackedBlockMask& o) const = default;

 private:
  int t_r_, t_c_, words_per_row_;
  std::vector<uint32_t> words_;
};

}  // namespace adattn
