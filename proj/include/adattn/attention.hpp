#pragma once

#include "adattn/bitpack.hpp"
#include "adattn/histogram.hpp"
#include "adattn/types.hpp"

namespace adattn {

// Dense row-major matrix of doubles. Small on purpose; every heavy loop in
// this project walks raw rows.
struct Matrix {
  int rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(size_t(r) * c, 0.0) {}

  double* row(int i) { return data.data() + size_t(i) * cols; }
  const double* row(int i) const { return data.data() + size_t(i) * cols; }
  double& at(int i, int j) { return data[size_t(i) * cols + j]; }
  double at(int i, int j) const { return data[size_t(i) * cols + j]; }
};

struct AttentionProblem {
  Matrix q, k, v;
  double alpha = 1.5;
  // 0 means 1/sqrt(d).
  double scale = 0.0;
  bool causal = false;
  int block_r = 64;
  int block_c = 64;
  int bins = 8;
  // Refinement step budget per row and the residual that stops early.
  int refine_iters = 2;
  double refine_tol = 1e-6;
};

struct AttentionStats {
  double block_sparsity = 0.0;
  uint64_t blocks_visited_fwd = 0;
  uint64_t blocks_visited_bwd = 0;
  uint64_t flushes = 0;
};

struct AttentionResult {
  Matrix out;
  // Per-row threshold on the centered scale; probabilities are always
  // max(z - tau, 0)^(1/(alpha-1)).
  std::vector<double> tau;
  // Row maxima of the scaled scores, cached so the backward passes can
  // rebuild z without a fresh max pass.
  std::vector<double> row_max;
  PackedBlockMask mask;
  AttentionStats stats;
};

struct AttentionGradients {
  Matrix dq, dk, dv;
  std::vector<double> delta;
};

// Wall time spent in the four forward phases (max pass, histogram build,
// refinement, output). Filled only on single-threaded runs.
struct PhaseTimings {
  double ms[4] = {0.0, 0.0, 0.0, 0.0};
};

// Tiled forward pass: per query tile, a streaming max, a packed-histogram
// threshold initialisation, a fixed number of refinement passes, and one
// output pass over the surviving blocks. Deterministic for any thread count;
// query tiles never share output rows.
AttentionResult forward(const AttentionProblem& p, int threads = 1,
                        PhaseTimings* timings = nullptr);

// Row-at-a-time oracle: exact thresholds (alpha 1.5/2) or tight bisection.
// Refuses n > 4096.
AttentionResult dense_reference(const AttentionProblem& p);

// delta_i = <u_i, dP_i> / <u_i, 1> with u = P^(2-alpha), streamed over the
// active blocks only.
std::vector<double> compute_delta(const AttentionProblem& p, const AttentionResult& res,
                                  const Matrix& dout, int threads = 1);

// Two mask-guided sweeps: key-major for dK/dV, query-major for dQ, plus the
// delta pre-pass. Updates res.stats.blocks_visited_bwd (two visits per
// active block).
AttentionGradients backward(const AttentionProblem& p, AttentionResult& res,
                            const Matrix& dout, int threads = 1);

// Fraction of zero bits among the addressable blocks: all of them, or, under
// the causal rule, blocks whose first key column is visible to some query
// row (j * t_r < (i+1) * t_c).
double block_sparsity(const PackedBlockMask& mask, bool causal);

// Streaming histogram builder behind phase 2. One packed accumulator per
// tile position; every 2^b - 1 tiles the counts drain into wide per-row
// totals so no bin can saturate.
class TileHistogramStream {
 public:
  TileHistogramStream(int rows, int block_cols, int bins, int word_bits = 64);

  // z_block: `rows` x `cols` row-major with leading dimension `stride`,
  // cols <= block_cols. Entries < 0 (including masked sentinels) are not
  // counted.
  void add_tile(const double* z_block, int rows, int cols, int stride);

  // Final drain; returns one histogram per row.
  std::vector<Histogram> finish();

  int flush_events() const { return flush_events_; }

 private:
  void flush_all();

  int rows_, block_cols_, bins_;
  int tiles_since_flush_ = 0;
  int flush_limit_;
  int flush_events_ = 0;
  std::vector<PackedHistogramAcc> accs_;
  FlushAccumulator wide_;
};

}  // namespace adattn
