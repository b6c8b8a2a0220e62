#include "adattn/attention.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <thread>
#include <tuple>

#include "adattn/entmax.hpp"
#include "internal.hpp"

namespace adattn {

using detail::pow_e;

namespace {

// Blocks at the threshold boundary keep their mask bit: the activity test
// runs at tau minus this slack, so a later recomputation can never round a
// surviving entry out of the mask.
constexpr double kMaskSlack = 1e-9;

constexpr double kDerivBaseFloor = 1e-12;

inline double dot(const double* a, const double* b, int d) {
  double s = 0.0;
  for (int x = 0; x < d; ++x) s += a[x] * b[x];
  return s;
}

int word_bits_for(int bins) { return bins <= 16 ? 64 : 128; }

struct Geometry {
  int n, m, d, dv, t_r, t_c;
  double scale;
};

Geometry validate(const AttentionProblem& p) {
  Geometry g;
  g.n = p.q.rows;
  g.m = p.k.rows;
  g.d = p.q.cols;
  g.dv = p.v.cols;
  if (g.n < 1 || g.m < 1 || g.d < 1 || g.dv < 1)
    throw std::invalid_argument("attention: empty operand");
  if (p.k.cols != g.d) throw std::invalid_argument("attention: q/k width mismatch");
  if (p.v.rows != g.m) throw std::invalid_argument("attention: k/v length mismatch");
  if (p.causal && g.m != g.n)
    throw std::invalid_argument("attention: causal needs square score matrix");
  if (!(p.alpha > 1.0)) throw std::invalid_argument("attention: alpha must exceed 1");
  if (p.block_r < 1 || p.block_c < 1)
    throw std::invalid_argument("attention: bad tile size");
  if (p.refine_iters < 0 || !(p.refine_tol > 0.0))
    throw std::invalid_argument("attention: bad refinement config");
  g.t_r = (g.n + p.block_r - 1) / p.block_r;
  g.t_c = (g.m + p.block_c - 1) / p.block_c;
  g.scale = p.scale != 0.0 ? p.scale : 1.0 / std::sqrt(double(g.d));
  return g;
}

// z for the score block rows [r0, r0+nr) x cols [c0, c0+nc), written
// row-major with stride nc. Causally hidden entries get the masked sentinel.
// Entries at the row maximum come out exactly 1.
void compute_z_block(const AttentionProblem& p, const Geometry& g,
                     const std::vector<double>& row_max, int r0, int nr, int c0, int nc,
                     double* buf) {
  for (int r = 0; r < nr; ++r) {
    const double* qrow = p.q.row(r0 + r);
    const double m = row_max[r0 + r];
    double* dst = buf + size_t(r) * nc;
    for (int c = 0; c < nc; ++c) {
      if (p.causal && c0 + c > r0 + r) {
        dst[c] = kMaskedScore;
        continue;
      }
      const double s = g.scale * dot(qrow, p.k.row(c0 + c), g.d);
      dst[c] = s == m ? 1.0 : (p.alpha - 1.0) * (s - m) + 1.0;
    }
  }
}

void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i; (i = next.fetch_add(1)) < count;) fn(i);
    });
  for (auto& th : pool) th.join();
}

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

TileHistogramStream::TileHistogramStream(int rows, int block_cols, int bins,
                                         int word_bits)
    : rows_(rows), block_cols_(block_cols), bins_(bins), wide_(rows, bins) {
  if (rows < 1 || block_cols < 1)
    throw std::invalid_argument("TileHistogramStream: bad dimensions");
  accs_.reserve(size_t(rows) * block_cols);
  for (int i = 0; i < rows * block_cols; ++i) accs_.emplace_back(word_bits, bins);
  flush_limit_ = int((uint64_t(1) << accs_[0].bits_per_bin()) - 1);
}

void TileHistogramStream::add_tile(const double* z_block, int rows, int cols,
                                   int stride) {
  if (rows != rows_ || cols < 1 || cols > block_cols_)
    throw std::invalid_argument("TileHistogramStream: tile shape mismatch");
  for (int r = 0; r < rows; ++r) {
    const double* src = z_block + size_t(r) * stride;
    PackedHistogramAcc* acc = accs_.data() + size_t(r) * block_cols_;
    for (int c = 0; c < cols; ++c) {
      const double z = src[c];
      if (!(z >= 0.0)) continue;
      acc[c].increment(std::min(int(bins_ * z), bins_ - 1));
    }
  }
  if (++tiles_since_flush_ == flush_limit_) flush_all();
}

void TileHistogramStream::flush_all() {
  for (int r = 0; r < rows_; ++r)
    for (int c = 0; c < block_cols_; ++c)
      wide_.flush_from(accs_[size_t(r) * block_cols_ + c], r);
  ++flush_events_;
  tiles_since_flush_ = 0;
}

std::vector<Histogram> TileHistogramStream::finish() {
  if (tiles_since_flush_ > 0) flush_all();
  std::vector<Histogram> out(rows_);
  for (int r = 0; r < rows_; ++r) {
    Histogram& h = out[r];
    h.bins = bins_;
    h.width = 1.0 / bins_;
    h.counts.resize(bins_);
    for (int k = 0; k < bins_; ++k) h.counts[k] = uint32_t(wide_.count(r, k));
  }
  return out;
}

AttentionResult forward(const AttentionProblem& p, int threads, PhaseTimings* timings) {
  const Geometry g = validate(p);
  // Fail fast on an unsupported bin/word combination.
  (void)PackedHistogramAcc(word_bits_for(p.bins), p.bins);

  Matrix out(g.n, g.dv);
  std::vector<double> tau(g.n, 0.0), row_max(g.n, 0.0);
  PackedBlockMask mask(g.t_r, g.t_c);
  std::atomic<uint64_t> visited{0}, flush_total{0};

  const double e0 = 1.0 / (p.alpha - 1.0);
  const double e1 = e0 - 1.0;
  const double e2 = e0 - 2.0;
  const bool time_it = timings != nullptr && threads <= 1;

  parallel_for(g.t_r, threads, [&](int it) {
    const int r0 = it * p.block_r;
    const int r1 = std::min(g.n, r0 + p.block_r);
    const int nr = r1 - r0;
    // Tiles wholly above the block diagonal never matter under causal.
    const int jlim = p.causal ? (r1 - 1) / p.block_c : g.t_c - 1;
    std::vector<double> zbuf(size_t(nr) * p.block_c);

    Clock::time_point t0 = Clock::now();

    // Phase 1: row maxima of the scaled scores.
    for (int r = 0; r < nr; ++r) row_max[r0 + r] = kMaskedScore;
    for (int jt = 0; jt <= jlim; ++jt) {
      const int c0 = jt * p.block_c;
      const int c1 = std::min(g.m, c0 + p.block_c);
      for (int r = 0; r < nr; ++r) {
        const double* qrow = p.q.row(r0 + r);
        const int cend = p.causal ? std::min(c1, r0 + r + 1) : c1;
        double m = row_max[r0 + r];
        for (int c = c0; c < cend; ++c)
          m = std::max(m, g.scale * dot(qrow, p.k.row(c), g.d));
        row_max[r0 + r] = m;
      }
    }
    if (time_it) {
      timings->ms[0] += ms_since(t0);
      t0 = Clock::now();
    }

    // Phase 2: packed histograms of z, then the per-row initial threshold.
    TileHistogramStream stream(nr, p.block_c, p.bins, word_bits_for(p.bins));
    for (int jt = 0; jt <= jlim; ++jt) {
      const int c0 = jt * p.block_c;
      const int nc = std::min(g.m, c0 + p.block_c) - c0;
      compute_z_block(p, g, row_max, r0, nr, c0, nc, zbuf.data());
      stream.add_tile(zbuf.data(), nr, nc, nc);
    }
    const std::vector<Histogram> hists = stream.finish();
    flush_total += uint64_t(stream.flush_events());

    struct RowSolve {
      double tau, lo, hi;
      double f, f1, f2;
      double f_hi;
      double sec_tau = 0.0, sec_f = 0.0;
      double best_tau = 0.0;
      double best_af = std::numeric_limits<double>::infinity();
      bool sec_seeded = false;
      int steps = 0;
      bool done = false;
    };
    std::vector<RowSolve> rows(nr);
    for (int r = 0; r < nr; ++r) {
      const HistogramSolution hs = solve_histogram(hists[r], p.alpha);
      rows[r].tau = hs.tau_h;
      std::tie(rows[r].lo, rows[r].hi) = refine_bracket(hs);
    }
    if (time_it) {
      timings->ms[1] += ms_since(t0);
      t0 = Clock::now();
    }

    // Phase 3: streaming refinement. Each pass accumulates f and its
    // derivatives at the current per-row tau and tentatively rebuilds the
    // block-activity bits; the pass in which no row moves is the one whose
    // bits are committed, so the mask always reflects the final thresholds.
    const bool need_sec = p.alpha > 2.0;
    std::vector<uint8_t> blk_active(jlim + 1, 0);
    bool first_pass = true;
    while (true) {
      for (auto& rs : rows) {
        rs.f = -1.0;
        rs.f1 = 0.0;
        rs.f2 = 0.0;
        if (first_pass) rs.f_hi = -1.0;
      }
      std::fill(blk_active.begin(), blk_active.end(), uint8_t(0));

      for (int jt = 0; jt <= jlim; ++jt) {
        const int c0 = jt * p.block_c;
        const int nc = std::min(g.m, c0 + p.block_c) - c0;
        compute_z_block(p, g, row_max, r0, nr, c0, nc, zbuf.data());
        uint8_t any = 0;
        for (int r = 0; r < nr; ++r) {
          RowSolve& rs = rows[r];
          const double* zr = zbuf.data() + size_t(r) * nc;
          if (rs.done) {
            for (int c = 0; c < nc; ++c) any |= uint8_t(zr[c] > rs.tau - kMaskSlack);
            continue;
          }
          double s0 = 0.0, s1 = 0.0, s2 = 0.0, shi = 0.0;
          for (int c = 0; c < nc; ++c) {
            const double t = zr[c] - rs.tau;
            any |= uint8_t(t > -kMaskSlack);
            if (t > 0.0) {
              s0 += pow_e(t, e0);
              s1 += pow_e(e1 < 0.0 ? std::max(t, kDerivBaseFloor) : t, e1);
              s2 += pow_e(e2 < 0.0 ? std::max(t, kDerivBaseFloor) : t, e2);
            }
            if (first_pass && need_sec) {
              const double th = zr[c] - rs.hi;
              if (th > 0.0) shi += pow_e(th, e0);
            }
          }
          rs.f += s0;
          rs.f1 -= e0 * s1;
          rs.f2 += e0 * (e0 - 1.0) * s2;
          if (first_pass && need_sec) rs.f_hi += shi;
        }
        blk_active[jt] = any;
      }

      bool stepped = false;
      for (auto& rs : rows) {
        if (rs.done) continue;
        if (std::abs(rs.f) < rs.best_af) {
          rs.best_af = std::abs(rs.f);
          rs.best_tau = rs.tau;
        }
        if (rs.f > 0.0)
          rs.lo = rs.tau;
        else
          rs.hi = rs.tau;
        if (std::abs(rs.f) <= p.refine_tol || rs.steps >= p.refine_iters) {
          rs.done = true;
          // A late bisection fallback can leave the last iterate worse than
          // an earlier one; settle on the best. The activity bits of this
          // pass were built with the stale value, so force another pass.
          if (rs.tau != rs.best_tau) {
            rs.tau = rs.best_tau;
            stepped = true;
          }
          continue;
        }
        if (need_sec && !rs.sec_seeded) {
          // The histogram start sits at the bracket floor with f >= 0; the
          // opposite-sign partner is the upper endpoint.
          rs.sec_tau = rs.hi;
          rs.sec_f = rs.f_hi;
          rs.sec_seeded = true;
        }
        const FDerivatives d{rs.f, rs.f1, rs.f2};
        const auto prop =
            detail::propose_step(p.alpha, rs.tau, d, rs.sec_tau, rs.sec_f, rs.lo, rs.hi);
        rs.sec_tau = rs.tau;
        rs.sec_f = rs.f;
        rs.tau = prop.tau;
        ++rs.steps;
        stepped = true;
      }
      first_pass = false;
      if (!stepped) break;
    }

    for (int r = 0; r < nr; ++r) tau[r0 + r] = rows[r].tau;
    for (int jt = 0; jt <= jlim; ++jt)
      if (blk_active[jt]) mask.set(it, jt);
    if (time_it) {
      timings->ms[2] += ms_since(t0);
      t0 = Clock::now();
    }

    // Phase 4: outputs over the surviving blocks only.
    mask.for_each_set(it, [&](int jt) {
      const int c0 = jt * p.block_c;
      const int nc = std::min(g.m, c0 + p.block_c) - c0;
      compute_z_block(p, g, row_max, r0, nr, c0, nc, zbuf.data());
      for (int r = 0; r < nr; ++r) {
        const double* zr = zbuf.data() + size_t(r) * nc;
        double* orow = out.row(r0 + r);
        for (int c = 0; c < nc; ++c) {
          const double t = zr[c] - tau[r0 + r];
          if (t <= 0.0) continue;
          const double pv = pow_e(t, e0);
          const double* vrow = p.v.row(c0 + c);
          for (int x = 0; x < g.dv; ++x) orow[x] += pv * vrow[x];
        }
      }
      visited += 1;
    });
    if (time_it) timings->ms[3] += ms_since(t0);
  });

  AttentionResult res{std::move(out), std::move(tau), std::move(row_max),
                      std::move(mask), AttentionStats{}};
  res.stats.blocks_visited_fwd = visited.load();
  res.stats.flushes = flush_total.load();
  res.stats.block_sparsity = block_sparsity(res.mask, p.causal);
  return res;
}

AttentionResult dense_reference(const AttentionProblem& p) {
  const Geometry g = validate(p);
  if (g.n > 4096 || g.m > 4096)
    throw std::invalid_argument("dense_reference: capped at 4096 rows");

  Matrix out(g.n, g.dv);
  std::vector<double> tau(g.n, 0.0), row_max(g.n, 0.0);
  PackedBlockMask mask(g.t_r, g.t_c);

  ScoreVector s;
  s.values.resize(g.m);
  for (int i = 0; i < g.n; ++i) {
    if (p.causal) {
      s.mask.assign(g.m, 0);
      for (int j = i + 1; j < g.m; ++j) s.mask[j] = 1;
    }
    double m = kMaskedScore;
    for (int j = 0; j < g.m; ++j) {
      s.values[j] = g.scale * dot(p.q.row(i), p.k.row(j), g.d);
      if (!p.causal || j <= i) m = std::max(m, s.values[j]);
    }
    row_max[i] = m;

    const CenteredScores z = center_scores(s, p.alpha);
    double t;
    if (p.alpha == 1.5 || p.alpha == 2.0) {
      t = solve_exact(z).tau;
    } else {
      EntmaxParams params{p.alpha, 1e-14, 200};
      t = solve_bisection(z, params).tau;
    }
    tau[i] = t;

    const Probabilities prob = entmax_apply(z, t);
    double* orow = out.row(i);
    for (int32_t j : prob.support) {
      const double* vrow = p.v.row(j);
      for (int x = 0; x < g.dv; ++x) orow[x] += prob.p[j] * vrow[x];
      mask.set(i / p.block_r, j / p.block_c);
    }
  }

  AttentionResult res{std::move(out), std::move(tau), std::move(row_max),
                      std::move(mask), AttentionStats{}};
  res.stats.block_sparsity = block_sparsity(res.mask, p.causal);
  return res;
}

std::vector<double> compute_delta(const AttentionProblem& p, const AttentionResult& res,
                                  const Matrix& dout, int threads) {
  const Geometry g = validate(p);
  if (dout.rows != g.n || dout.cols != g.dv)
    throw std::invalid_argument("compute_delta: dout shape mismatch");

  const double e0 = 1.0 / (p.alpha - 1.0);
  std::vector<double> delta(g.n, 0.0);

  parallel_for(g.t_r, threads, [&](int it) {
    const int r0 = it * p.block_r;
    const int nr = std::min(g.n, r0 + p.block_r) - r0;
    std::vector<double> zbuf(size_t(nr) * p.block_c);
    std::vector<double> num(nr, 0.0), den(nr, 0.0);

    res.mask.for_each_set(it, [&](int jt) {
      const int c0 = jt * p.block_c;
      const int nc = std::min(g.m, c0 + p.block_c) - c0;
      compute_z_block(p, g, res.row_max, r0, nr, c0, nc, zbuf.data());
      for (int r = 0; r < nr; ++r) {
        const double* zr = zbuf.data() + size_t(r) * nc;
        const double* dorow = dout.row(r0 + r);
        for (int c = 0; c < nc; ++c) {
          const double t = zr[c] - res.tau[r0 + r];
          if (t <= 0.0) continue;
          const double pv = pow_e(t, e0);
          const double u = pow_e(pv, 2.0 - p.alpha);
          num[r] += u * dot(dorow, p.v.row(c0 + c), g.dv);
          den[r] += u;
        }
      }
    });
    for (int r = 0; r < nr; ++r) delta[r0 + r] = den[r] > 0.0 ? num[r] / den[r] : 0.0;
  });
  return delta;
}

AttentionGradients backward(const AttentionProblem& p, AttentionResult& res,
                            const Matrix& dout, int threads) {
  const Geometry g = validate(p);
  if (dout.rows != g.n || dout.cols != g.dv)
    throw std::invalid_argument("backward: dout shape mismatch");

  const double e0 = 1.0 / (p.alpha - 1.0);
  AttentionGradients grads;
  grads.dq = Matrix(g.n, g.d);
  grads.dk = Matrix(g.m, g.d);
  grads.dv = Matrix(g.m, g.dv);
  grads.delta = compute_delta(p, res, dout, threads);

  std::atomic<uint64_t> visited{0};
  const PackedBlockMask tmask = res.mask.transposed();

  // Key-major sweep: dV and dK, one task per key tile.
  parallel_for(g.t_c, threads, [&](int jt) {
    const int c0 = jt * p.block_c;
    const int nc = std::min(g.m, c0 + p.block_c) - c0;
    std::vector<double> zbuf(size_t(p.block_r) * nc);
    std::vector<double> ds(nc), pv(nc);

    tmask.for_each_set(jt, [&](int it) {
      const int r0 = it * p.block_r;
      const int nr = std::min(g.n, r0 + p.block_r) - r0;
      compute_z_block(p, g, res.row_max, r0, nr, c0, nc, zbuf.data());
      for (int r = 0; r < nr; ++r) {
        const double* zr = zbuf.data() + size_t(r) * nc;
        const double* dorow = dout.row(r0 + r);
        const double* qrow = p.q.row(r0 + r);
        const double dl = grads.delta[r0 + r];
        for (int c = 0; c < nc; ++c) {
          const double t = zr[c] - res.tau[r0 + r];
          if (t <= 0.0) {
            pv[c] = 0.0;
            ds[c] = 0.0;
            continue;
          }
          pv[c] = pow_e(t, e0);
          const double u = pow_e(pv[c], 2.0 - p.alpha);
          const double dp = dot(dorow, p.v.row(c0 + c), g.dv);
          ds[c] = u * (dp - dl);
        }
        for (int c = 0; c < nc; ++c) {
          if (pv[c] != 0.0) {
            double* dvrow = grads.dv.row(c0 + c);
            for (int x = 0; x < g.dv; ++x) dvrow[x] += pv[c] * dorow[x];
          }
          if (ds[c] != 0.0) {
            double* dkrow = grads.dk.row(c0 + c);
            const double w = g.scale * ds[c];
            for (int x = 0; x < g.d; ++x) dkrow[x] += w * qrow[x];
          }
        }
      }
      visited += 1;
    });
  });

  // Query-major sweep: dQ, one task per query tile.
  parallel_for(g.t_r, threads, [&](int it) {
    const int r0 = it * p.block_r;
    const int nr = std::min(g.n, r0 + p.block_r) - r0;
    std::vector<double> zbuf(size_t(nr) * p.block_c);

    res.mask.for_each_set(it, [&](int jt) {
      const int c0 = jt * p.block_c;
      const int nc = std::min(g.m, c0 + p.block_c) - c0;
      compute_z_block(p, g, res.row_max, r0, nr, c0, nc, zbuf.data());
      for (int r = 0; r < nr; ++r) {
        const double* zr = zbuf.data() + size_t(r) * nc;
        const double* dorow = dout.row(r0 + r);
        double* dqrow = grads.dq.row(r0 + r);
        const double dl = grads.delta[r0 + r];
        for (int c = 0; c < nc; ++c) {
          const double t = zr[c] - res.tau[r0 + r];
          if (t <= 0.0) continue;
          const double u = pow_e(pow_e(t, e0), 2.0 - p.alpha);
          const double dp = dot(dorow, p.v.row(c0 + c), g.dv);
          const double w = g.scale * u * (dp - dl);
          const double* krow = p.k.row(c0 + c);
          for (int x = 0; x < g.d; ++x) dqrow[x] += w * krow[x];
        }
      }
      visited += 1;
    });
  });

  res.stats.blocks_visited_bwd = visited.load();
  return grads;
}

double block_sparsity(const PackedBlockMask& mask, bool causal) {
  const int t_r = mask.tile_rows(), t_c = mask.tile_cols();
  int64_t addressable = 0, active = 0;
  for (int i = 0; i < t_r; ++i)
    for (int j = 0; j < t_c; ++j) {
      if (causal && int64_t(j) * t_r >= int64_t(i + 1) * t_c) continue;
      ++addressable;
      if (mask.test(i, j)) ++active;
    }
  return addressable == 0 ? 0.0 : double(addressable - active) / double(addressable);
}

}  // namespace adattn
