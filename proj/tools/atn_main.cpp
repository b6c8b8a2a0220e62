#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "adattn/attention.hpp"
#include "adattn/entmax.hpp"
#include "adattn/histogram.hpp"
#include "adattn/hybrid.hpp"
#include "adattn/rng.hpp"
#include "adattn/tensor_io.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

using namespace adattn;

int env_threads() {
  const char* v = std::getenv("ATN_THREADS");
  if (!v) return 1;
  const int t = std::atoi(v);
  return t >= 1 ? t : 1;
}

// One benchmark record. JSON is one object per line; the CSV projection of
// an experiment has a fixed column order, and both carry the same values
// (CSV cells are printed through the JSON serializer).
struct BenchRecord {
  std::string experiment;
  uint64_t seed = 0;
  json params;
  json metrics;

  json to_json() const {
    return json{{"experiment", experiment}, {"seed", seed}, {"params", params},
                {"metrics", metrics}};
  }

  static std::string cell(const json& parent, const std::string& key) {
    if (!parent.contains(key)) return "";
    const json& v = parent.at(key);
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }
};

void emit_records(const std::vector<BenchRecord>& records, const std::string& format,
                  const std::vector<std::string>& param_cols,
                  const std::vector<std::string>& metric_cols) {
  if (format == "json") {
    for (const auto& r : records) std::cout << r.to_json().dump() << "\n";
    return;
  }
  std::cout << "experiment,seed";
  for (const auto& c : param_cols) std::cout << "," << c;
  for (const auto& c : metric_cols) std::cout << "," << c;
  std::cout << "\n";
  for (const auto& r : records) {
    std::cout << r.experiment << "," << r.seed;
    for (const auto& c : param_cols) std::cout << "," << BenchRecord::cell(r.params, c);
    for (const auto& c : metric_cols) std::cout << "," << BenchRecord::cell(r.metrics, c);
    std::cout << "\n";
  }
}

Matrix gaussian_matrix(Xoshiro256pp& rng, int rows, int cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = scale * rng.gaussian();
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

// ---- gen ----------------------------------------------------------------

int cmd_gen(int n, int d, const std::string& dist, uint64_t seed,
            const std::string& dtype, const std::string& out) {
  if (dist != "gaussian") throw std::invalid_argument("gen: unknown --dist " + dist);
  Tensor t;
  t.dtype = dtype == "f32" ? Dtype::kF32 : Dtype::kF64;
  t.dims.push_back(uint32_t(n));
  if (d > 0) t.dims.push_back(uint32_t(d));
  Xoshiro256pp rng(seed);
  t.values.resize(t.count());
  for (double& v : t.values) v = rng.gaussian();
  save_tensor(t, out);
  return 0;
}

// ---- dump ---------------------------------------------------------------

int cmd_dump(const std::string& path) {
  const Tensor t = load_tensor(path);
  double mn = t.values[0], mx = t.values[0], sum = 0.0, sum2 = 0.0;
  for (double v : t.values) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / double(t.values.size());
  const double var = sum2 / double(t.values.size()) - mean * mean;
  json j{{"dtype", t.dtype == Dtype::kF32 ? "f32" : "f64"},
         {"rank", t.dims.size()},
         {"dims", t.dims},
         {"count", t.values.size()},
         {"min", mn},
         {"max", mx},
         {"mean", mean},
         {"std", std::sqrt(std::max(var, 0.0))}};
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- solve --------------------------------------------------------------

json trace_to_json(const SolverTrace& t) {
  json arr = json::array();
  for (const auto& e : t.iterations)
    arr.push_back(json{{"tau", e.tau},
                       {"residual", e.residual},
                       {"step", step_kind_name(e.kind)},
                       {"bracket", json::array({e.bracket_lo, e.bracket_hi})}});
  return arr;
}

int cmd_solve(double alpha, const std::string& input, const std::string& method,
              int bins, double tol, int max_iters) {
  const Tensor t = load_tensor(input);
  if (t.dims.size() != 1)
    throw std::invalid_argument("solve: input must be a rank-1 tensor");

  ScoreVector s;
  s.values = t.values;
  const CenteredScores z = center_scores(s, alpha);
  EntmaxParams params{alpha, tol, max_iters};

  json out;
  out["method"] = method;
  out["alpha"] = alpha;

  double tau;
  if (method == "exact") {
    if (alpha != 1.5 && alpha != 2.0)
      throw std::invalid_argument("solve: --method exact needs alpha 1.5 or 2.0");
    const ThresholdSolution sol = solve_exact(z);
    tau = sol.tau;
    out["residual"] = sol.residual;
    out["iterations"] = 0;
    out["converged"] = true;
  } else if (method == "bisection") {
    std::vector<double> mids;
    const ThresholdSolution sol = solve_bisection(z, params, &mids);
    tau = sol.tau;
    out["residual"] = sol.residual;
    out["iterations"] = mids.size();
    out["converged"] = std::abs(sol.residual) <= params.tol;
  } else if (method == "hybrid" || method == "histogram+hybrid") {
    double init, lo, hi;
    if (method == "hybrid") {
      lo = 0.0;
      hi = 1.0 - std::pow(double(z.visible_n), 1.0 - alpha);
      init = 0.5 * (lo + hi);
    } else {
      const Histogram h = build_histogram(z, bins);
      const HistogramSolution hs = solve_histogram(h, alpha);
      std::tie(lo, hi) = refine_bracket(hs);
      init = hs.tau_h;
    }
    const SolverTrace trace = hybrid_solve(z, init, lo, hi, params);
    tau = trace.final_tau;
    // final_tau is the best evaluated iterate; report its residual.
    double residual = trace.iterations.front().residual;
    for (const auto& e : trace.iterations)
      if (std::abs(e.residual) < std::abs(residual)) residual = e.residual;
    out["residual"] = residual;
    out["iterations"] = trace.iterations.size() - 1;
    out["converged"] = trace.converged;
    out["trace"] = trace_to_json(trace);
  } else {
    throw std::invalid_argument("solve: unknown --method " + method);
  }

  out["tau"] = tau;
  out["probabilities"] = entmax_apply(z, tau).p;
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---- bench-solver -------------------------------------------------------

int cmd_bench_solver(int n, double alpha, const std::vector<int>& bins_list, int runs,
                     uint64_t seed, int iters, const std::string& format) {
  const std::vector<BenchRow> rows = solver_bench(n, alpha, bins_list, runs, seed, iters);
  std::vector<BenchRecord> records;
  records.reserve(rows.size());
  for (const auto& r : rows) {
    BenchRecord rec;
    rec.experiment = "bench-solver";
    rec.seed = seed;
    rec.params = json{{"n", n},     {"alpha", alpha},       {"runs", runs},
                      {"method", r.method}, {"iteration", r.iteration}};
    rec.metrics = json{{"mae", r.mae}};
    records.push_back(std::move(rec));
  }
  emit_records(records, format, {"n", "alpha", "runs", "method", "iteration"}, {"mae"});
  return 0;
}

// ---- attn ---------------------------------------------------------------

int cmd_attn(int n, int d, double alpha, int block_r, int block_c, int bins, bool causal,
             uint64_t seed, double qscale, bool verify, const std::string& format,
             int threads, const std::string& mask_out) {
  Xoshiro256pp rng(seed);
  AttentionProblem p;
  p.q = gaussian_matrix(rng, n, d, qscale);
  p.k = gaussian_matrix(rng, n, d, 1.0);
  p.v = gaussian_matrix(rng, n, d, 1.0);
  const Matrix dout = gaussian_matrix(rng, n, d, 1.0);
  p.alpha = alpha;
  p.causal = causal;
  p.block_r = block_r;
  p.block_c = block_c;
  p.bins = bins;

  using Clock = std::chrono::steady_clock;
  PhaseTimings timings;
  auto t0 = Clock::now();
  AttentionResult res = forward(p, threads, &timings);
  const double t_fwd = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

  t0 = Clock::now();
  AttentionGradients grads = backward(p, res, dout, threads);
  const double t_bwd = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();

  BenchRecord rec;
  rec.experiment = "attn";
  rec.seed = seed;
  rec.params = json{{"n", n},           {"d", d},
                    {"alpha", alpha},   {"block_r", block_r},
                    {"block_c", block_c}, {"bins", bins},
                    {"causal", causal}, {"qscale", qscale},
                    {"threads", threads}};
  rec.metrics = json{{"block_sparsity", res.stats.block_sparsity},
                     {"blocks_visited_fwd", res.stats.blocks_visited_fwd},
                     {"blocks_visited_bwd", res.stats.blocks_visited_bwd},
                     {"flushes", res.stats.flushes},
                     {"t_phase1_ms", timings.ms[0]},
                     {"t_phase2_ms", timings.ms[1]},
                     {"t_phase3_ms", timings.ms[2]},
                     {"t_phase4_ms", timings.ms[3]},
                     {"t_forward_ms", t_fwd},
                     {"t_backward_ms", t_bwd}};

  if (verify) {
    if (n > 4096)
      throw std::invalid_argument("attn: --verify caps n at 4096");
    const AttentionResult dense = dense_reference(p);
    double tau_err = 0.0;
    for (int i = 0; i < n; ++i)
      tau_err = std::max(tau_err, std::abs(res.tau[i] - dense.tau[i]));
    rec.metrics["max_abs_err_out"] = max_abs_diff(res.out, dense.out);
    rec.metrics["max_abs_err_tau"] = tau_err;

    if (n <= 64) {
      // Finite-difference spot checks of <O, dout> against the analytic
      // gradients on a few sampled coordinates.
      Xoshiro256pp pick(seed ^ 0x5eedf00dULL);
      const double h = 1e-5;
      double fd_err = 0.0;
      auto loss = [&](const AttentionProblem& prob) {
        const AttentionResult r = forward(prob, 1);
        double l = 0.0;
        for (size_t i = 0; i < r.out.data.size(); ++i) l += r.out.data[i] * dout.data[i];
        return l;
      };
      for (int probe = 0; probe < 6; ++probe) {
        const int which = int(pick.next() % 3);
        Matrix* target = which == 0 ? &p.q : which == 1 ? &p.k : &p.v;
        const Matrix* analytic =
            which == 0 ? &grads.dq : which == 1 ? &grads.dk : &grads.dv;
        const size_t idx = size_t(pick.next() % target->data.size());
        const double orig = target->data[idx];
        target->data[idx] = orig + h;
        const double lp = loss(p);
        target->data[idx] = orig - h;
        const double lm = loss(p);
        target->data[idx] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        fd_err = std::max(fd_err, std::abs(fd - analytic->data[idx]));
      }
      rec.metrics["fd_max_abs_err"] = fd_err;
    }
  }

  if (!mask_out.empty()) {
    const std::vector<uint8_t> bytes = res.mask.serialize();
    const std::string tmp = mask_out + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw std::runtime_error(tmp + ": cannot open for write");
      f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    }
    std::filesystem::rename(tmp, mask_out);
  }

  emit_records({rec}, format,
               {"n", "d", "alpha", "block_r", "block_c", "bins", "causal", "qscale",
                "threads"},
               {"block_sparsity", "blocks_visited_fwd", "blocks_visited_bwd", "flushes",
                "t_phase1_ms", "t_phase2_ms", "t_phase3_ms", "t_phase4_ms",
                "t_forward_ms", "t_backward_ms", "max_abs_err_out", "max_abs_err_tau",
                "fd_max_abs_err"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"alpha-entmax attention toolbox"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "write a random tensor file");
  int gen_n = 0, gen_d = 0;
  std::string gen_dist = "gaussian", gen_dtype = "f32", gen_out;
  uint64_t gen_seed = 0;
  gen->add_option("--n", gen_n, "rows")->required()->check(CLI::PositiveNumber);
  gen->add_option("--d", gen_d, "columns (omit for a vector)");
  gen->add_option("--dist", gen_dist, "distribution (gaussian)");
  gen->add_option("--seed", gen_seed, "rng seed");
  gen->add_option("--dtype", gen_dtype, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  gen->add_option("--out", gen_out, "output path")->required();

  // dump
  auto* dump = app.add_subcommand("dump", "print tensor header and summary stats");
  std::string dump_path;
  dump->add_option("file", dump_path, "tensor path")->required();

  // solve
  auto* solve = app.add_subcommand("solve", "threshold solve on one score vector");
  double sv_alpha = 1.5, sv_tol = 1e-6;
  int sv_bins = 8, sv_max_iters = 50;
  std::string sv_input, sv_method = "histogram+hybrid";
  solve->add_option("--alpha", sv_alpha, "entmax alpha")->required();
  solve->add_option("--input", sv_input, "rank-1 tensor path")->required();
  solve->add_option("--method", sv_method, "exact|bisection|hybrid|histogram+hybrid")
      ->check(CLI::IsMember({"exact", "bisection", "hybrid", "histogram+hybrid"}));
  solve->add_option("--bins", sv_bins, "histogram bins");
  solve->add_option("--tol", sv_tol, "residual tolerance");
  solve->add_option("--max-iters", sv_max_iters, "iteration cap");

  // bench-solver
  auto* bench = app.add_subcommand("bench-solver", "solver convergence benchmark");
  int bs_n = 4096, bs_runs = 10, bs_iters = 10;
  double bs_alpha = 1.5;
  std::vector<int> bs_bins{4, 8, 16};
  uint64_t bs_seed = 1;
  std::string bs_out = "json";
  bench->add_option("--n", bs_n, "scores per vector");
  bench->add_option("--alpha", bs_alpha, "entmax alpha");
  bench->add_option("--bins-list", bs_bins, "histogram bin counts")->delimiter(',');
  bench->add_option("--runs", bs_runs, "number of random vectors");
  bench->add_option("--seed", bs_seed, "rng seed");
  bench->add_option("--iters", bs_iters, "iterations to record");
  bench->add_option("--out", bs_out, "json or csv")->check(CLI::IsMember({"json", "csv"}));

  // attn
  auto* attn = app.add_subcommand("attn", "tiled attention round trip");
  int at_n = 256, at_d = 64, at_block_r = 64, at_block_c = 64, at_bins = 8;
  int at_threads = env_threads();
  double at_alpha = 1.5, at_qscale = 1.0;
  bool at_causal = false, at_verify = false;
  uint64_t at_seed = 1;
  std::string at_out = "json", at_mask_out;
  attn->add_option("--n", at_n, "sequence length");
  attn->add_option("--d", at_d, "head width");
  attn->add_option("--alpha", at_alpha, "entmax alpha");
  attn->add_option("--block-r", at_block_r, "query tile rows");
  attn->add_option("--block-c", at_block_c, "key tile columns");
  attn->add_option("--bins", at_bins, "histogram bins");
  attn->add_flag("--causal", at_causal, "causal masking");
  attn->add_option("--seed", at_seed, "rng seed");
  attn->add_option("--qscale", at_qscale, "query scale factor");
  attn->add_flag("--verify", at_verify, "compare against the dense oracle");
  attn->add_option("--out", at_out, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  attn->add_option("--threads", at_threads, "worker threads (default ATN_THREADS or 1)");
  attn->add_option("--mask-out", at_mask_out, "write the block mask here");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(gen_n, gen_d, gen_dist, gen_seed, gen_dtype, gen_out);
    if (dump->parsed()) return cmd_dump(dump_path);
    if (solve->parsed())
      return cmd_solve(sv_alpha, sv_input, sv_method, sv_bins, sv_tol, sv_max_iters);
    if (bench->parsed())
      return cmd_bench_solver(bs_n, bs_alpha, bs_bins, bs_runs, bs_seed, bs_iters, bs_out);
    if (attn->parsed())
      return cmd_attn(at_n, at_d, at_alpha, at_block_r, at_block_c, at_bins, at_causal,
                      at_seed, at_qscale, at_verify, at_out, at_threads, at_mask_out);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
