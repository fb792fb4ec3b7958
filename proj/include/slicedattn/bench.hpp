#pragma once

// Wall-clock scaling harness. Times single-head forward passes over a grid
// of sequence lengths and fits the log-log slope, with a correctness gate
// comparing sliced and naive outputs before any timing starts.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "slicedattn/attention.hpp"
#include "slicedattn/core.hpp"
#include "slicedattn/model.hpp"
#include "slicedattn/reference.hpp"

namespace slicedattn {

enum class BenchImpl { SlicedRelu, NaiveRelu, NaiveSoftmax, SlicedBump };

inline const char* bench_impl_name(BenchImpl impl) {
  switch (impl) {
    case BenchImpl::SlicedRelu: return "sliced_relu";
    case BenchImpl::NaiveRelu: return "naive_relu";
    case BenchImpl::NaiveSoftmax: return "naive_softmax";
    case BenchImpl::SlicedBump: return "sliced_bump";
  }
  return "?";
}

inline BenchImpl bench_impl_from_name(const std::string& name) {
  if (name == "sliced_relu") return BenchImpl::SlicedRelu;
  if (name == "naive_relu") return BenchImpl::NaiveRelu;
  if (name == "naive_softmax") return BenchImpl::NaiveSoftmax;
  if (name == "sliced_bump") return BenchImpl::SlicedBump;
  throw ParseError("unknown benchmark impl '" + name + "'");
}

inline bool bench_impl_is_naive(BenchImpl impl) {
  return impl == BenchImpl::NaiveRelu || impl == BenchImpl::NaiveSoftmax;
}

struct BenchRecord {
  std::size_t n = 0, d = 0, heads = 1;
  BenchImpl impl = BenchImpl::SlicedRelu;
  std::string dtype = "f64";
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double median_ms = 0.0;  // reported on stdout; the CSV keeps the fixed header
  int reps = 0;
};

struct BenchOptions {
  std::vector<std::size_t> n_grid;
  std::size_t d = 16;
  std::size_t heads = 1;
  std::vector<BenchImpl> impls = {BenchImpl::SlicedRelu, BenchImpl::NaiveRelu, BenchImpl::NaiveSoftmax};
  int reps = 5;
  int warmup = 2;
  std::uint64_t seed = 0;
  std::string dtype = "f64";
  int threads = 1;
  double bandwidth = 0.5;
  std::size_t naive_cap = std::size_t(1) << 13;  // refuse larger naive runs
  bool force_naive = false;
  double gate_tolerance = 1e-10;
  std::size_t gate_n = 1024;
};

namespace detail {

template <class T>
struct BenchInstance {
  TokenSequence<T> seq;
  std::vector<HeadParams<T>> heads;
};

template <class T>
BenchInstance<T> make_bench_instance(std::size_t n, std::size_t d, std::size_t heads, std::uint64_t seed) {
  Rng rng(seed);
  BenchInstance<T> inst;
  inst.seq = random_normal_matrix<T>(rng, n, d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t h = 0; h < heads; ++h) {
    HeadParams<T> head;
    head.q = {random_normal_matrix<T>(rng, d, d, scale), {}};
    head.k = {random_normal_matrix<T>(rng, d, d, scale), {}};
    head.v = {random_normal_matrix<T>(rng, d, d, scale), {}};
    head.projection = Projection<T>::linear(random_normal_matrix<T>(rng, 1, d, scale), {T(0)});
    inst.heads.push_back(std::move(head));
  }
  return inst;
}

// One timed unit = one forward pass of every head, so the naive and sliced
// rows do comparable work at each n.
template <class T>
Matrix<T> run_impl(const BenchInstance<T>& inst, BenchImpl impl, const KernelConfig& cfg) {
  Matrix<T> out;
  for (const auto& head : inst.heads) {
    switch (impl) {
      case BenchImpl::SlicedRelu: out = relu_attention_forward(inst.seq, head, cfg); break;
      case BenchImpl::NaiveRelu: out = relu_attention_naive(inst.seq, head, cfg); break;
      case BenchImpl::NaiveSoftmax: out = softmax_attention_naive(inst.seq, head); break;
      case BenchImpl::SlicedBump: out = bump_attention_forward(inst.seq, head, cfg); break;
    }
  }
  return out;
}

}  // namespace detail

// Relative max-norm disagreement between the sliced and naive paths on one
// of the benchmark instances; must pass before any timing is recorded. The
// gate instance is the largest grid point the naive path can afford.
inline double bench_correctness_gate(const BenchOptions& opt) {
  std::size_t n = 0;
  for (const std::size_t candidate : opt.n_grid)
    if (candidate <= std::min<std::size_t>(opt.naive_cap, opt.gate_n)) n = std::max(n, candidate);
  if (n == 0) n = std::min<std::size_t>(opt.gate_n, opt.naive_cap);
  const auto inst = detail::make_bench_instance<double>(n, opt.d, opt.heads, opt.seed + n);
  KernelConfig cfg;
  cfg.bandwidth = opt.bandwidth;
  double worst = 0.0;
  auto compare = [&](const Matrix<double>& a, const Matrix<double>& b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
      diff = std::max(diff, std::abs(a.data[i] - b.data[i]));
      scale = std::max(scale, std::abs(b.data[i]));
    }
    worst = std::max(worst, diff / std::max(scale, 1e-300));
  };
  bool need_relu = false, need_bump = false;
  for (const BenchImpl impl : opt.impls) {
    need_relu = need_relu || impl == BenchImpl::SlicedRelu || impl == BenchImpl::NaiveRelu;
    need_bump = need_bump || impl == BenchImpl::SlicedBump;
  }
  for (const auto& head : inst.heads) {
    if (need_relu) compare(relu_attention_forward(inst.seq, head, cfg), relu_attention_naive(inst.seq, head, cfg));
    if (need_bump) compare(bump_attention_forward(inst.seq, head, cfg), bump_attention_naive(inst.seq, head, cfg));
  }
  return worst;
}

template <class T>
BenchRecord bench_one(BenchImpl impl, std::size_t n, const BenchOptions& opt) {
  const auto inst = detail::make_bench_instance<T>(n, opt.d, opt.heads, opt.seed + n);
  KernelConfig cfg;
  cfg.bandwidth = opt.bandwidth;
  cfg.threads = opt.threads;

  using clock = std::chrono::steady_clock;
  volatile double sink = 0.0;  // keep the result alive
  std::vector<double> times_ms;
  for (int rep = 0; rep < opt.warmup + opt.reps; ++rep) {
    const auto start = clock::now();
    const Matrix<T> out = detail::run_impl(inst, impl, cfg);
    const auto stop = clock::now();
    sink = sink + static_cast<double>(out.data[0]);
    if (rep >= opt.warmup)
      times_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  (void)sink;

  BenchRecord rec;
  rec.n = n;
  rec.d = opt.d;
  rec.heads = opt.heads;
  rec.impl = impl;
  rec.dtype = opt.dtype;
  rec.reps = static_cast<int>(times_ms.size());
  double mean = 0.0;
  for (const double t : times_ms) mean += t;
  mean /= times_ms.size();
  double var = 0.0;
  for (const double t : times_ms) var += (t - mean) * (t - mean);
  rec.mean_ms = mean;
  rec.std_ms = times_ms.size() > 1 ? std::sqrt(var / (times_ms.size() - 1)) : 0.0;
  std::vector<double> sorted = times_ms;
  std::sort(sorted.begin(), sorted.end());
  rec.median_ms = sorted[sorted.size() / 2];
  return rec;
}

// Gate first, then time every (impl, n) pair. Naive impls above the size cap
// are refused (reported via `refused` when given) unless forced.
inline std::vector<BenchRecord> run_bench(const BenchOptions& opt, std::vector<std::string>* refused = nullptr) {
  if (opt.n_grid.empty()) throw InputError("bench: empty n grid");
  if (opt.reps < 3) throw InputError("bench: need reps >= 3");
  const double gate = bench_correctness_gate(opt);
  if (!(gate <= opt.gate_tolerance))
    throw NumericError("bench: correctness gate failed (relative error " + std::to_string(gate) + ")");
  std::vector<BenchRecord> records;
  for (const BenchImpl impl : opt.impls) {
    for (const std::size_t n : opt.n_grid) {
      if (bench_impl_is_naive(impl) && n > opt.naive_cap && !opt.force_naive) {
        if (refused)
          refused->push_back(std::string(bench_impl_name(impl)) + " at n=" + std::to_string(n) +
                             " (cap " + std::to_string(opt.naive_cap) + ", use --force-naive)");
        continue;
      }
      if (opt.dtype == "f32")
        records.push_back(bench_one<float>(impl, n, opt));
      else
        records.push_back(bench_one<double>(impl, n, opt));
    }
  }
  return records;
}

// Least-squares slope of log2(time) against log2(n).
inline double fit_loglog_slope(const std::vector<std::pair<std::size_t, double>>& points) {
  if (points.size() < 2) throw InputError("slope fit: need at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& [n, ms] : points) {
    const double x = std::log2(static_cast<double>(n));
    const double y = std::log2(ms);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double m = static_cast<double>(points.size());
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

inline double fit_loglog_slope(const std::vector<BenchRecord>& records, BenchImpl impl) {
  std::vector<std::pair<std::size_t, double>> points;
  for (const auto& r : records)
    if (r.impl == impl) points.emplace_back(r.n, r.mean_ms);
  return fit_loglog_slope(points);
}

}  // namespace slicedattn
