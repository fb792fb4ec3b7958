#pragma once

// Sort-and-scan evaluation of ReLU interactions.
//
// For nondecreasing scores z_1 <= ... <= z_m with attached vectors g_j, the
// running sums
//     a_i = sum_{j<=i} g_j,       b_i = sum_{j<=i} g_j z_j
// give   sum_j ReLU(z_i - z_j) g_j = a_i z_i - b_i
// in one linear pass, so the whole interaction costs one sort plus O(m d).
//
// Attention needs sums of ReLU(q_i - k_j) over keys only. Keys and queries
// are merged into a single scored array where keys carry their value vectors
// and queries carry zero; after the scan, the rows at query positions are the
// wanted sums. Ties sort keys before queries (stable on original index), and
// every consumer reads the prefix as of the last strictly smaller score, so a
// tied pair contributes exactly zero, matching ReLU(0) = 0 bit for bit.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "slicedattn/core.hpp"

namespace slicedattn {

// Sorted ordering of the merged key+query score array plus the per-position
// prefix data needed by the forward and backward passes. Merged indices
// 0..nk-1 are keys, nk..nk+nq-1 are queries. The *_strict arrays hold the
// prefix over keys with score strictly below the position's score.
template <class T>
struct ScanPlan {
  std::size_t n_keys = 0;
  std::size_t n_queries = 0;
  std::vector<T> sorted_scores;             // nondecreasing
  std::vector<std::uint32_t> sort_perm;     // sorted position -> merged index
  std::vector<std::uint32_t> inverse_perm;  // merged index -> sorted position
  std::vector<std::uint32_t> keys_below;    // #keys at positions <= it (ties included)
  std::vector<T> key_score_below;           // sum of those key scores
  std::vector<std::uint32_t> keys_below_strict;  // #keys with strictly smaller score
  std::vector<T> key_score_below_strict;
  T key_score_total = T(0);

  // Running sums recorded by scans that carry values; one row per sorted
  // position (prefix_gamma = a_i, prefix_weighted = b_i).
  Matrix<T> prefix_gamma;
  Matrix<T> prefix_weighted;

  std::size_t size() const { return n_keys + n_queries; }
  bool is_key(std::size_t sorted_pos) const { return sort_perm[sorted_pos] < n_keys; }
};

// `tiebreak`, when given, supplies one row per token (keys and queries index
// the same rows) used to order exact score ties. Ordering ties by token data
// instead of array position keeps every prefix sum independent of the input
// row order, so token permutations commute with the scans bit for bit.
template <class T>
ScanPlan<T> make_scan_plan(const std::vector<T>& key_scores, const std::vector<T>& query_scores,
                           std::type_identity_t<const Matrix<T>*> tiebreak = nullptr) {
  ScanPlan<T> plan;
  const std::size_t nk = key_scores.size(), nq = query_scores.size(), m = nk + nq;
  plan.n_keys = nk;
  plan.n_queries = nq;
  plan.sort_perm.resize(m);
  std::iota(plan.sort_perm.begin(), plan.sort_perm.end(), 0u);
  auto score_of = [&](std::uint32_t i) { return i < nk ? key_scores[i] : query_scores[i - nk]; };
  std::sort(plan.sort_perm.begin(), plan.sort_perm.end(), [&](std::uint32_t a, std::uint32_t b) {
    const T sa = score_of(a), sb = score_of(b);
    if (sa != sb) return sa < sb;
    const bool a_key = a < nk, b_key = b < nk;
    if (a_key != b_key) return a_key;  // keys before queries at equal score
    if (tiebreak) {
      const T* ra = tiebreak->row(a_key ? a : a - nk);
      const T* rb = tiebreak->row(b_key ? b : b - nk);
      for (std::size_t c = 0; c < tiebreak->cols; ++c)
        if (ra[c] != rb[c]) return ra[c] < rb[c];
    }
    return a < b;
  });
  plan.sorted_scores.resize(m);
  plan.inverse_perm.resize(m);
  plan.keys_below.resize(m);
  plan.key_score_below.resize(m);
  plan.keys_below_strict.resize(m);
  plan.key_score_below_strict.resize(m);
  std::uint32_t count = 0, run_count = 0;
  T score_sum = T(0), run_sum = T(0);
  for (std::size_t p = 0; p < m; ++p) {
    const std::uint32_t i = plan.sort_perm[p];
    plan.inverse_perm[i] = static_cast<std::uint32_t>(p);
    const T s = score_of(i);
    plan.sorted_scores[p] = s;
    if (p == 0 || s != plan.sorted_scores[p - 1]) {  // new score run
      run_count = count;
      run_sum = score_sum;
    }
    if (i < nk) {
      ++count;
      score_sum += s;
    }
    plan.keys_below[p] = count;
    plan.key_score_below[p] = score_sum;
    plan.keys_below_strict[p] = run_count;
    plan.key_score_below_strict[p] = run_sum;
  }
  plan.key_score_total = score_sum;
  return plan;
}

// out_i = sum_j ReLU(q_i - k_j) values_j, indexed by query. When
// prefix_at_query is given, its row i receives a_i = sum of key values with
// score strictly below query i (needed by the backward pass).
template <class T>
Matrix<T> scan_numerator(const ScanPlan<T>& plan, const Matrix<T>& values,
                         std::type_identity_t<Matrix<T>*> prefix_at_query = nullptr, int threads = 1) {
  const std::size_t nk = plan.n_keys, nq = plan.n_queries, d = values.cols;
  if (values.rows != nk) throw ShapeError("scan: values row count mismatch");
  Matrix<T> out(nq, d);
  if (prefix_at_query) *prefix_at_query = Matrix<T>(nq, d);

  // Columns are independent; split them when asked to run parallel.
  const std::size_t blocks = threads > 1 ? std::min<std::size_t>(static_cast<std::size_t>(threads), d) : 1;
  parallel_for(blocks, static_cast<int>(blocks), [&](std::size_t blk) {
    const std::size_t c0 = blk * d / blocks, c1 = (blk + 1) * d / blocks;
    const std::size_t w = c1 - c0;
    if (w == 0) return;
    std::vector<T> acc(w, T(0)), accz(w, T(0));      // all keys so far
    std::vector<T> racc(w, T(0)), raccz(w, T(0));    // as of the current score run's start
    for (std::size_t p = 0; p < nk + nq; ++p) {
      const std::uint32_t m = plan.sort_perm[p];
      const T z = plan.sorted_scores[p];
      if (p == 0 || z != plan.sorted_scores[p - 1]) {
        racc = acc;
        raccz = accz;
      }
      if (m < nk) {
        const T* g = values.row(m) + c0;
        for (std::size_t c = 0; c < w; ++c) {
          acc[c] += g[c];
          accz[c] += g[c] * z;
        }
      } else {
        T* o = out.row(m - nk) + c0;
        for (std::size_t c = 0; c < w; ++c) o[c] = racc[c] * z - raccz[c];
        if (prefix_at_query) {
          T* a = prefix_at_query->row(m - nk) + c0;
          for (std::size_t c = 0; c < w; ++c) a[c] = racc[c];
        }
      }
    }
  });
  return out;
}

// Fills plan.prefix_gamma / plan.prefix_weighted with the inclusive running
// sums a_i = sum_{j<=i} g_j and b_i = sum_{j<=i} g_j z_j over the sorted
// merged array (queries carry zero). One row per sorted position.
template <class T>
void record_scan_prefixes(ScanPlan<T>& plan, const Matrix<T>& values) {
  const std::size_t nk = plan.n_keys, d = values.cols;
  if (values.rows != nk) throw ShapeError("scan: values row count mismatch");
  plan.prefix_gamma = Matrix<T>(plan.size(), d);
  plan.prefix_weighted = Matrix<T>(plan.size(), d);
  std::vector<T> a(d, T(0)), b(d, T(0));
  for (std::size_t p = 0; p < plan.size(); ++p) {
    const std::uint32_t m = plan.sort_perm[p];
    if (m < nk) {
      const T z = plan.sorted_scores[p];
      const T* g = values.row(m);
      for (std::size_t c = 0; c < d; ++c) {
        a[c] += g[c];
        b[c] += g[c] * z;
      }
    }
    std::copy(a.begin(), a.end(), plan.prefix_gamma.row(p));
    std::copy(b.begin(), b.end(), plan.prefix_weighted.row(p));
  }
}

// N_i = sum_l |q_i - k_l|, from the same sorted pass: |t| = ReLU(t) + ReLU(-t),
// with keys tied to the query contributing exactly zero.
template <class T>
std::vector<T> scan_normalizer(const ScanPlan<T>& plan) {
  const std::size_t nk = plan.n_keys, nq = plan.n_queries;
  std::vector<T> out(nq);
  for (std::size_t p = 0; p < nk + nq; ++p) {
    const std::uint32_t m = plan.sort_perm[p];
    if (m < nk) continue;
    const T z = plan.sorted_scores[p];
    const T below_cnt = static_cast<T>(plan.keys_below_strict[p]);
    const T below_sum = plan.key_score_below_strict[p];
    // Ties are excluded from both sides: above = total - inclusive below.
    const T above_cnt = static_cast<T>(nk - plan.keys_below[p]);
    const T above_sum = plan.key_score_total - plan.key_score_below[p];
    out[m - nk] = (below_cnt * z - below_sum) + (above_sum - above_cnt * z);
  }
  return out;
}

// Transposed interaction, indexed by key: out_j = sum_i ReLU(q_i - k_j) h_i,
// a suffix scan over the same ordering. When suffix_at_key is given, its row
// j receives the sum of h over queries with score strictly above key j.
template <class T>
Matrix<T> scan_transposed(const ScanPlan<T>& plan, const Matrix<T>& h,
                          std::type_identity_t<Matrix<T>*> suffix_at_key = nullptr) {
  const std::size_t nk = plan.n_keys, nq = plan.n_queries, d = h.cols;
  if (h.rows != nq) throw ShapeError("scan: upstream row count mismatch");
  Matrix<T> out(nk, d);
  if (suffix_at_key) *suffix_at_key = Matrix<T>(nk, d);
  std::vector<T> acc(d, T(0)), accz(d, T(0));    // all queries from the top
  std::vector<T> racc(d, T(0)), raccz(d, T(0));  // as of the current run's start (descending)
  for (std::size_t p = nk + nq; p-- > 0;) {
    const std::uint32_t m = plan.sort_perm[p];
    const T z = plan.sorted_scores[p];
    if (p + 1 == nk + nq || z != plan.sorted_scores[p + 1]) {
      racc = acc;
      raccz = accz;
    }
    if (m >= nk) {
      const T* g = h.row(m - nk);
      for (std::size_t c = 0; c < d; ++c) {
        acc[c] += g[c];
        accz[c] += g[c] * z;
      }
    } else {
      T* o = out.row(m);
      for (std::size_t c = 0; c < d; ++c) o[c] = raccz[c] - racc[c] * z;
      if (suffix_at_key) {
        T* a = suffix_at_key->row(m);
        for (std::size_t c = 0; c < d; ++c) a[c] = racc[c];
      }
    }
  }
  return out;
}

// Scalar sums of a per-query weight, read at key positions, ties excluded:
// below_j = sum_{i : q_i < k_j} w_i and above_j = sum_{i : q_i > k_j} w_i.
template <class T>
void scan_query_sums_at_keys(const ScanPlan<T>& plan, const std::vector<T>& w, std::vector<T>& below,
                             std::vector<T>& above) {
  const std::size_t nk = plan.n_keys, nq = plan.n_queries;
  below.assign(nk, T(0));
  above.assign(nk, T(0));
  T run = T(0), run_start = T(0);
  for (std::size_t p = 0; p < nk + nq; ++p) {
    const std::uint32_t m = plan.sort_perm[p];
    if (p == 0 || plan.sorted_scores[p] != plan.sorted_scores[p - 1]) run_start = run;
    if (m >= nk)
      run += w[m - nk];
    else
      below[m] = run_start;
  }
  run = T(0);
  run_start = T(0);
  for (std::size_t p = nk + nq; p-- > 0;) {
    const std::uint32_t m = plan.sort_perm[p];
    if (p + 1 == nk + nq || plan.sorted_scores[p] != plan.sorted_scores[p + 1]) run_start = run;
    if (m >= nk)
      run += w[m - nk];
    else
      above[m] = run_start;
  }
}

// ---------------------------------------------------------------------------
// relu_scan: the one-sided primitive on an already sorted array.
// out_i = sum_j ReLU(z_i - z_j) gamma_j = a_i z_i - b_i, entries tied with
// z_i contributing exactly zero.

template <class T>
Matrix<T> relu_scan(const std::vector<T>& z, const Matrix<T>& gamma,
                    std::type_identity_t<Matrix<T>*> prefix_gamma = nullptr,
                    std::type_identity_t<Matrix<T>*> prefix_weighted = nullptr) {
  const std::size_t m = z.size();
  if (gamma.rows != m) throw ShapeError("relu_scan: score/value count mismatch");
  for (std::size_t i = 1; i < m; ++i)
    if (z[i] < z[i - 1])
      throw InputError("relu_scan: scores not nondecreasing at index " + std::to_string(i));
  const std::size_t d = gamma.cols;
  Matrix<T> out(m, d);
  if (prefix_gamma) *prefix_gamma = Matrix<T>(m, d);
  if (prefix_weighted) *prefix_weighted = Matrix<T>(m, d);
  std::vector<T> a(d, T(0)), b(d, T(0)), ra(d, T(0)), rb(d, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const T zi = z[i];
    if (i == 0 || zi != z[i - 1]) {
      ra = a;
      rb = b;
    }
    const T* g = gamma.row(i);
    for (std::size_t c = 0; c < d; ++c) {
      out(i, c) = ra[c] * zi - rb[c];
      a[c] += g[c];
      b[c] += g[c] * zi;
    }
    if (prefix_gamma) std::copy(ra.begin(), ra.end(), prefix_gamma->row(i));
    if (prefix_weighted) std::copy(rb.begin(), rb.end(), prefix_weighted->row(i));
  }
  return out;
}

// ---------------------------------------------------------------------------
// abs_diff_normalizer: out_i = sum_l |q_i - k_l| without the double loop.

template <class T>
std::vector<T> abs_diff_normalizer(const std::vector<T>& query_scores, const std::vector<T>& key_scores) {
  if (!all_finite(query_scores) || !all_finite(key_scores))
    throw NumericError("abs_diff_normalizer: non-finite score");
  const auto plan = make_scan_plan(key_scores, query_scores);
  return scan_normalizer(plan);
}

}  // namespace slicedattn
