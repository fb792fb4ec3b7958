#pragma once

// Sliced attention forward passes. Scores live on a learned 1D slice; the
// interaction kernel is either the one-sided ReLU of score differences with
// an absolute-difference normalizer, or a compact triangular bump.

#include <string>
#include <vector>

#include "slicedattn/core.hpp"
#include "slicedattn/model.hpp"
#include "slicedattn/scan.hpp"

namespace slicedattn {

namespace detail {

// Value rows V x_j for all tokens.
template <class T>
Matrix<T> value_rows(const TokenSequence<T>& seq, const AffineMap<T>& v) {
  Matrix<T> out(seq.rows, v.d_out());
  for (std::size_t j = 0; j < seq.rows; ++j) v.apply(seq.row(j), out.row(j));
  return out;
}

// Subtract the per-column mean from every row. The sum runs in sorted-key
// order so that the result does not depend on the row order of the input
// (token permutations then commute with the whole forward pass exactly, as
// long as scores are distinct).
template <class T>
void center_rows_sorted(Matrix<T>& values, const ScanPlan<T>& plan) {
  const std::size_t n = values.rows, d = values.cols;
  std::vector<T> mean(d, T(0));
  for (std::size_t p = 0; p < plan.size(); ++p) {
    const std::uint32_t m = plan.sort_perm[p];
    if (m < plan.n_keys) axpy(T(1), values.row(m), mean.data(), d);
  }
  for (T& x : mean) x /= static_cast<T>(n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t c = 0; c < d; ++c) values(j, c) -= mean[c];
}

}  // namespace detail

// out_i = sum_j ReLU(sq_i - sk_j) / (N_i + eps) * gamma_j with
// N_i = sum_l |sq_i - sk_l| and gamma_j the (optionally centered) values.
// One merged sort serves both the numerator and the normalizer.
template <class T>
Matrix<T> relu_attention_forward(const TokenSequence<T>& seq, const HeadParams<T>& head, const KernelConfig& cfg) {
  validate_tokens(seq);
  validate_head(head, seq.cols);
  const T eps = resolved_epsilon<T>(cfg);

  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);
  Matrix<T> values = detail::value_rows(seq, head.v);

  const auto plan = make_scan_plan(ks, qs, &seq);
  if (cfg.centering) detail::center_rows_sorted(values, plan);

  Matrix<T> out = scan_numerator(plan, values, nullptr, cfg.threads);
  const auto norm = scan_normalizer(plan);
  for (std::size_t i = 0; i < out.rows; ++i) {
    const T inv = T(1) / (norm[i] + eps);
    T* o = out.row(i);
    for (std::size_t c = 0; c < out.cols; ++c) o[c] *= inv;
  }
  return out;
}

// out_i = (1/n) sum_j ReLU(1 - |sq_i - sk_j| / b) V x_j. The triangular
// kernel splits into three shifted ReLU interactions,
//   b * ReLU(1 - |t|/b) = ReLU(t + b) + ReLU(t - b) - 2 ReLU(t),
// so three sorted scans with key scores shifted by -b, +b and 0 cover it.
// Requires a linear projection; values are not centered.
template <class T>
Matrix<T> bump_attention_forward(const TokenSequence<T>& seq, const HeadParams<T>& head, const KernelConfig& cfg) {
  validate_tokens(seq);
  validate_head(head, seq.cols);
  if (head.projection.kind != ProjectionKind::Linear)
    throw ConfigError("bump attention requires a linear projection");
  if (!(cfg.bandwidth > 0.0)) throw ConfigError("bump attention requires bandwidth > 0");
  const T b = static_cast<T>(cfg.bandwidth);

  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);
  const Matrix<T> values = detail::value_rows(seq, head.v);

  const std::size_t n = seq.rows, d = values.cols;
  std::vector<T> shifted(n);
  auto shifted_scan = [&](T shift) {
    for (std::size_t j = 0; j < n; ++j) shifted[j] = ks[j] + shift;
    const auto plan = make_scan_plan(shifted, qs, &seq);
    return scan_numerator(plan, values, nullptr, cfg.threads);
  };
  const Matrix<T> low = shifted_scan(-b);   // ReLU(t + b)
  const Matrix<T> high = shifted_scan(+b);  // ReLU(t - b)
  const Matrix<T> mid = shifted_scan(T(0));

  Matrix<T> out(n, d);
  const T scale = T(1) / (static_cast<T>(n) * b);
  for (std::size_t i = 0; i < n * d; ++i)
    out.data[i] = (low.data[i] + high.data[i] - T(2) * mid.data[i]) * scale;
  return out;
}

template <class T>
Matrix<T> attention_forward(const TokenSequence<T>& seq, const HeadParams<T>& head, const KernelConfig& cfg,
                            Variant variant) {
  return variant == Variant::Relu ? relu_attention_forward(seq, head, cfg)
                                  : bump_attention_forward(seq, head, cfg);
}

// Residual multi-head layer: out_i = x_i + sum_h W^h head_h(x_i).
template <class T>
TokenSequence<T> multi_head_layer(const TokenSequence<T>& seq, const std::vector<HeadParams<T>>& heads,
                                  const KernelConfig& cfg, Variant variant) {
  validate_tokens(seq);
  if (heads.empty()) throw ConfigError("multi_head_layer: no heads");
  for (const auto& h : heads) {
    if (h.q.d_in() != seq.cols || h.v.d_out() != seq.cols)
      throw ConfigError("multi_head_layer: head dimension mismatch");
  }

  std::vector<Matrix<T>> per_head(heads.size());
  KernelConfig head_cfg = cfg;
  head_cfg.threads = 1;  // parallelism lives across heads here
  parallel_for(heads.size(), cfg.threads, [&](std::size_t h) {
    per_head[h] = attention_forward(seq, heads[h], head_cfg, variant);
  });

  TokenSequence<T> out = seq;
  std::vector<T> mixed(seq.cols);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const Matrix<T>& a = per_head[h];
    for (std::size_t i = 0; i < seq.rows; ++i) {
      if (heads[h].mixer.empty()) {
        axpy(T(1), a.row(i), out.row(i), seq.cols);
      } else {
        matvec(heads[h].mixer, a.row(i), mixed.data());
        axpy(T(1), mixed.data(), out.row(i), seq.cols);
      }
    }
  }
  return out;
}

}  // namespace slicedattn
