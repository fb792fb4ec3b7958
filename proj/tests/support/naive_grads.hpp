#pragma once

// Test-only gradient oracle: differentiates the quadratic-time attention
// formulas with plain double loops, independently of the scan-based backward
// pass it is used to check.

#include <cmath>
#include <vector>

#include "slicedattn/core.hpp"
#include "slicedattn/gradients.hpp"
#include "slicedattn/model.hpp"

namespace testsupport {

using slicedattn::GradBundle;
using slicedattn::HeadParams;
using slicedattn::KernelConfig;
using slicedattn::Matrix;
using slicedattn::ProjectionKind;
using slicedattn::TokenSequence;

namespace detail {

// d(score_i)/d(everything) accumulated by brute force, one token at a time.
inline void chain_scores_naive(const TokenSequence<double>& seq, const slicedattn::AffineMap<double>& map,
                               const slicedattn::Projection<double>& proj, std::size_t head,
                               const std::vector<double>& dscore, slicedattn::AffineMap<double>& d_map,
                               slicedattn::Projection<double>& d_proj, Matrix<double>& d_tokens) {
  const std::size_t n = seq.rows, d = seq.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double ds = dscore[i];
    std::vector<double> y(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) y[r] += map.weight(r, c) * seq(i, c);
      if (!map.bias.empty()) y[r] += map.bias[r];
    }
    std::vector<double> gy(d, 0.0);
    if (proj.kind == ProjectionKind::Linear) {
      for (std::size_t c = 0; c < d; ++c) {
        gy[c] = ds * proj.weight(head, c);
        d_proj.weight(head, c) += ds * y[c];
      }
      d_proj.bias[head] += ds;
    } else {
      std::vector<double> pre(d, 0.0);
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) pre[r] += proj.hidden_weight(r, c) * y[c];
        if (!proj.hidden_bias.empty()) pre[r] += proj.hidden_bias[r];
      }
      for (std::size_t r = 0; r < d; ++r) {
        const double act = pre[r] > 0.0 ? pre[r] : 0.0;
        d_proj.weight(head, r) += ds * act;
      }
      d_proj.bias[head] += ds;
      for (std::size_t r = 0; r < d; ++r) {
        const double dz = pre[r] > 0.0 ? ds * proj.weight(head, r) : 0.0;
        if (dz == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) {
          d_proj.hidden_weight(r, c) += dz * y[c];
          gy[c] += dz * proj.hidden_weight(r, c);
        }
        d_proj.hidden_bias[r] += dz;
      }
    }
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        d_map.weight(r, c) += gy[r] * seq(i, c);
        d_tokens(i, c) += gy[r] * map.weight(r, c);
      }
      if (!d_map.bias.empty()) d_map.bias[r] += gy[r];
    }
  }
}

}  // namespace detail

inline GradBundle<double> relu_backward_naive(const TokenSequence<double>& seq, const HeadParams<double>& head,
                                              const KernelConfig& cfg, const Matrix<double>& upstream) {
  const std::size_t n = seq.rows, d = seq.cols;
  const double eps = slicedattn::resolved_epsilon<double>(cfg);
  const auto qs = slicedattn::project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = slicedattn::project_scores(seq, head.k, head.projection, head.proj_head);

  Matrix<double> values(n, d);
  for (std::size_t j = 0; j < n; ++j) head.v.apply(seq.row(j), values.row(j));
  Matrix<double> gamma = values;
  if (cfg.centering) {
    std::vector<double> mean(d, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) mean[c] += values(j, c) / n;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) gamma(j, c) -= mean[c];
  }

  std::vector<double> norm(n, 0.0);
  Matrix<double> numer(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < n; ++l) norm[i] += std::abs(qs[i] - ks[l]);
    for (std::size_t j = 0; j < n; ++j) {
      const double r = qs[i] - ks[j];
      if (r > 0.0)
        for (std::size_t c = 0; c < d; ++c) numer(i, c) += r * gamma(j, c);
    }
  }

  GradBundle<double> g = GradBundle<double>::zeros_like(seq, head);
  Matrix<double> dgamma(n, d);
  std::vector<double> dq(n, 0.0), dk(n, 0.0), dldn(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double inv = 1.0 / (norm[i] + eps);
    for (std::size_t c = 0; c < d; ++c) dldn[i] -= upstream(i, c) * numer(i, c) * inv * inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double r = qs[i] - ks[j];
      double gv = 0.0;
      for (std::size_t c = 0; c < d; ++c) gv += upstream(i, c) * gamma(j, c);
      if (r > 0.0) {
        for (std::size_t c = 0; c < d; ++c) dgamma(j, c) += upstream(i, c) * inv * r;
        dq[i] += gv * inv;
        dk[j] -= gv * inv;
      }
    }
  }
  // Normalizer path, separate pass.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < n; ++l) {
      const double r = qs[i] - ks[l];
      const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
      dq[i] += dldn[i] * sign;
      dk[l] -= dldn[i] * sign;
    }

  if (cfg.centering) {
    std::vector<double> mean(d, 0.0);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) mean[c] += dgamma(j, c) / n;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) dgamma(j, c) -= mean[c];
  }
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        g.d_v.weight(r, c) += dgamma(j, r) * seq(j, c);
        g.d_tokens(j, c) += dgamma(j, r) * head.v.weight(r, c);
      }
      g.d_v.bias[r] += dgamma(j, r);
    }
  detail::chain_scores_naive(seq, head.q, head.projection, head.proj_head, dq, g.d_q, g.d_projection, g.d_tokens);
  detail::chain_scores_naive(seq, head.k, head.projection, head.proj_head, dk, g.d_k, g.d_projection, g.d_tokens);
  return g;
}

inline GradBundle<double> bump_backward_naive(const TokenSequence<double>& seq, const HeadParams<double>& head,
                                              const KernelConfig& cfg, const Matrix<double>& upstream) {
  const std::size_t n = seq.rows, d = seq.cols;
  const double b = cfg.bandwidth;
  const auto qs = slicedattn::project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = slicedattn::project_scores(seq, head.k, head.projection, head.proj_head);

  Matrix<double> values(n, d);
  for (std::size_t j = 0; j < n; ++j) head.v.apply(seq.row(j), values.row(j));

  GradBundle<double> g = GradBundle<double>::zeros_like(seq, head);
  Matrix<double> dvalues(n, d);
  std::vector<double> dq(n, 0.0), dk(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double r = qs[i] - ks[j];
      const double w = 1.0 - std::abs(r) / b;
      if (w <= 0.0) continue;
      double gv = 0.0;
      for (std::size_t c = 0; c < d; ++c) gv += upstream(i, c) * values(j, c);
      for (std::size_t c = 0; c < d; ++c) dvalues(j, c) += upstream(i, c) * w / n;
      if (r != 0.0) {
        const double dw = -(r > 0.0 ? 1.0 : -1.0) / (b * n);
        dq[i] += gv * dw;
        dk[j] -= gv * dw;
      }
    }

  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        g.d_v.weight(r, c) += dvalues(j, r) * seq(j, c);
        g.d_tokens(j, c) += dvalues(j, r) * head.v.weight(r, c);
      }
      g.d_v.bias[r] += dvalues(j, r);
    }
  detail::chain_scores_naive(seq, head.q, head.projection, head.proj_head, dq, g.d_q, g.d_projection, g.d_tokens);
  detail::chain_scores_naive(seq, head.k, head.projection, head.proj_head, dk, g.d_k, g.d_projection, g.d_tokens);
  return g;
}

}  // namespace testsupport
