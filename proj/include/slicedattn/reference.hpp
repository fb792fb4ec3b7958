#pragma once

// Exact quadratic-time reference implementations. These are the ground-truth
// semantics the sliced paths are checked against; clarity over speed.

#include <cmath>
#include <limits>
#include <vector>

#include "slicedattn/core.hpp"
#include "slicedattn/model.hpp"

namespace slicedattn {

// Softmax attention with max-subtracted logits for stability.
template <class T>
Matrix<T> softmax_attention_naive(const TokenSequence<T>& seq, const HeadParams<T>& head) {
  validate_tokens(seq);
  validate_affine(head.q, seq.cols, "Q");
  validate_affine(head.k, seq.cols, "K");
  validate_affine(head.v, seq.cols, "V");
  const std::size_t n = seq.rows, d = seq.cols;

  Matrix<T> qm(n, d), km(n, d), vm(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    head.q.apply(seq.row(i), qm.row(i));
    head.k.apply(seq.row(i), km.row(i));
    head.v.apply(seq.row(i), vm.row(i));
  }

  Matrix<T> out(n, d);
  std::vector<T> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    T max_logit = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = dot(qm.row(i), km.row(j), d);
      max_logit = std::max(max_logit, logits[j]);
    }
    T denom = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = std::exp(logits[j] - max_logit);
      denom += logits[j];
    }
    for (std::size_t j = 0; j < n; ++j) axpy(logits[j] / denom, vm.row(j), out.row(i), d);
  }
  return out;
}

// Double-loop transcription of sliced ReLU attention, same epsilon floor as
// the sliced path. This is the authoritative semantics.
template <class T>
Matrix<T> relu_attention_naive(const TokenSequence<T>& seq, const HeadParams<T>& head, const KernelConfig& cfg) {
  validate_tokens(seq);
  validate_head(head, seq.cols);
  const T eps = resolved_epsilon<T>(cfg);
  const std::size_t n = seq.rows, d = seq.cols;

  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);

  Matrix<T> values(n, d);
  for (std::size_t j = 0; j < n; ++j) head.v.apply(seq.row(j), values.row(j));
  if (cfg.centering) {
    std::vector<T> mean(d, T(0));
    for (std::size_t j = 0; j < n; ++j) axpy(T(1), values.row(j), mean.data(), d);
    for (T& x : mean) x /= static_cast<T>(n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) values(j, c) -= mean[c];
  }

  Matrix<T> out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    T norm = T(0);
    for (std::size_t l = 0; l < n; ++l) norm += std::abs(qs[i] - ks[l]);
    const T inv = T(1) / (norm + eps);
    for (std::size_t j = 0; j < n; ++j) {
      const T diff = qs[i] - ks[j];
      if (diff > T(0)) axpy(diff * inv, values.row(j), out.row(i), d);
    }
  }
  return out;
}

// Double-loop transcription of the bump kernel, 1/n normalization.
template <class T>
Matrix<T> bump_attention_naive(const TokenSequence<T>& seq, const HeadParams<T>& head, const KernelConfig& cfg) {
  validate_tokens(seq);
  validate_head(head, seq.cols);
  if (!(cfg.bandwidth > 0.0)) throw ConfigError("bump attention requires bandwidth > 0");
  const T b = static_cast<T>(cfg.bandwidth);
  const std::size_t n = seq.rows, d = seq.cols;

  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);

  Matrix<T> values(n, d);
  for (std::size_t j = 0; j < n; ++j) head.v.apply(seq.row(j), values.row(j));

  Matrix<T> out(n, d);
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const T w = T(1) - std::abs(qs[i] - ks[j]) / b;
      if (w > T(0)) axpy(w * inv_n, values.row(j), out.row(i), d);
    }
  }
  return out;
}

}  // namespace slicedattn
