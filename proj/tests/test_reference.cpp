#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "slicedattn/reference.hpp"
#include "support/test_util.hpp"

using namespace slicedattn;
using testsupport::random_head;
using testsupport::random_tokens;
using testsupport::relative_error;

namespace {

// Unstabilized softmax attention in extended precision.
Matrix<double> softmax_long_double_oracle(const TokenSequence<double>& seq, const HeadParams<double>& head) {
  const std::size_t n = seq.rows, d = seq.cols;
  std::vector<std::vector<long double>> qm(n), km(n), vm(n);
  for (std::size_t i = 0; i < n; ++i) {
    qm[i].assign(d, 0.0L);
    km[i].assign(d, 0.0L);
    vm[i].assign(d, 0.0L);
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = 0; c < d; ++c) {
        qm[i][r] += static_cast<long double>(head.q.weight(r, c)) * seq(i, c);
        km[i][r] += static_cast<long double>(head.k.weight(r, c)) * seq(i, c);
        vm[i][r] += static_cast<long double>(head.v.weight(r, c)) * seq(i, c);
      }
      if (!head.q.bias.empty()) qm[i][r] += head.q.bias[r];
      if (!head.k.bias.empty()) km[i][r] += head.k.bias[r];
      if (!head.v.bias.empty()) vm[i][r] += head.v.bias[r];
    }
  }
  Matrix<double> out(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    long double denom = 0.0L;
    std::vector<long double> weights(n);
    for (std::size_t j = 0; j < n; ++j) {
      long double logit = 0.0L;
      for (std::size_t c = 0; c < d; ++c) logit += qm[i][c] * km[j][c];
      weights[j] = std::exp(logit);
      denom += weights[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c)
        out(i, c) += static_cast<double>(weights[j] / denom * vm[j][c]);
  }
  return out;
}

}  // namespace

TEST(SoftmaxNaive, UniformLogitsGiveValueMean) {
  Rng rng(1);
  const std::size_t n = 9, d = 3;
  const auto seq = random_tokens(rng, n, d);
  auto head = random_head(rng, d, 1, ProjectionKind::Linear);
  head.q.weight = Matrix<double>(d, d);  // zero queries: every logit is 0
  head.q.bias.clear();
  const auto out = softmax_attention_naive(seq, head);
  std::vector<double> mean(d, 0.0), v(d);
  for (std::size_t j = 0; j < n; ++j) {
    head.v.apply(seq.row(j), v.data());
    for (std::size_t c = 0; c < d; ++c) mean[c] += v[c] / n;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(out(i, c), mean[c], 1e-12);
}

TEST(SoftmaxNaive, SingleTokenReturnsItsValue) {
  Rng rng(2);
  const auto seq = random_tokens(rng, 1, 4);
  const auto head = random_head(rng, 4, 1, ProjectionKind::Linear);
  const auto out = softmax_attention_naive(seq, head);
  std::vector<double> v(4);
  head.v.apply(seq.row(0), v.data());
  for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(out(0, c), v[c], 1e-15);
}

TEST(SoftmaxNaive, MatchesExtendedPrecisionOracle) {
  Rng rng(3);
  const auto seq = random_tokens(rng, 32, 4);
  const auto head = random_head(rng, 4, 1, ProjectionKind::Linear);
  EXPECT_LE(relative_error(softmax_attention_naive(seq, head), softmax_long_double_oracle(seq, head)), 1e-12);
}

TEST(SoftmaxNaive, WeightsRowSumToOneAndStayPositive) {
  Rng rng(4);
  const std::size_t n = 16, d = 3;
  const auto seq = random_tokens(rng, n, d);
  const auto head = random_head(rng, d, 1, ProjectionKind::Linear);
  Matrix<double> qm(n, d), km(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    head.q.apply(seq.row(i), qm.row(i));
    head.k.apply(seq.row(i), km.row(i));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double max_logit = -std::numeric_limits<double>::infinity();
    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) {
      logits[j] = dot(qm.row(i), km.row(j), d);
      max_logit = std::max(max_logit, logits[j]);
    }
    double denom = 0.0;
    for (double& l : logits) denom += (l = std::exp(l - max_logit));
    double row_sum = 0.0;
    for (const double l : logits) {
      const double w = l / denom;
      EXPECT_GT(w, 0.0);
      row_sum += w;
    }
    EXPECT_NEAR(row_sum, 1.0, 1e-12);
  }
}

TEST(ReluNaive, SingleTokenCenteredIsZero) {
  Rng rng(5);
  const auto seq = random_tokens(rng, 1, 3);
  const auto head = random_head(rng, 3, 1, ProjectionKind::Mlp1);
  const auto out = relu_attention_naive(seq, head, KernelConfig{});
  for (const double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(ReluNaive, ConstantValuesVanishUnderCentering) {
  Rng rng(6);
  const std::size_t n = 8, d = 3;
  const auto seq = random_tokens(rng, n, d);
  auto head = random_head(rng, d, 1, ProjectionKind::Linear);
  head.v.weight = Matrix<double>(d, d);  // zero map
  head.v.bias = {0.5, -1.0, 2.0};        // every value row is this constant
  const auto out = relu_attention_naive(seq, head, KernelConfig{});
  for (const double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(BumpNaive, WideBandwidthMatchesDirectFormula) {
  Rng rng(7);
  const std::size_t n = 12, d = 2;
  TokenSequence<double> seq(n, d);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (double& v : seq.data) v = uni(rng);
  HeadParams<double> head;
  head.q = AffineMap<double>::identity(d);
  head.k = AffineMap<double>::identity(d);
  head.v = AffineMap<double>::identity(d);
  Matrix<double> w(1, d);
  w(0, 0) = 1.0;  // scores are the first coordinate, inside [0, 1]
  head.projection = Projection<double>::linear(w);
  KernelConfig cfg;
  cfg.bandwidth = 2.0;  // at least the score spread plus one

  const auto out = bump_attention_naive(seq, head, cfg);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double expect = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        expect += (1.0 - std::abs(seq(i, 0) - seq(j, 0)) / cfg.bandwidth) * seq(j, c) / n;
      EXPECT_NEAR(out(i, c), expect, 1e-14);
    }
}

TEST(BumpNaive, DisjointClustersDoNotInteract) {
  // Two score clusters further apart than the bandwidth: each token only
  // averages over its own cluster.
  const std::size_t d = 2;
  TokenSequence<double> seq(4, d);
  seq(0, 0) = 0.0;
  seq(1, 0) = 0.1;
  seq(2, 0) = 5.0;
  seq(3, 0) = 5.1;
  for (std::size_t i = 0; i < 4; ++i) seq(i, 1) = static_cast<double>(i);
  HeadParams<double> head;
  head.q = AffineMap<double>::identity(d);
  head.k = AffineMap<double>::identity(d);
  head.v = AffineMap<double>::identity(d);
  Matrix<double> w(1, d);
  w(0, 0) = 1.0;
  head.projection = Projection<double>::linear(w);
  KernelConfig cfg;
  cfg.bandwidth = 1.0;

  const auto out = bump_attention_naive(seq, head, cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    const std::size_t other_lo = i < 2 ? 2 : 0;
    double expect1 = 0.0;
    for (std::size_t j = (i < 2 ? 0 : 2); j < (i < 2 ? 2 : 4); ++j)
      expect1 += (1.0 - std::abs(seq(i, 0) - seq(j, 0))) * seq(j, 1) / 4.0;
    EXPECT_NEAR(out(i, 1), expect1, 1e-15);
    (void)other_lo;
  }
}
