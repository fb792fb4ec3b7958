#include <algorithm>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "slicedattn/attention.hpp"
#include "slicedattn/reference.hpp"
#include "support/test_util.hpp"

using namespace slicedattn;
using testsupport::max_abs_diff;
using testsupport::random_head;
using testsupport::random_tokens;
using testsupport::relative_error;

namespace {

// The bump kernel written as its three-shift decomposition, each shift a
// plain quadratic ReLU convolution. Independent of the scan path.
Matrix<double> bump_three_shift_oracle(const TokenSequence<double>& seq, const HeadParams<double>& head,
                                       const KernelConfig& cfg) {
  const std::size_t n = seq.rows, d = seq.cols;
  const double b = cfg.bandwidth;
  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);
  Matrix<double> values(n, d);
  for (std::size_t j = 0; j < n; ++j) head.v.apply(seq.row(j), values.row(j));
  Matrix<double> out(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double t = qs[i] - ks[j];
      double w = 0.0;
      if (t + b > 0.0) w += t + b;
      if (t - b > 0.0) w += t - b;
      if (t > 0.0) w -= 2.0 * t;
      if (w != 0.0)
        for (std::size_t c = 0; c < d; ++c) out(i, c) += w / (n * b) * values(j, c);
    }
  return out;
}

}  // namespace

TEST(ReluForward, SingleTokenCenteredIsZero) {
  Rng rng(1);
  const auto seq = random_tokens(rng, 1, 4);
  const auto head = random_head(rng, 4, 1, ProjectionKind::Mlp1);
  const auto out = relu_attention_forward(seq, head, KernelConfig{});
  for (const double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(ReluForward, AllScoresEqualGivesZero) {
  Rng rng(2);
  const auto seq = random_tokens(rng, 6, 3);
  auto head = random_head(rng, 3, 1, ProjectionKind::Linear);
  head.projection = Projection<double>::linear(Matrix<double>(1, 3), {1.0});  // constant score 1
  KernelConfig cfg;
  cfg.centering = false;
  const auto out = relu_attention_forward(seq, head, cfg);
  for (const double v : out.data) EXPECT_EQ(v, 0.0);
}

TEST(ReluForward, MatchesNaiveOracleAcrossShapes) {
  Rng rng(3);
  int case_id = 0;
  for (const std::size_t n : {1u, 2u, 3u, 5u, 17u, 64u}) {
    for (const std::size_t d : {1u, 3u}) {
      for (const std::size_t H : {1u, 3u}) {
        for (const bool centering : {true, false}) {
          const auto kind = (case_id++ % 2 == 0) ? ProjectionKind::Mlp1 : ProjectionKind::Linear;
          const auto seq = random_tokens(rng, n, d);
          const auto head = random_head(rng, d, H, kind, H - 1);
          KernelConfig cfg;
          cfg.centering = centering;
          const auto fast = relu_attention_forward(seq, head, cfg);
          const auto slow = relu_attention_naive(seq, head, cfg);
          EXPECT_LE(testsupport::guarded_relative_error(fast, slow), 1e-10)
              << "n=" << n << " d=" << d << " H=" << H << " centering=" << centering;
        }
      }
    }
  }
}

TEST(ReluForward, RejectsEmptyInput) {
  Rng rng(4);
  const auto head = random_head(rng, 3, 1, ProjectionKind::Linear);
  TokenSequence<double> empty(0, 3);
  EXPECT_THROW(relu_attention_forward(empty, head, KernelConfig{}), ShapeError);
}

TEST(BumpForward, ZeroOutsideSupport) {
  // Scores 0/10/20 vs keys shifted by 5: every |difference| is >= 5 > b.
  TokenSequence<double> seq(3, 2);
  seq(0, 0) = 0.0;
  seq(1, 0) = 10.0;
  seq(2, 0) = 20.0;
  HeadParams<double> head;
  head.q = AffineMap<double>::identity(2);
  head.k = AffineMap<double>::identity(2);
  head.k.bias = {5.0, 0.0};
  head.v = AffineMap<double>::identity(2);
  Matrix<double> w(1, 2);
  w(0, 0) = 1.0;
  head.projection = Projection<double>::linear(w);
  KernelConfig cfg;
  cfg.bandwidth = 1.0;

  const auto naive = bump_attention_naive(seq, head, cfg);
  for (const double v : naive.data) EXPECT_EQ(v, 0.0);
  const auto fast = bump_attention_forward(seq, head, cfg);
  for (const double v : fast.data) EXPECT_LE(std::abs(v), 1e-12);
}

TEST(BumpForward, AllScoresEqualGivesValueMean) {
  Rng rng(5);
  const std::size_t n = 7, d = 3;
  const auto seq = random_tokens(rng, n, d);
  auto head = random_head(rng, d, 1, ProjectionKind::Linear);
  head.projection = Projection<double>::linear(Matrix<double>(1, d), {0.0});  // all scores 0
  KernelConfig cfg;
  cfg.bandwidth = 0.5;
  const auto out = bump_attention_forward(seq, head, cfg);

  std::vector<double> mean(d, 0.0);
  std::vector<double> v(d);
  for (std::size_t j = 0; j < n; ++j) {
    head.v.apply(seq.row(j), v.data());
    for (std::size_t c = 0; c < d; ++c) mean[c] += v[c] / n;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) EXPECT_NEAR(out(i, c), mean[c], 1e-12);
}

TEST(BumpForward, MatchesNaiveAndThreeShiftDecomposition) {
  Rng rng(6);
  const auto seq = random_tokens(rng, 128, 16);
  const auto head = random_head(rng, 16, 1, ProjectionKind::Linear);
  KernelConfig cfg;
  cfg.bandwidth = 0.5;
  const auto fast = bump_attention_forward(seq, head, cfg);
  EXPECT_LE(relative_error(fast, bump_attention_naive(seq, head, cfg)), 1e-10);
  EXPECT_LE(relative_error(fast, bump_three_shift_oracle(seq, head, cfg)), 1e-10);

  // Same inputs, same bits.
  const auto again = bump_attention_forward(seq, head, cfg);
  EXPECT_EQ(fast, again);
}

TEST(BumpForward, RejectsMlp1Projection) {
  Rng rng(7);
  const auto seq = random_tokens(rng, 4, 3);
  const auto head = random_head(rng, 3, 1, ProjectionKind::Mlp1);
  KernelConfig cfg;
  cfg.bandwidth = 0.5;
  EXPECT_THROW(bump_attention_forward(seq, head, cfg), ConfigError);
}

TEST(BumpForward, RejectsNonPositiveBandwidth) {
  Rng rng(8);
  const auto seq = random_tokens(rng, 4, 3);
  const auto head = random_head(rng, 3, 1, ProjectionKind::Linear);
  KernelConfig cfg;
  cfg.bandwidth = 0.0;
  EXPECT_THROW(bump_attention_forward(seq, head, cfg), ConfigError);
}

TEST(MultiHead, ZeroMixerIsIdentity) {
  Rng rng(9);
  const auto seq = random_tokens(rng, 10, 4);
  std::vector<HeadParams<double>> heads;
  for (int h = 0; h < 3; ++h) {
    auto head = random_head(rng, 4, 1, ProjectionKind::Linear);
    head.mixer = Matrix<double>(4, 4);  // zero
    heads.push_back(std::move(head));
  }
  EXPECT_EQ(multi_head_layer(seq, heads, KernelConfig{}, Variant::Relu), seq);
}

TEST(MultiHead, SingleHeadIdentityMixerIsResidualPlusHead) {
  Rng rng(10);
  const auto seq = random_tokens(rng, 12, 3);
  auto head = random_head(rng, 3, 1, ProjectionKind::Mlp1);
  head.mixer = Matrix<double>::identity(3);
  const KernelConfig cfg;
  const auto layered = multi_head_layer(seq, {head}, cfg, Variant::Relu);
  const auto direct = relu_attention_forward(seq, head, cfg);
  for (std::size_t i = 0; i < seq.rows; ++i)
    for (std::size_t c = 0; c < seq.cols; ++c) EXPECT_EQ(layered(i, c), seq(i, c) + direct(i, c));
}

TEST(MultiHead, PermutationEquivariantExactly) {
  Rng rng(11);
  const std::size_t n = 32, d = 8;
  const auto seq = random_tokens(rng, n, d);
  std::vector<HeadParams<double>> heads = {random_head(rng, d, 2, ProjectionKind::Mlp1, 0),
                                           random_head(rng, d, 2, ProjectionKind::Linear, 1)};

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  std::shuffle(perm.begin(), perm.end(), rng);
  TokenSequence<double> permuted(n, d);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(seq.row(perm[i]), seq.row(perm[i]) + d, permuted.row(i));

  const auto out = multi_head_layer(seq, heads, KernelConfig{}, Variant::Relu);
  const auto out_permuted = multi_head_layer(permuted, heads, KernelConfig{}, Variant::Relu);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) EXPECT_EQ(out_permuted(i, c), out(perm[i], c));
}

TEST(MultiHead, MismatchedHeadDimensionThrows) {
  Rng rng(12);
  const auto seq = random_tokens(rng, 4, 3);
  const auto head = random_head(rng, 5, 1, ProjectionKind::Linear);
  EXPECT_THROW(multi_head_layer(seq, {head}, KernelConfig{}, Variant::Relu), ConfigError);
}

TEST(ReluForward, CenteringInvariantToConstantValueShift) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + trial * 7, d = 4;
    const auto seq = random_tokens(rng, n, d);
    auto head = random_head(rng, d, 1, ProjectionKind::Linear);
    const auto base = relu_attention_forward(seq, head, KernelConfig{});
    auto shifted = head;
    const auto c = random_normal_vector<double>(rng, d);
    if (shifted.v.bias.empty()) shifted.v.bias.assign(d, 0.0);
    for (std::size_t r = 0; r < d; ++r) shifted.v.bias[r] += c[r];
    const auto moved = relu_attention_forward(seq, shifted, KernelConfig{});
    EXPECT_LE(max_abs_diff(base, moved), 1e-12);
  }
}

TEST(AttentionWeights, AlwaysNonnegative) {
  Rng rng(14);
  const std::size_t n = 24;
  const auto seq = random_tokens(rng, n, 4);
  const auto head = random_head(rng, 4, 1, ProjectionKind::Mlp1);
  const auto lin = random_head(rng, 4, 1, ProjectionKind::Linear);
  const double eps = 1e-12, b = 0.5;
  const auto qs = project_scores(seq, head.q, head.projection, 0);
  const auto ks = project_scores(seq, head.k, head.projection, 0);
  const auto qsl = project_scores(seq, lin.q, lin.projection, 0);
  const auto ksl = project_scores(seq, lin.k, lin.projection, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t l = 0; l < n; ++l) norm += std::abs(qs[i] - ks[l]);
    for (std::size_t j = 0; j < n; ++j) {
      const double relu_w = std::max(qs[i] - ks[j], 0.0) / (norm + eps);
      EXPECT_GE(relu_w, 0.0);
      const double bump_w = std::max(1.0 - std::abs(qsl[i] - ksl[j]) / b, 0.0) / n;
      EXPECT_GE(bump_w, 0.0);
    }
  }
}

TEST(ReluForward, SinglePrecisionTracksDouble) {
  Rng rng(21);
  const auto seq = random_tokens(rng, 48, 4);
  const auto head = random_head(rng, 4, 1, ProjectionKind::Linear);
  Matrix<float> seq32(seq.rows, seq.cols);
  for (std::size_t i = 0; i < seq.data.size(); ++i) seq32.data[i] = static_cast<float>(seq.data[i]);
  HeadParams<float> head32;
  head32.q = {Matrix<float>(4, 4), std::vector<float>(head.q.bias.begin(), head.q.bias.end())};
  head32.k = {Matrix<float>(4, 4), std::vector<float>(head.k.bias.begin(), head.k.bias.end())};
  head32.v = {Matrix<float>(4, 4), std::vector<float>(head.v.bias.begin(), head.v.bias.end())};
  for (std::size_t i = 0; i < 16; ++i) {
    head32.q.weight.data[i] = static_cast<float>(head.q.weight.data[i]);
    head32.k.weight.data[i] = static_cast<float>(head.k.weight.data[i]);
    head32.v.weight.data[i] = static_cast<float>(head.v.weight.data[i]);
  }
  Matrix<float> pw(1, 4);
  for (std::size_t i = 0; i < 4; ++i) pw.data[i] = static_cast<float>(head.projection.weight.data[i]);
  head32.projection = Projection<float>::linear(
      pw, std::vector<float>(head.projection.bias.begin(), head.projection.bias.end()));

  const auto out64 = relu_attention_forward(seq, head, KernelConfig{});
  const auto out32 = relu_attention_forward(seq32, head32, KernelConfig{});
  for (std::size_t i = 0; i < out64.data.size(); ++i)
    EXPECT_NEAR(static_cast<double>(out32.data[i]), out64.data[i], 1e-3);
}

TEST(ReluForward, ThreadedMatchesSerialBitwise) {
  Rng rng(15);
  const auto seq = random_tokens(rng, 100, 8);
  const auto head = random_head(rng, 8, 1, ProjectionKind::Mlp1);
  KernelConfig serial, threaded;
  threaded.threads = 2;
  EXPECT_EQ(relu_attention_forward(seq, head, serial), relu_attention_forward(seq, head, threaded));
}
