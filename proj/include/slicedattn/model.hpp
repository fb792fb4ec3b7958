#pragma once

// Parameter objects: affine token maps (Q/K/V), the scalar projection that
// slices tokens onto score lines, per-head parameter bundles, and the
// kernel configuration shared by the attention variants.

#include <optional>
#include <string>
#include <vector>

#include "slicedattn/core.hpp"

namespace slicedattn {

// Affine map x -> W x + b. An empty bias means zero.
template <class T>
struct AffineMap {
  Matrix<T> weight;     // d_out x d_in
  std::vector<T> bias;  // d_out, optional

  std::size_t d_in() const { return weight.cols; }
  std::size_t d_out() const { return weight.rows; }

  void apply(const T* x, T* y) const {
    matvec(weight, x, y);
    if (!bias.empty())
      for (std::size_t r = 0; r < weight.rows; ++r) y[r] += bias[r];
  }

  static AffineMap identity(std::size_t d) { return {Matrix<T>::identity(d), {}}; }

  // Zero map with the same shapes; used for gradient accumulators.
  AffineMap zeros_like() const {
    AffineMap g;
    g.weight = Matrix<T>(weight.rows, weight.cols);
    g.bias.assign(weight.rows, T(0));
    return g;
  }
};

template <class T>
void validate_affine(const AffineMap<T>& m, std::size_t d, const char* what) {
  if (m.weight.rows != d || m.weight.cols != d)
    throw ShapeError(std::string(what) + ": expected a " + std::to_string(d) + "x" + std::to_string(d) + " weight");
  if (!m.bias.empty() && m.bias.size() != d) throw ShapeError(std::string(what) + ": bias length mismatch");
  if (!all_finite(m.weight) || !all_finite(m.bias)) throw NumericError(std::string(what) + ": non-finite parameter");
}

enum class ProjectionKind { Linear, Mlp1 };

// Token -> score projection. Maps R^d to R^H, one scalar score per head.
// Linear: scores = W x + b.
// Mlp1:   scores = W_out ReLU(W_h x + b_h) + b_out, hidden width fixed to d.
template <class T>
struct Projection {
  ProjectionKind kind = ProjectionKind::Linear;

  Matrix<T> weight;     // Linear: H x d. Mlp1: output weight, H x d.
  std::vector<T> bias;  // length H (optional for Linear, required storage for Mlp1)

  Matrix<T> hidden_weight;     // Mlp1 only: d x d
  std::vector<T> hidden_bias;  // Mlp1 only: length d

  std::size_t head_count() const { return weight.rows; }
  std::size_t dim() const { return weight.cols; }

  static Projection linear(Matrix<T> w, std::vector<T> b = {}) {
    Projection p;
    p.kind = ProjectionKind::Linear;
    p.weight = std::move(w);
    p.bias = std::move(b);
    return p;
  }

  static Projection mlp1(Matrix<T> hidden_w, std::vector<T> hidden_b, Matrix<T> out_w, std::vector<T> out_b) {
    Projection p;
    p.kind = ProjectionKind::Mlp1;
    p.hidden_weight = std::move(hidden_w);
    p.hidden_bias = std::move(hidden_b);
    p.weight = std::move(out_w);
    p.bias = std::move(out_b);
    return p;
  }

  // Score of a single (already Q/K-mapped) token for one head. `hidden` is
  // scratch of length d, filled with the post-ReLU activations for Mlp1.
  T score(const T* x, std::size_t head, T* hidden = nullptr) const {
    if (kind == ProjectionKind::Linear) {
      T s = dot(weight.row(head), x, weight.cols);
      if (!bias.empty()) s += bias[head];
      return s;
    }
    std::vector<T> scratch;
    if (hidden == nullptr) {
      scratch.resize(hidden_weight.rows);
      hidden = scratch.data();
    }
    for (std::size_t r = 0; r < hidden_weight.rows; ++r) {
      T z = dot(hidden_weight.row(r), x, hidden_weight.cols);
      if (!hidden_bias.empty()) z += hidden_bias[r];
      hidden[r] = z > T(0) ? z : T(0);
    }
    T s = dot(weight.row(head), hidden, weight.cols);
    if (!bias.empty()) s += bias[head];
    return s;
  }

  Projection zeros_like() const {
    Projection g = *this;
    std::fill(g.weight.data.begin(), g.weight.data.end(), T(0));
    g.bias.assign(g.weight.rows, T(0));
    if (kind == ProjectionKind::Mlp1) {
      std::fill(g.hidden_weight.data.begin(), g.hidden_weight.data.end(), T(0));
      g.hidden_bias.assign(g.hidden_weight.rows, T(0));
    }
    return g;
  }
};

template <class T>
void validate_projection(const Projection<T>& p, std::size_t d) {
  if (p.weight.rows == 0) throw ShapeError("projection: head count is 0");
  if (p.weight.cols != d) throw ShapeError("projection: dimension mismatch");
  if (!all_finite(p.weight) || !all_finite(p.bias)) throw NumericError("projection: non-finite parameter");
  if (p.kind == ProjectionKind::Mlp1) {
    if (p.hidden_weight.rows != d || p.hidden_weight.cols != d)
      throw ShapeError("projection: mlp1 hidden layer must be d x d");
    if (!p.hidden_bias.empty() && p.hidden_bias.size() != d)
      throw ShapeError("projection: mlp1 hidden bias length mismatch");
    if (!all_finite(p.hidden_weight) || !all_finite(p.hidden_bias))
      throw NumericError("projection: non-finite parameter");
  }
}

// One attention head: token maps, output mixer, and the shared projection.
// `proj_head` selects which of the projection's score outputs this head reads.
template <class T>
struct HeadParams {
  AffineMap<T> q, k, v;
  Matrix<T> mixer;  // W, d x d; empty means identity
  Projection<T> projection;
  std::size_t proj_head = 0;
};

template <class T>
void validate_head(const HeadParams<T>& h, std::size_t d) {
  validate_affine(h.q, d, "Q");
  validate_affine(h.k, d, "K");
  validate_affine(h.v, d, "V");
  if (!h.mixer.empty()) {
    if (h.mixer.rows != d || h.mixer.cols != d) throw ConfigError("head: mixer must be d x d");
    if (!all_finite(h.mixer)) throw NumericError("head: non-finite mixer");
  }
  validate_projection(h.projection, d);
  if (h.proj_head >= h.projection.head_count())
    throw ShapeError("head: proj_head " + std::to_string(h.proj_head) + " out of range (H = " +
                     std::to_string(h.projection.head_count()) + ")");
}

enum class Variant { Relu, Bump };

inline const char* variant_name(Variant v) { return v == Variant::Relu ? "relu" : "bump"; }

struct KernelConfig {
  std::optional<double> epsilon;  // denominator floor; unset -> dtype default
  bool centering = true;          // relu variant only; bump ignores it
  double bandwidth = 1.0;         // bump variant only
  int threads = 1;
};

template <class T>
T resolved_epsilon(const KernelConfig& cfg) {
  if (cfg.epsilon) {
    if (*cfg.epsilon <= 0.0) throw ConfigError("epsilon must be > 0");
    return static_cast<T>(*cfg.epsilon);
  }
  return std::is_same_v<T, float> ? static_cast<T>(1e-6) : static_cast<T>(1e-12);
}

// ---------------------------------------------------------------------------
// project_scores: score_i = Pi(map(x_i))[head].

template <class T>
std::vector<T> project_scores(const TokenSequence<T>& seq, const AffineMap<T>& map, const Projection<T>& proj,
                              std::size_t head) {
  validate_tokens(seq);
  if (head >= proj.head_count())
    throw ShapeError("project_scores: head " + std::to_string(head) + " out of range");
  std::vector<T> mapped(seq.cols), scores(seq.rows);
  std::vector<T> hidden(proj.kind == ProjectionKind::Mlp1 ? seq.cols : 0);
  for (std::size_t i = 0; i < seq.rows; ++i) {
    map.apply(seq.row(i), mapped.data());
    scores[i] = proj.score(mapped.data(), head, hidden.empty() ? nullptr : hidden.data());
    if (!std::isfinite(static_cast<double>(scores[i])))
      throw NumericError("project_scores: non-finite score at token " + std::to_string(i));
  }
  return scores;
}

// ---------------------------------------------------------------------------
// Pointwise two-layer perceptron, applied to each token independently.

template <class T>
struct PointwiseMlp {
  Matrix<T> w1;         // h x d_in
  std::vector<T> b1;    // h
  Matrix<T> w2;         // d_out x h
  std::vector<T> b2;    // d_out

  std::size_t d_in() const { return w1.cols; }
  std::size_t d_out() const { return w2.rows; }
};

template <class T>
TokenSequence<T> pointwise_mlp(const TokenSequence<T>& seq, const PointwiseMlp<T>& mlp) {
  validate_tokens(seq);
  if (mlp.w1.cols != seq.cols) throw ShapeError("pointwise_mlp: input dimension mismatch");
  if (mlp.w2.cols != mlp.w1.rows) throw ShapeError("pointwise_mlp: hidden dimension mismatch");
  if (!all_finite(mlp.w1) || !all_finite(mlp.b1) || !all_finite(mlp.w2) || !all_finite(mlp.b2))
    throw NumericError("pointwise_mlp: non-finite parameter");
  TokenSequence<T> out(seq.rows, mlp.d_out());
  std::vector<T> hidden(mlp.w1.rows);
  for (std::size_t i = 0; i < seq.rows; ++i) {
    for (std::size_t r = 0; r < mlp.w1.rows; ++r) {
      T z = dot(mlp.w1.row(r), seq.row(i), mlp.w1.cols);
      if (!mlp.b1.empty()) z += mlp.b1[r];
      hidden[r] = z > T(0) ? z : T(0);
    }
    T* y = out.row(i);
    for (std::size_t r = 0; r < mlp.w2.rows; ++r) {
      y[r] = dot(mlp.w2.row(r), hidden.data(), mlp.w2.cols);
      if (!mlp.b2.empty()) y[r] += mlp.b2[r];
    }
  }
  return out;
}

}  // namespace slicedattn
