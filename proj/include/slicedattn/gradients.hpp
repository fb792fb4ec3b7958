#pragma once

// Analytic backward passes for the sliced kernels, and a central
// finite-difference harness to verify them.
//
// The kernels are piecewise linear in the projected scores, so gradients are
// exact away from score ties. Backward refuses inputs whose query/key score
// gap is below a tie threshold; the ReLU subgradient at 0 is taken to be 0
// (a key sitting exactly at a query score contributes nothing).

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "slicedattn/attention.hpp"
#include "slicedattn/core.hpp"
#include "slicedattn/model.hpp"
#include "slicedattn/reference.hpp"
#include "slicedattn/scan.hpp"

namespace slicedattn {

template <class T>
struct GradBundle {
  Matrix<T> d_tokens;              // n x d
  AffineMap<T> d_q, d_k, d_v;      // parameter-shaped
  Matrix<T> d_mixer;               // d x d; stays zero for bare-head losses
  Projection<T> d_projection;

  static GradBundle zeros_like(const TokenSequence<T>& seq, const HeadParams<T>& head) {
    GradBundle g;
    g.d_tokens = Matrix<T>(seq.rows, seq.cols);
    g.d_q = head.q.zeros_like();
    g.d_k = head.k.zeros_like();
    g.d_v = head.v.zeros_like();
    g.d_mixer = Matrix<T>(seq.cols, seq.cols);
    g.d_projection = head.projection.zeros_like();
    return g;
  }
};

namespace detail {

// Smallest |query_score - key_score| over all cross pairs; the closest key to
// any query is adjacent to it in the merged sorted order.
template <class T>
T min_cross_gap(const ScanPlan<T>& plan, std::size_t* query_out = nullptr, std::size_t* key_out = nullptr) {
  T best = std::numeric_limits<T>::infinity();
  std::ptrdiff_t last_key = -1, last_query = -1;
  for (std::size_t p = 0; p < plan.size(); ++p) {
    const std::uint32_t m = plan.sort_perm[p];
    const T s = plan.sorted_scores[p];
    if (m < plan.n_keys) {
      if (last_query >= 0) {
        const T gap = s - plan.sorted_scores[last_query];
        if (gap < best) {
          best = gap;
          if (query_out) *query_out = plan.sort_perm[last_query] - plan.n_keys;
          if (key_out) *key_out = m;
        }
      }
      last_key = static_cast<std::ptrdiff_t>(p);
    } else {
      if (last_key >= 0) {
        const T gap = s - plan.sorted_scores[last_key];
        if (gap < best) {
          best = gap;
          if (query_out) *query_out = m - plan.n_keys;
          if (key_out) *key_out = plan.sort_perm[last_key];
        }
      }
      last_query = static_cast<std::ptrdiff_t>(p);
    }
  }
  return best;
}

template <class T>
void require_tie_free(const ScanPlan<T>& plan, double tie_gap, const char* what) {
  std::size_t qi = 0, kj = 0;
  const T gap = min_cross_gap(plan, &qi, &kj);
  if (!(gap >= static_cast<T>(tie_gap)))
    throw InputError(std::string(what) + ": projected scores too close to a tie (query " + std::to_string(qi) +
                     " vs key " + std::to_string(kj) + ", gap " + std::to_string(static_cast<double>(gap)) + ")");
}

// Pushes per-token score gradients through the projection and the Q/K map,
// accumulating parameter and token gradients. Queries and keys both land
// here; the projection is shared between the two sides.
template <class T>
void chain_score_gradients(const TokenSequence<T>& seq, const AffineMap<T>& map, const Projection<T>& proj,
                           std::size_t head, const std::vector<T>& dscore, AffineMap<T>& d_map,
                           Projection<T>& d_proj, Matrix<T>& d_tokens) {
  const std::size_t n = seq.rows, d = seq.cols;
  std::vector<T> y(d), gy(d), back(d);
  std::vector<T> pre(d), act(d), dz(d);
  for (std::size_t i = 0; i < n; ++i) {
    const T ds = dscore[i];
    if (ds == T(0)) continue;
    map.apply(seq.row(i), y.data());
    if (proj.kind == ProjectionKind::Linear) {
      const T* w = proj.weight.row(head);
      axpy(ds, y.data(), d_proj.weight.row(head), d);
      d_proj.bias[head] += ds;
      for (std::size_t c = 0; c < d; ++c) gy[c] = ds * w[c];
    } else {
      for (std::size_t r = 0; r < d; ++r) {
        T z = dot(proj.hidden_weight.row(r), y.data(), d);
        if (!proj.hidden_bias.empty()) z += proj.hidden_bias[r];
        pre[r] = z;
        act[r] = z > T(0) ? z : T(0);
      }
      axpy(ds, act.data(), d_proj.weight.row(head), d);
      d_proj.bias[head] += ds;
      const T* wo = proj.weight.row(head);
      for (std::size_t r = 0; r < d; ++r) dz[r] = pre[r] > T(0) ? ds * wo[r] : T(0);
      for (std::size_t r = 0; r < d; ++r) {
        if (dz[r] != T(0)) {
          axpy(dz[r], y.data(), d_proj.hidden_weight.row(r), d);
          d_proj.hidden_bias[r] += dz[r];
        }
      }
      matvec_t(proj.hidden_weight, dz.data(), gy.data());
    }
    // gy = d(score)/d(y) already scaled by ds; fan out to the affine map.
    for (std::size_t r = 0; r < d; ++r) {
      if (gy[r] != T(0)) axpy(gy[r], seq.row(i), d_map.weight.row(r), d);
    }
    if (!d_map.bias.empty()) axpy(T(1), gy.data(), d_map.bias.data(), d);
    matvec_t(map.weight, gy.data(), back.data());
    axpy(T(1), back.data(), d_tokens.row(i), d);
  }
}

}  // namespace detail

// Gradient of L = <upstream, relu_attention_forward(seq, head, cfg)> with
// respect to tokens and every parameter. One sort; all interaction sums flow
// through prefix/suffix scans on the same ordering as the forward pass.
template <class T>
GradBundle<T> relu_attention_backward(const TokenSequence<T>& seq, const HeadParams<T>& head,
                                      const KernelConfig& cfg, const Matrix<T>& upstream, double tie_gap = 1e-6) {
  validate_tokens(seq);
  validate_head(head, seq.cols);
  if (upstream.rows != seq.rows || upstream.cols != seq.cols)
    throw ShapeError("relu_attention_backward: upstream shape mismatch");
  const T eps = resolved_epsilon<T>(cfg);
  const std::size_t n = seq.rows, d = seq.cols;

  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);
  Matrix<T> values = detail::value_rows(seq, head.v);

  const auto plan = make_scan_plan(ks, qs, &seq);
  detail::require_tie_free(plan, tie_gap, "relu_attention_backward");
  if (cfg.centering) detail::center_rows_sorted(values, plan);

  Matrix<T> prefix_gamma;  // a_i at query positions
  const Matrix<T> numer = scan_numerator(plan, values, &prefix_gamma);
  const auto norm = scan_normalizer(plan);

  // h_i = g_i / (N_i + eps);  dL/dN_i = -<g_i, out_i> / (N_i + eps).
  Matrix<T> h(n, d);
  std::vector<T> dldn(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T inv = T(1) / (norm[i] + eps);
    T acc = T(0);
    for (std::size_t c = 0; c < d; ++c) {
      h(i, c) = upstream(i, c) * inv;
      acc += upstream(i, c) * numer(i, c) * inv;
    }
    dldn[i] = -acc * inv;
  }

  GradBundle<T> g = GradBundle<T>::zeros_like(seq, head);

  // Value path: dL/d(gamma_j) = sum_i ReLU(q_i - k_j) h_i, then the centering
  // adjoint subtracts the column mean.
  Matrix<T> suffix_h;  // sum of h over queries above each key
  Matrix<T> dgamma = scan_transposed(plan, h, &suffix_h);
  if (cfg.centering) {
    std::vector<T> mean(d, T(0));
    for (std::size_t j = 0; j < n; ++j) axpy(T(1), dgamma.row(j), mean.data(), d);
    for (T& x : mean) x /= static_cast<T>(n);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) dgamma(j, c) -= mean[c];
  }
  std::vector<T> back(d);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t r = 0; r < d; ++r)
      if (dgamma(j, r) != T(0)) axpy(dgamma(j, r), seq.row(j), g.d_v.weight.row(r), d);
    axpy(T(1), dgamma.row(j), g.d_v.bias.data(), d);
    matvec_t(head.v.weight, dgamma.row(j), back.data());
    axpy(T(1), back.data(), g.d_tokens.row(j), d);
  }

  // Score paths. Numerator: dq_i picks up <h_i, a_i>, dk_j picks up
  // -<gamma_j, suffix_h_j>. Normalizer: |.| differentiates to +-1 split by
  // the same ordering.
  std::vector<T> dq(n), dk(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pos = plan.inverse_perm[plan.n_keys + i];
    const T below = static_cast<T>(plan.keys_below_strict[pos]);
    const T above = static_cast<T>(n - plan.keys_below[pos]);
    dq[i] = dot(h.row(i), prefix_gamma.row(i), d) + dldn[i] * (below - above);
  }
  std::vector<T> w_below, w_above;
  scan_query_sums_at_keys(plan, dldn, w_below, w_above);
  for (std::size_t j = 0; j < n; ++j)
    dk[j] = -dot(values.row(j), suffix_h.row(j), d) - w_above[j] + w_below[j];

  detail::chain_score_gradients(seq, head.q, head.projection, head.proj_head, dq, g.d_q, g.d_projection,
                                g.d_tokens);
  detail::chain_score_gradients(seq, head.k, head.projection, head.proj_head, dk, g.d_k, g.d_projection,
                                g.d_tokens);
  return g;
}

// Backward for the bump kernel via its three shifted ReLU interactions. Tie
// distance is measured against all shifted key scores {k - b, k, k + b}.
template <class T>
GradBundle<T> bump_attention_backward(const TokenSequence<T>& seq, const HeadParams<T>& head,
                                      const KernelConfig& cfg, const Matrix<T>& upstream, double tie_gap = 1e-6) {
  validate_tokens(seq);
  validate_head(head, seq.cols);
  if (head.projection.kind != ProjectionKind::Linear)
    throw ConfigError("bump attention requires a linear projection");
  if (!(cfg.bandwidth > 0.0)) throw ConfigError("bump attention requires bandwidth > 0");
  if (upstream.rows != seq.rows || upstream.cols != seq.cols)
    throw ShapeError("bump_attention_backward: upstream shape mismatch");
  const T b = static_cast<T>(cfg.bandwidth);
  const std::size_t n = seq.rows, d = seq.cols;

  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);
  const Matrix<T> values = detail::value_rows(seq, head.v);

  const T scale = T(1) / (static_cast<T>(n) * b);
  GradBundle<T> g = GradBundle<T>::zeros_like(seq, head);
  Matrix<T> dvalues(n, d);
  std::vector<T> dq(n, T(0)), dk(n, T(0));

  std::vector<T> shifted(n);
  for (const T shift : {-b, b, T(0)}) {
    const T sign = shift == T(0) ? T(-2) : T(1);
    for (std::size_t j = 0; j < n; ++j) shifted[j] = ks[j] + shift;
    const auto plan = make_scan_plan(shifted, qs, &seq);
    detail::require_tie_free(plan, tie_gap, "bump_attention_backward");

    Matrix<T> prefix_v;
    scan_numerator(plan, values, &prefix_v);
    Matrix<T> suffix_g;
    Matrix<T> dgamma = scan_transposed(plan, upstream, &suffix_g);

    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t c = 0; c < d; ++c) dvalues(j, c) += sign * scale * dgamma(j, c);
    for (std::size_t i = 0; i < n; ++i) dq[i] += sign * scale * dot(upstream.row(i), prefix_v.row(i), d);
    for (std::size_t j = 0; j < n; ++j) dk[j] -= sign * scale * dot(values.row(j), suffix_g.row(j), d);
  }

  std::vector<T> back(d);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t r = 0; r < d; ++r)
      if (dvalues(j, r) != T(0)) axpy(dvalues(j, r), seq.row(j), g.d_v.weight.row(r), d);
    axpy(T(1), dvalues.row(j), g.d_v.bias.data(), d);
    matvec_t(head.v.weight, dvalues.row(j), back.data());
    axpy(T(1), back.data(), g.d_tokens.row(j), d);
  }
  detail::chain_score_gradients(seq, head.q, head.projection, head.proj_head, dq, g.d_q, g.d_projection,
                                g.d_tokens);
  detail::chain_score_gradients(seq, head.k, head.projection, head.proj_head, dk, g.d_k, g.d_projection,
                                g.d_tokens);
  return g;
}

template <class T>
GradBundle<T> attention_backward(const TokenSequence<T>& seq, const HeadParams<T>& head, const KernelConfig& cfg,
                                 const Matrix<T>& upstream, Variant variant, double tie_gap = 1e-6) {
  return variant == Variant::Relu ? relu_attention_backward(seq, head, cfg, upstream, tie_gap)
                                  : bump_attention_backward(seq, head, cfg, upstream, tie_gap);
}

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_coordinate = 0;
  double step = 0.0;
  double min_score_gap = 0.0;
  int checked = 0;
  int skipped = 0;  // perturbations rejected for crossing a kink
};

// Central differences of `eval` against a precomputed analytic gradient, on
// randomly sampled coordinates. `same_region(xp, xm)` must return false when
// the two perturbed points straddle a nonsmooth point; such draws are
// resampled and counted.
template <class Eval, class SameRegion>
GradCheckReport finite_difference_check(Eval&& eval, const std::vector<double>& analytic,
                                        const std::vector<double>& point, double h, int directions, Rng& rng,
                                        SameRegion&& same_region) {
  if (!(h > 0.0)) throw InputError("finite_difference_check: step must be > 0");
  if (analytic.size() != point.size()) throw ShapeError("finite_difference_check: gradient size mismatch");
  GradCheckReport report;
  report.step = h;
  std::uniform_int_distribution<std::size_t> pick(0, point.size() - 1);
  std::vector<double> xp = point, xm = point;
  const int max_attempts = directions * 10;
  for (int attempt = 0; attempt < max_attempts && report.checked < directions; ++attempt) {
    const std::size_t c = pick(rng);
    xp[c] = point[c] + h;
    xm[c] = point[c] - h;
    if (!same_region(xp, xm)) {
      ++report.skipped;
      xp[c] = point[c];
      xm[c] = point[c];
      continue;
    }
    // The difference is formed in the evaluation's own precision; an
    // extended-precision oracle keeps its extra digits through the quotient.
    const double numeric =
        static_cast<double>((static_cast<long double>(eval(xp)) - static_cast<long double>(eval(xm))) /
                            (2.0L * static_cast<long double>(h)));
    xp[c] = point[c];
    xm[c] = point[c];
    const double denom = std::max({std::abs(analytic[c]), std::abs(numeric), 1e-8});
    const double rel = std::abs(numeric - analytic[c]) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_coordinate = c;
    }
    ++report.checked;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Flattened-parameter adapter for checking the attention backward passes
// against finite differences of the naive oracle.

namespace gradcheck {

// Coordinates are packed as: tokens, Q(w,b), K(w,b), V(w,b), projection.
template <class T>
std::vector<double> pack(const TokenSequence<T>& seq, const HeadParams<T>& head) {
  std::vector<double> out;
  auto push_mat = [&](const Matrix<T>& m) {
    for (const T& v : m.data) out.push_back(static_cast<double>(v));
  };
  auto push_vec = [&](const std::vector<T>& v) {
    for (const T& x : v) out.push_back(static_cast<double>(x));
  };
  push_mat(seq);
  for (const AffineMap<T>* a : {&head.q, &head.k, &head.v}) {
    push_mat(a->weight);
    push_vec(a->bias);
  }
  const auto& p = head.projection;
  push_mat(p.weight);
  push_vec(p.bias);
  if (p.kind == ProjectionKind::Mlp1) {
    push_mat(p.hidden_weight);
    push_vec(p.hidden_bias);
  }
  return out;
}

template <class T>
void unpack(const std::vector<double>& x, TokenSequence<T>& seq, HeadParams<T>& head) {
  std::size_t at = 0;
  auto pull_mat = [&](Matrix<T>& m) {
    for (T& v : m.data) v = static_cast<T>(x[at++]);
  };
  auto pull_vec = [&](std::vector<T>& v) {
    for (T& e : v) e = static_cast<T>(x[at++]);
  };
  pull_mat(seq);
  for (AffineMap<T>* a : {&head.q, &head.k, &head.v}) {
    pull_mat(a->weight);
    pull_vec(a->bias);
  }
  auto& p = head.projection;
  pull_mat(p.weight);
  pull_vec(p.bias);
  if (p.kind == ProjectionKind::Mlp1) {
    pull_mat(p.hidden_weight);
    pull_vec(p.hidden_bias);
  }
  if (at != x.size()) throw InternalError("gradcheck: pack/unpack size mismatch");
}

template <class T>
std::vector<double> pack_bundle(const GradBundle<T>& g, const HeadParams<T>& head) {
  std::vector<double> out;
  auto push_mat = [&](const Matrix<T>& m) {
    for (const T& v : m.data) out.push_back(static_cast<double>(v));
  };
  auto push_vec = [&](const std::vector<T>& v, std::size_t expect) {
    for (std::size_t i = 0; i < expect; ++i) out.push_back(i < v.size() ? static_cast<double>(v[i]) : 0.0);
  };
  push_mat(g.d_tokens);
  const AffineMap<T>* params[] = {&head.q, &head.k, &head.v};
  const AffineMap<T>* grads[] = {&g.d_q, &g.d_k, &g.d_v};
  for (int i = 0; i < 3; ++i) {
    push_mat(grads[i]->weight);
    push_vec(grads[i]->bias, params[i]->bias.size());
  }
  const auto& p = g.d_projection;
  push_mat(p.weight);
  push_vec(p.bias, head.projection.bias.size());
  if (head.projection.kind == ProjectionKind::Mlp1) {
    push_mat(p.hidden_weight);
    push_vec(p.hidden_bias, head.projection.hidden_bias.size());
  }
  return out;
}

// Signs of every ReLU argument in the forward pass: all query/key score
// differences (against each shifted key set for the bump kernel) and the
// hidden units of an MLP projection. Two points in the same region see the
// same signs, so the function is linear between them.
template <class T>
std::vector<signed char> activation_pattern(const TokenSequence<T>& seq, const HeadParams<T>& head,
                                            const KernelConfig& cfg, Variant variant) {
  std::vector<signed char> pattern;
  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);
  std::vector<T> shifts;
  if (variant == Variant::Relu)
    shifts = {T(0)};
  else {
    const T b = static_cast<T>(cfg.bandwidth);
    shifts = {-b, b, T(0)};
  }
  for (const T shift : shifts)
    for (const T q : qs)
      for (const T k : ks) pattern.push_back(q - (k + shift) > T(0) ? 1 : -1);
  if (head.projection.kind == ProjectionKind::Mlp1) {
    const std::size_t d = seq.cols;
    std::vector<T> y(d);
    for (const AffineMap<T>* map : {&head.q, &head.k}) {
      for (std::size_t i = 0; i < seq.rows; ++i) {
        map->apply(seq.row(i), y.data());
        for (std::size_t r = 0; r < d; ++r) {
          T z = dot(head.projection.hidden_weight.row(r), y.data(), d);
          if (!head.projection.hidden_bias.empty()) z += head.projection.hidden_bias[r];
          pattern.push_back(z > T(0) ? 1 : -1);
        }
      }
    }
  }
  return pattern;
}

// Smallest distance between any query score and any (shifted) key score.
template <class T>
T min_score_gap(const TokenSequence<T>& seq, const HeadParams<T>& head, const KernelConfig& cfg, Variant variant) {
  const auto qs = project_scores(seq, head.q, head.projection, head.proj_head);
  const auto ks = project_scores(seq, head.k, head.projection, head.proj_head);
  std::vector<T> shifts;
  if (variant == Variant::Relu)
    shifts = {T(0)};
  else {
    const T b = static_cast<T>(cfg.bandwidth);
    shifts = {-b, b, T(0)};
  }
  T best = std::numeric_limits<T>::infinity();
  std::vector<T> shifted(ks.size());
  for (const T shift : shifts) {
    for (std::size_t j = 0; j < ks.size(); ++j) shifted[j] = ks[j] + shift;
    const auto plan = make_scan_plan(shifted, qs);
    best = std::min(best, detail::min_cross_gap(plan));
  }
  return best;
}

namespace detail {

template <class To, class From>
Matrix<To> matrix_cast(const Matrix<From>& m) {
  Matrix<To> out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<To>(m.data[i]);
  return out;
}

template <class To, class From>
HeadParams<To> head_cast(const HeadParams<From>& h) {
  HeadParams<To> out;
  auto vec = [](const std::vector<From>& v) { return std::vector<To>(v.begin(), v.end()); };
  out.q = {matrix_cast<To>(h.q.weight), vec(h.q.bias)};
  out.k = {matrix_cast<To>(h.k.weight), vec(h.k.bias)};
  out.v = {matrix_cast<To>(h.v.weight), vec(h.v.bias)};
  if (!h.mixer.empty()) out.mixer = matrix_cast<To>(h.mixer);
  out.projection.kind = h.projection.kind;
  out.projection.weight = matrix_cast<To>(h.projection.weight);
  out.projection.bias = vec(h.projection.bias);
  out.projection.hidden_weight = matrix_cast<To>(h.projection.hidden_weight);
  out.projection.hidden_bias = vec(h.projection.hidden_bias);
  out.proj_head = h.proj_head;
  return out;
}

}  // namespace detail

// Runs the harness on one attention instance: analytic gradients come from
// the sliced backward pass, numeric ones from central differences of the
// naive oracle applied to the loss <upstream, forward(...)>. The oracle side
// runs in extended precision so that near-zero gradient coordinates are not
// swamped by the difference quotient's own rounding.
template <class T>
GradCheckReport check_attention_instance(const TokenSequence<T>& seq, const HeadParams<T>& head,
                                         const KernelConfig& cfg, Variant variant, const Matrix<T>& upstream,
                                         double h, int directions, Rng& rng, double tie_gap = 1e-6) {
  const GradBundle<T> bundle = attention_backward(seq, head, cfg, upstream, variant, tie_gap);
  const std::vector<double> analytic = pack_bundle(bundle, head);
  const std::vector<double> point = pack(seq, head);

  const TokenSequence<long double> seq_wide = detail::matrix_cast<long double>(seq);
  const HeadParams<long double> head_wide = detail::head_cast<long double>(head);
  auto loss_at = [&](const std::vector<double>& x) {
    TokenSequence<long double> s = seq_wide;
    HeadParams<long double> hp = head_wide;
    unpack(x, s, hp);
    const Matrix<long double> out = variant == Variant::Relu ? relu_attention_naive(s, hp, cfg)
                                                             : bump_attention_naive(s, hp, cfg);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      acc += static_cast<long double>(upstream.data[i]) * out.data[i];
    return acc;
  };
  auto same_region = [&](const std::vector<double>& xp, const std::vector<double>& xm) {
    TokenSequence<T> sp = seq, sm = seq;
    HeadParams<T> hp = head, hm = head;
    unpack(xp, sp, hp);
    unpack(xm, sm, hm);
    return activation_pattern(sp, hp, cfg, variant) == activation_pattern(sm, hm, cfg, variant);
  };

  GradCheckReport report = finite_difference_check(loss_at, analytic, point, h, directions, rng, same_region);
  report.min_score_gap = static_cast<double>(min_score_gap(seq, head, cfg, variant));
  return report;
}

}  // namespace gradcheck

}  // namespace slicedattn
