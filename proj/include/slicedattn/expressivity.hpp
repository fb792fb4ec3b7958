#pragma once

// Constructive sequence matching with unnormalized ReLU attention layers.
//
// Layers here are the raw proof form: within each sequence,
//     x_k  <-  x_k + sum_m sum_terms ReLU(<eta, x_k> - a(<eta, x_m>) + c) * v,
// with a an affine map of the projected key scores. No normalizer, no value
// centering. Three ingredients compose into an explicit plan that maps p
// source sequences onto p target sequences:
//   1. a splitting layer that separates a family of 1D sequences into two
//      ordered blocks while fixing a protected set,
//   2. a parked-interval loop that uses 2p-1 such layers to give every
//      sequence its own interval on the line,
//   3. triangular bump layers (three shifted ReLUs) that move one token at a
//      time without disturbing anything outside a small score window.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "slicedattn/core.hpp"

namespace slicedattn {

// ---------------------------------------------------------------------------
// Layer type

template <class T>
struct ConstructiveLayer {
  enum class Kind { Plain, Bump };

  struct Term {
    T shift;
    std::vector<T> value;
  };

  Kind kind = Kind::Plain;
  std::vector<T> direction;  // unit vector eta
  T key_slope = T(0);        // a(s) = key_slope * s + key_intercept
  T key_intercept = T(0);
  std::vector<Term> terms;   // one term for plain layers, three for bump layers

  // Bump layers only: center = key_intercept, and the displacement applied
  // to a token sitting exactly at the center. Kept alongside the three-term
  // form so application can use the exactly-supported triangle evaluation.
  T bump_width = T(0);
  std::vector<T> bump_move;
};

template <class T>
ConstructiveLayer<T> make_plain_layer(std::vector<T> direction, T slope, T intercept, std::vector<T> value) {
  ConstructiveLayer<T> layer;
  layer.kind = ConstructiveLayer<T>::Kind::Plain;
  layer.direction = std::move(direction);
  layer.key_slope = slope;
  layer.key_intercept = intercept;
  layer.terms.push_back({T(0), std::move(value)});
  return layer;
}

// phi(s) = (1/w)[ReLU(s - c + w) + ReLU(s - c - w) - 2 ReLU(s - c)] equals
// ReLU(1 - |s - c| / w): 1 at the center, 0 outside (c - w, c + w). The key
// map is constant at the center so each of the n keys contributes the same
// term; the stored values fold in the 1/n.
template <class T>
ConstructiveLayer<T> make_bump_layer(std::vector<T> direction, T center, T width, std::vector<T> move,
                                     std::size_t n_keys) {
  if (!(width > T(0))) throw InputError("bump layer: width must be > 0");
  ConstructiveLayer<T> layer;
  layer.kind = ConstructiveLayer<T>::Kind::Bump;
  layer.direction = std::move(direction);
  layer.key_slope = T(0);
  layer.key_intercept = center;
  layer.bump_width = width;
  layer.bump_move = move;
  const T unit = T(1) / (static_cast<T>(n_keys) * width);
  std::vector<T> w1(move), w2(move), w3(move);
  for (auto& x : w1) x *= unit;
  for (auto& x : w2) x *= unit;
  for (auto& x : w3) x *= T(-2) * unit;
  layer.terms.push_back({+width, std::move(w1)});
  layer.terms.push_back({-width, std::move(w2)});
  layer.terms.push_back({T(0), std::move(w3)});
  return layer;
}

// ---------------------------------------------------------------------------
// bump_coefficients: the scalar triple behind the bump layers.

template <class T>
struct BumpTriple {
  T center = T(0);
  T width = T(0);
  std::array<std::pair<T, T>, 3> terms;  // (shift, weight): sum_t w ReLU(x - center + shift)

  T evaluate(T x) const {
    T acc = T(0);
    for (const auto& [shift, weight] : terms) {
      const T arg = x - center + shift;
      if (arg > T(0)) acc += weight * arg;
    }
    return acc;
  }
};

template <class T>
BumpTriple<T> bump_coefficients(T center, T width) {
  if (!(width > T(0))) throw InputError("bump_coefficients: width must be > 0");
  BumpTriple<T> t;
  t.center = center;
  t.width = width;
  const T inv = T(1) / width;
  t.terms = {{{+width, inv}, {-width, inv}, {T(0), T(-2) * inv}}};
  return t;
}

// ---------------------------------------------------------------------------
// Sequence groups

template <class T>
struct SequenceGroup {
  std::vector<TokenSequence<T>> sequences;

  std::size_t count() const { return sequences.size(); }
  std::size_t tokens() const { return sequences.empty() ? 0 : sequences[0].rows; }
  std::size_t dim() const { return sequences.empty() ? 0 : sequences[0].cols; }

  bool operator==(const SequenceGroup& o) const { return sequences == o.sequences; }
};

template <class T>
void validate_group(const SequenceGroup<T>& g, bool require_distinct_tokens, const char* what) {
  if (g.sequences.empty()) throw InputError(std::string(what) + ": empty group");
  const std::size_t n = g.sequences[0].rows, d = g.sequences[0].cols;
  for (std::size_t i = 0; i < g.sequences.size(); ++i) {
    const auto& s = g.sequences[i];
    validate_tokens(s, what);
    if (s.rows != n || s.cols != d) throw ShapeError(std::string(what) + ": sequences disagree on (n, d)");
    if (require_distinct_tokens) {
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
          bool equal = true;
          for (std::size_t c = 0; c < d && equal; ++c) equal = s(a, c) == s(b, c);
          if (equal)
            throw InputError(std::string(what) + ": sequence " + std::to_string(i) + " repeats token (" +
                             std::to_string(a) + ", " + std::to_string(b) + ")");
        }
    }
  }
}

// ---------------------------------------------------------------------------
// Layer application (simultaneous update, keys read from the old state)

namespace detail {

template <class T>
std::vector<T> layer_scores(const TokenSequence<T>& seq, const ConstructiveLayer<T>& layer) {
  std::vector<T> s(seq.rows);
  for (std::size_t k = 0; k < seq.rows; ++k) s[k] = dot(layer.direction.data(), seq.row(k), seq.cols);
  return s;
}

}  // namespace detail

// Raw term-by-term update. Used for verification; the main path below treats
// bump layers with the equivalent triangle form so that tokens outside the
// support are left bit-identical.
template <class T>
Matrix<T> layer_update_generic(const TokenSequence<T>& seq, const ConstructiveLayer<T>& layer) {
  const std::size_t n = seq.rows, d = seq.cols;
  const auto s = detail::layer_scores(seq, layer);
  Matrix<T> delta(n, d);
  std::vector<T> a(n);
  for (std::size_t m = 0; m < n; ++m) a[m] = layer.key_slope * s[m] + layer.key_intercept;
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t m = 0; m < n; ++m) {
      const T base = s[k] - a[m];
      for (const auto& term : layer.terms) {
        const T arg = base + term.shift;
        if (arg > T(0)) axpy(arg, term.value.data(), delta.row(k), d);
      }
    }
  }
  return delta;
}

template <class T>
void apply_layer(TokenSequence<T>& seq, const ConstructiveLayer<T>& layer) {
  const std::size_t n = seq.rows, d = seq.cols;
  if (layer.direction.size() != d) throw ShapeError("constructive layer: direction dimension mismatch");
  const auto s = detail::layer_scores(seq, layer);

  if (layer.kind == ConstructiveLayer<T>::Kind::Bump) {
    for (std::size_t k = 0; k < n; ++k) {
      const T u = s[k] - layer.key_intercept;
      const T au = u < T(0) ? -u : u;
      if (au >= layer.bump_width) continue;  // outside support: untouched
      const T coeff = T(1) - au / layer.bump_width;
      T* row = seq.row(k);
      for (std::size_t c = 0; c < d; ++c) {
        const T dv = coeff * layer.bump_move[c];
        if (dv != T(0)) row[c] += dv;
      }
    }
    return;
  }

  const Matrix<T> delta = layer_update_generic(seq, layer);
  for (std::size_t k = 0; k < n; ++k) {
    T* row = seq.row(k);
    const T* dr = delta.row(k);
    for (std::size_t c = 0; c < d; ++c)
      if (dr[c] != T(0)) row[c] += dr[c];
  }
}

template <class T>
SequenceGroup<T> apply_constructive_layers(SequenceGroup<T> group, const std::vector<ConstructiveLayer<T>>& layers) {
  validate_group(group, false, "apply_constructive_layers");
  for (const auto& layer : layers)
    for (auto& seq : group.sequences) apply_layer(seq, layer);
  return group;
}

// ---------------------------------------------------------------------------
// Splitting layer (1D). Scores are handled as plain scalars here; callers
// lift the result along a direction when working in R^d.

template <class T>
struct ScalarLayer {
  T key_slope = T(0), key_intercept = T(0), value = T(0);

  // s_k <- s_k + sum_m ReLU(s_k - a(s_m)) * value, simultaneous within one
  // sequence of scores.
  void apply(std::vector<T>& s) const {
    const std::size_t n = s.size();
    std::vector<T> a(n), delta(n, T(0));
    for (std::size_t m = 0; m < n; ++m) a[m] = key_slope * s[m] + key_intercept;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t m = 0; m < n; ++m) {
        const T arg = s[k] - a[m];
        if (arg > T(0)) delta[k] += arg * value;
      }
    for (std::size_t k = 0; k < n; ++k)
      if (delta[k] != T(0)) s[k] += delta[k];
  }
};

template <class T>
struct SplitResult {
  ScalarLayer<T> layer;
  std::vector<std::size_t> s1, s2;  // sequence ids, lexicographically smaller block first
  // Construction record, in the splitting layer's own terms.
  std::size_t split_index = 0;  // l, 1-based position of the first differing sorted entry
  T t1 = T(0), t2 = T(0);       // anchor scores: a(t1) = low, a(t2) = high
  T low = T(0), high = T(0);    // L and R
  T value = T(0);               // v
  T m_minus = T(0), m_plus = T(0);
  T alpha1 = T(0), beta1 = T(0), alpha2 = T(0), beta2 = T(0);
};

// Splits a family of scalar sequences into two lexicographically ordered
// blocks with one attention layer that is the identity on every point >= the
// protected range [k_min, k_max]. Requires max(scores) < k_min.
template <class T>
SplitResult<T> split_scores(const std::vector<std::vector<T>>& scores, const std::vector<std::size_t>& ids,
                            T k_min, T k_max) {
  const std::size_t p = ids.size();
  if (p < 2) throw InputError("split: need at least two sequences");

  std::vector<std::vector<T>> sorted(p);
  T m_minus = std::numeric_limits<T>::infinity(), m_plus = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < p; ++i) {
    sorted[i] = scores[ids[i]];
    std::sort(sorted[i].begin(), sorted[i].end());
    m_minus = std::min(m_minus, sorted[i].front());
    m_plus = std::max(m_plus, sorted[i].back());
  }
  if (!(m_plus < k_min)) throw InputError("split: sequences must lie strictly left of the protected set");

  std::vector<std::size_t> order(p);
  for (std::size_t i = 0; i < p; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(sorted[a].begin(), sorted[a].end(), sorted[b].begin(), sorted[b].end());
  });

  const std::size_t n = sorted[0].size();
  std::size_t l = n;  // first sorted position at which some pair differs
  for (std::size_t pos = 0; pos < n && l == n; ++pos)
    for (std::size_t i = 1; i < p; ++i)
      if (sorted[order[i]][pos] != sorted[order[0]][pos]) {
        l = pos;
        break;
      }
  if (l == n) throw InputError("split: sequences are identical as multisets, no lexicographic gap");

  const T t1 = sorted[order[0]][l];
  std::size_t j0 = 1;
  while (j0 < p && sorted[order[j0]][l] == t1) ++j0;

  T t2 = std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < p; ++i)
    for (const T s : sorted[i])
      if (s > t1) t2 = std::min(t2, s);

  SplitResult<T> r;
  r.split_index = l + 1;
  r.t1 = t1;
  r.t2 = t2;
  r.m_minus = m_minus;
  r.m_plus = m_plus;
  const T lT = static_cast<T>(r.split_index);
  r.high = k_max + T(1);
  r.low = std::min(m_minus - T(1), -(lT - T(1)) * m_plus + lT * m_minus - T(1));
  const T v_lo = T(-1) / lT;
  const T v_hi = -(m_plus - m_minus) / (m_plus - r.low);
  if (!(v_lo < v_hi)) throw InternalError("split: empty feasibility interval");
  r.value = (v_lo + v_hi) / T(2);

  r.layer.key_slope = (r.high - r.low) / (t2 - t1);
  r.layer.key_intercept = r.low - r.layer.key_slope * t1;
  r.layer.value = r.value;

  // Affine action on the two blocks: alpha1 = 1 + l v on the block whose
  // l-th entry equals t1 (its first l keys are active), alpha2 = 1 + (l-1) v
  // on the rest. Computed independently so that a first-position split
  // records the exact identity (alpha2 = 1, beta2 = 0), where the third
  // feasibility inequality holds with equality.
  r.alpha1 = T(1) + lT * r.value;
  r.alpha2 = T(1) + (lT - T(1)) * r.value;
  r.beta2 = T(0);
  for (std::size_t m = 0; m + 1 < r.split_index; ++m)
    r.beta2 -= r.value * (r.layer.key_slope * sorted[order[0]][m] + r.layer.key_intercept);
  r.beta1 = r.beta2 - r.value * (r.layer.key_slope * t1 + r.layer.key_intercept);

  for (std::size_t i = 0; i < p; ++i)
    (i < j0 ? r.s1 : r.s2).push_back(ids[order[i]]);
  return r;
}

// ---------------------------------------------------------------------------
// Disentanglement driver: the parked-interval loop. `scores_of()` reads the
// current projected scores of all p sequences from the caller's state and
// `emit(layer, is_placement)` must apply the layer to that state. Exactly
// p-1 splits and p placements are produced.

template <class T>
struct DisentangleStats {
  std::size_t splits = 0;
  std::size_t placements = 0;
  std::vector<std::pair<T, T>> intervals;   // per original sequence id
  std::vector<SplitResult<T>> split_steps;  // construction records
};

template <class T, class ScoresOf, class Emit>
DisentangleStats<T> drive_disentangle(std::size_t p, T threshold, ScoresOf&& scores_of, Emit&& emit) {
  DisentangleStats<T> stats;
  stats.intervals.assign(p, {T(0), T(0)});

  std::vector<std::size_t> working(p);
  for (std::size_t i = 0; i < p; ++i) working[i] = i;
  std::vector<std::vector<std::size_t>> parked;  // stack; back() is leftmost

  while (true) {
    const std::vector<std::vector<T>> cur = scores_of();

    if (working.size() == 1) {
      const std::size_t id = working[0];
      const std::vector<T>& own = cur[id];
      const T s1 = *std::min_element(own.begin(), own.end());
      const T smax = *std::max_element(own.begin(), own.end());

      T next = threshold;
      T global_max = threshold;
      for (std::size_t i = 0; i < p; ++i)
        for (const T s : cur[i]) {
          if (s > s1) next = std::min(next, s);
          global_max = std::max(global_max, s);
        }
      if (!(next > s1)) throw InternalError("disentangle: placement guard collapsed");

      const T target = global_max + T(1);
      ScalarLayer<T> layer;
      layer.value = T(1);
      const T low = T(2) * s1 - target;  // image s -> 2 s - low starts at target
      const T t2 = (s1 + next) / T(2);
      const T img_max = T(2) * smax - low;
      const T high = std::max(img_max, global_max) + T(1);
      layer.key_slope = (high - low) / (t2 - s1);
      layer.key_intercept = low - layer.key_slope * s1;
      emit(layer, true);
      ++stats.placements;

      const std::vector<std::vector<T>> after = scores_of();
      const auto [mn, mx] = std::minmax_element(after[id].begin(), after[id].end());
      stats.intervals[id] = {*mn, *mx};

      if (parked.empty()) break;
      working = parked.back();
      parked.pop_back();
      continue;
    }

    // Protected range: the threshold plus every score outside the working set.
    T k_min = threshold, k_max = threshold;
    std::vector<bool> in_working(p, false);
    for (const std::size_t id : working) in_working[id] = true;
    for (std::size_t i = 0; i < p; ++i) {
      if (in_working[i]) continue;
      for (const T s : cur[i]) {
        k_min = std::min(k_min, s);
        k_max = std::max(k_max, s);
      }
    }

    SplitResult<T> split = split_scores(cur, working, k_min, k_max);
    emit(split.layer, false);
    ++stats.splits;
    working = split.s1;
    parked.push_back(split.s2);
    stats.split_steps.push_back(std::move(split));
  }

  if (stats.placements != p || stats.splits != p - 1)
    throw InternalError("disentangle: step counters disagree with the 2p-1 bound");
  return stats;
}

// ---------------------------------------------------------------------------
// Public 1D entry points.

template <class T>
struct Disentangle1DResult {
  std::vector<ConstructiveLayer<T>> layers;
  std::vector<std::pair<T, T>> intervals;  // per sequence, pairwise disjoint
  std::size_t splits = 0;
  std::size_t placements = 0;
  std::vector<SplitResult<T>> split_steps;  // construction records of the split layers
};

template <class T>
ScalarLayer<T> as_scalar_layer(const ConstructiveLayer<T>& layer) {
  return {layer.key_slope, layer.key_intercept, layer.terms.at(0).value.at(0)};
}

template <class T>
ConstructiveLayer<T> lift_scalar_layer(const ScalarLayer<T>& sl, const std::vector<T>& direction) {
  std::vector<T> value(direction);
  for (T& x : value) x *= sl.value;
  return make_plain_layer(direction, sl.key_slope, sl.key_intercept, std::move(value));
}

// Separates p scalar sequences (given as n x 1 token sequences, all strictly
// left of `threshold` and pairwise distinct as multisets) into p disjoint
// intervals using at most 2p-1 layers.
template <class T>
Disentangle1DResult<T> disentangle_1d(const SequenceGroup<T>& group, T threshold) {
  validate_group(group, false, "disentangle_1d");
  if (group.dim() != 1) throw ShapeError("disentangle_1d: expected 1D sequences");
  const std::size_t p = group.count();

  std::vector<std::vector<T>> state(p);
  for (std::size_t i = 0; i < p; ++i) state[i] = group.sequences[i].data;
  for (std::size_t i = 0; i < p; ++i)
    for (const T s : state[i])
      if (!(s < threshold)) throw InputError("disentangle_1d: all points must lie strictly left of the threshold");
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      auto a = state[i], b = state[j];
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (a == b)
        throw InputError("disentangle_1d: sequences " + std::to_string(i) + " and " + std::to_string(j) +
                         " are equal as multisets");
    }

  Disentangle1DResult<T> result;
  const std::vector<T> e1 = {T(1)};
  auto stats = drive_disentangle<T>(
      p, threshold, [&] { return state; },
      [&](const ScalarLayer<T>& layer, bool) {
        for (auto& s : state) layer.apply(s);
        result.layers.push_back(lift_scalar_layer(layer, e1));
      });
  result.intervals = std::move(stats.intervals);
  result.splits = stats.splits;
  result.placements = stats.placements;
  result.split_steps = std::move(stats.split_steps);
  return result;
}

// Public wrapper around split_scores for 1D groups and an explicit finite
// protected set.
template <class T>
SplitResult<T> split_layer(const SequenceGroup<T>& group, const std::vector<T>& protected_points) {
  validate_group(group, false, "split_layer");
  if (group.dim() != 1) throw ShapeError("split_layer: expected 1D sequences");
  if (group.count() < 2) throw InputError("split_layer: need at least two sequences");
  if (protected_points.empty()) throw InputError("split_layer: empty protected set");
  const T k_min = *std::min_element(protected_points.begin(), protected_points.end());
  const T k_max = *std::max_element(protected_points.begin(), protected_points.end());
  std::vector<std::vector<T>> scores(group.count());
  std::vector<std::size_t> ids(group.count());
  for (std::size_t i = 0; i < group.count(); ++i) {
    scores[i] = group.sequences[i].data;
    ids[i] = i;
  }
  return split_scores(scores, ids, k_min, k_max);
}

// ---------------------------------------------------------------------------
// Direction choice.

template <class T>
struct DirectionChoice {
  std::vector<T> eta;
  T min_gap = T(0);  // over all pairs of distinct tokens in sources+targets
};

// A direction is usable when projection is injective within every sequence
// and distinct source sequences have distinct projected multisets.
template <class T>
bool is_valid_direction(const std::vector<T>& eta, const SequenceGroup<T>& sources,
                        const SequenceGroup<T>& targets) {
  auto project = [&](const TokenSequence<T>& seq) {
    std::vector<T> s(seq.rows);
    for (std::size_t k = 0; k < seq.rows; ++k) s[k] = dot(eta.data(), seq.row(k), seq.cols);
    return s;
  };
  auto injective = [&](const std::vector<T>& s) {
    for (std::size_t a = 0; a < s.size(); ++a)
      for (std::size_t b = a + 1; b < s.size(); ++b)
        if (s[a] == s[b]) return false;
    return true;
  };
  std::vector<std::vector<T>> source_scores;
  for (const auto& seq : sources.sequences) {
    auto s = project(seq);
    if (!injective(s)) return false;
    std::sort(s.begin(), s.end());
    source_scores.push_back(std::move(s));
  }
  for (const auto& seq : targets.sequences)
    if (!injective(project(seq))) return false;
  for (std::size_t i = 0; i < source_scores.size(); ++i)
    for (std::size_t j = i + 1; j < source_scores.size(); ++j)
      if (source_scores[i] == source_scores[j]) return false;
  return true;
}

namespace detail {

// Minimum |<eta, z - z'>| over pairs of *distinct* token vectors drawn from
// sources and targets; identical vectors project identically under any
// direction and are skipped.
template <class T>
T direction_gap(const std::vector<T>& eta, const SequenceGroup<T>& sources, const SequenceGroup<T>& targets) {
  std::vector<const TokenSequence<T>*> all;
  for (const auto& s : sources.sequences) all.push_back(&s);
  for (const auto& s : targets.sequences) all.push_back(&s);
  std::vector<std::pair<T, const T*>> scored;  // (score, token row)
  const std::size_t d = sources.dim();
  for (const auto* seq : all)
    for (std::size_t k = 0; k < seq->rows; ++k)
      scored.emplace_back(dot(eta.data(), seq->row(k), d), seq->row(k));
  std::sort(scored.begin(), scored.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  T best = std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i + 1 < scored.size(); ++i) {
    bool same = true;
    for (std::size_t c = 0; c < d && same; ++c) same = scored[i].second[c] == scored[i + 1].second[c];
    if (same) continue;
    best = std::min(best, scored[i + 1].first - scored[i].first);
  }
  return best;
}

}  // namespace detail

// Draws directions uniformly on the sphere and keeps the valid one with the
// widest pairwise score gap; generic inputs admit one almost surely, so
// failure after `max_draws` draws is reported rather than retried forever.
template <class T>
DirectionChoice<T> choose_direction(const SequenceGroup<T>& sources, const SequenceGroup<T>& targets, Rng& rng,
                                    std::size_t max_draws = 1000) {
  validate_group(sources, true, "choose_direction sources");
  validate_group(targets, true, "choose_direction targets");
  const std::size_t d = sources.dim();
  DirectionChoice<T> best;
  best.min_gap = T(-1);
  std::size_t valid_seen = 0;
  for (std::size_t draw = 0; draw < max_draws; ++draw) {
    std::vector<T> eta = random_unit_vector<T>(rng, d);
    if (!is_valid_direction(eta, sources, targets)) continue;
    const T gap = detail::direction_gap(eta, sources, targets);
    if (!(gap > T(0))) continue;
    ++valid_seen;
    if (gap > best.min_gap) {
      best.min_gap = gap;
      best.eta = std::move(eta);
    }
    // The gap landscape is cheap to sample; a handful of valid draws gets
    // within a constant of the optimum and keeps the split slopes tame.
    if (valid_seen >= 64) break;
  }
  if (best.eta.empty())
    throw InputError("choose_direction: no usable direction after " + std::to_string(max_draws) +
                     " draws (coincident tokens across sequences?)");
  return best;
}

// ---------------------------------------------------------------------------
// Full matching plan.

template <class T>
struct MatchPlan {
  std::vector<ConstructiveLayer<T>> layers;
  std::size_t disentangle_layers = 0;
  std::size_t orthogonal_layers = 0;
  std::size_t axial_layers = 0;
  std::size_t layer_bound = 0;  // 2 p (n + 1) - 1
  std::vector<T> direction;
  T score_gap = T(0);         // min pairwise gap backing the bump width
  T bump_width = T(0);        // half of score_gap
  T achieved_error = T(0);    // max |applied(sources) - targets|

  std::size_t total_layers() const { return layers.size(); }
};

struct MatchOptions {
  std::uint64_t seed = 17;
  std::size_t max_direction_draws = 1000;
};

// Builds an explicit layer plan mapping every source sequence onto its
// target: disentangle along a chosen direction, fix the orthogonal residual
// of each token with a bump layer, then fix the on-axis coordinates the same
// way. Bumps whose residual is already zero are skipped.
template <class T>
MatchPlan<T> match_sequences(const SequenceGroup<T>& sources, const SequenceGroup<T>& targets,
                             const MatchOptions& options = {}) {
  validate_group(sources, true, "match_sequences sources");
  validate_group(targets, true, "match_sequences targets");
  if (sources.count() != targets.count() || sources.tokens() != targets.tokens() ||
      sources.dim() != targets.dim())
    throw ShapeError("match_sequences: source/target shapes disagree");
  if (sources.dim() < 2) throw ConfigError("match_sequences: requires dimension >= 2");

  const std::size_t p = sources.count(), n = sources.tokens(), d = sources.dim();
  MatchPlan<T> plan;
  plan.layer_bound = 2 * p * (n + 1) - 1;

  if (sources == targets) {
    plan.achieved_error = T(0);
    return plan;  // nothing to move; the empty composition is the identity
  }

  Rng rng(options.seed);
  const DirectionChoice<T> dir = choose_direction(sources, targets, rng, options.max_direction_draws);
  const std::vector<T>& eta = dir.eta;
  plan.direction = eta;

  SequenceGroup<T> current = sources;
  auto scores_of = [&] {
    std::vector<std::vector<T>> all(p);
    for (std::size_t i = 0; i < p; ++i) {
      all[i].resize(n);
      for (std::size_t k = 0; k < n; ++k) all[i][k] = dot(eta.data(), current.sequences[i].row(k), d);
    }
    return all;
  };
  auto target_score = [&](std::size_t i, std::size_t k) {
    return dot(eta.data(), targets.sequences[i].row(k), d);
  };

  // Threshold above every projected point, source and target alike, so the
  // parked-interval loop parks sequences clear of the landing zone.
  T threshold = -std::numeric_limits<T>::infinity();
  {
    const auto src = scores_of();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t k = 0; k < n; ++k)
        threshold = std::max({threshold, src[i][k], target_score(i, k)});
    threshold += T(1);
  }

  drive_disentangle<T>(p, threshold, scores_of, [&](const ScalarLayer<T>& sl, bool) {
    const ConstructiveLayer<T> layer = lift_scalar_layer(sl, eta);
    for (auto& seq : current.sequences) apply_layer(seq, layer);
    plan.layers.push_back(layer);
    ++plan.disentangle_layers;
  });

  // Bump width: half the smallest gap between any current source score and
  // any other source or target score. Target-target gaps are irrelevant
  // (bumps are only ever centered on source scores).
  {
    struct Entry {
      T score;
      bool is_source;
    };
    std::vector<Entry> entries;
    const auto src = scores_of();
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t k = 0; k < n; ++k) {
        entries.push_back({src[i][k], true});
        entries.push_back({target_score(i, k), false});
      }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });
    T min_gap = std::numeric_limits<T>::infinity();
    for (std::size_t i = 0; i + 1 < entries.size(); ++i) {
      if (!entries[i].is_source && !entries[i + 1].is_source) continue;
      min_gap = std::min(min_gap, entries[i + 1].score - entries[i].score);
    }
    if (!(min_gap > T(0)))
      throw InternalError("match_sequences: non-positive score gap after disentanglement");
    plan.score_gap = min_gap;
    plan.bump_width = min_gap / T(2);
  }

  // Orthogonal residuals: move each token inside the hyperplane normal to
  // eta. Scores are unchanged, so these layers commute with each other.
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const T* x = current.sequences[i].row(k);
      const T* y = targets.sequences[i].row(k);
      std::vector<T> r(d);
      for (std::size_t c = 0; c < d; ++c) r[c] = y[c] - x[c];
      const T along = dot(eta.data(), r.data(), d);
      bool nonzero = false;
      for (std::size_t c = 0; c < d; ++c) {
        r[c] -= along * eta[c];
        nonzero = nonzero || r[c] != T(0);
      }
      if (!nonzero) continue;
      const T center = dot(eta.data(), x, d);
      const ConstructiveLayer<T> layer = make_bump_layer(eta, center, plan.bump_width, std::move(r), n);
      for (auto& seq : current.sequences) apply_layer(seq, layer);
      plan.layers.push_back(layer);
      ++plan.orthogonal_layers;
    }
  }

  // On-axis corrections: one bump per token moves it from its parked score
  // to the target score. Everything already placed sits >= 2 widths away.
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const T center = dot(eta.data(), current.sequences[i].row(k), d);
      const T ds = target_score(i, k) - center;
      if (ds == T(0)) continue;
      std::vector<T> move(eta);
      for (T& c : move) c *= ds;
      const ConstructiveLayer<T> layer = make_bump_layer(eta, center, plan.bump_width, std::move(move), n);
      for (auto& seq : current.sequences) apply_layer(seq, layer);
      plan.layers.push_back(layer);
      ++plan.axial_layers;
    }
  }

  T err = T(0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t c = 0; c < d; ++c)
        err = std::max(err, std::abs(current.sequences[i](k, c) - targets.sequences[i](k, c)));
  plan.achieved_error = err;
  return plan;
}

// ---------------------------------------------------------------------------
// Elementary contextual map over an empirical measure:
//   gamma(x, mu) = <x, a> + b + (1/n) sum_j v ReLU(<x, a> - <y_j, a> + c).

template <class T>
struct GammaParams {
  std::vector<T> a;
  T b = T(0), c = T(0), v = T(0);
};

template <class T>
T gamma_lambda(const std::vector<T>& x, const TokenSequence<T>& tokens, const GammaParams<T>& lam) {
  validate_tokens(tokens, "gamma_lambda tokens");
  if (x.size() != tokens.cols || lam.a.size() != tokens.cols)
    throw ShapeError("gamma_lambda: dimension mismatch");
  const T sx = dot(lam.a.data(), x.data(), x.size());
  T acc = T(0);
  for (std::size_t j = 0; j < tokens.rows; ++j) {
    const T arg = sx - dot(lam.a.data(), tokens.row(j), tokens.cols) + lam.c;
    if (arg > T(0)) acc += lam.v * arg;
  }
  return sx + lam.b + acc / static_cast<T>(tokens.rows);
}

// One unnormalized mean-field attention head on the line, with residual:
//   u + (1/n) sum_j (a_v w_j + b_v) ReLU(a_q u + b_q - a_k w_j - b_k).
template <class T>
struct MeanFieldHead1d {
  T a_q = T(1), b_q = T(0), a_k = T(1), b_k = T(0), a_v = T(0), b_v = T(0);

  T operator()(T u, const std::vector<T>& support) const {
    if (support.empty()) throw InputError("mean-field head: empty support");
    T acc = T(0);
    for (const T w : support) {
      const T arg = a_q * u + b_q - a_k * w - b_k;
      if (arg > T(0)) acc += (a_v * w + b_v) * arg;
    }
    return u + acc / static_cast<T>(support.size());
  }
};

}  // namespace slicedattn
