#pragma once

// Structural checks on the ReLU kernel: the conditionally-positive-definite
// quadratic form on zero-sum coefficients, the half-identity linking ReLU to
// the energy-distance kernel, and weight-field probes for plotting.

#include <cmath>
#include <string>
#include <vector>

#include "slicedattn/core.hpp"
#include "slicedattn/model.hpp"

namespace slicedattn {

struct CpdForm {
  double relu_form = 0.0;    // -sum_ij g_i g_j ReLU(x_i - x_j)
  double energy_form = 0.0;  // -(1/2) sum_ij g_i g_j |x_i - x_j|
};

// Quadratic form of the ReLU kernel on a zero-sum coefficient vector. The
// antisymmetric half of ReLU cancels under the zero-sum constraint, so the
// energy-distance half-form is returned alongside for cross-validation.
inline CpdForm cpd_quadratic_form(const std::vector<double>& x, const std::vector<double>& gamma,
                                  double zero_sum_tol = 1e-12) {
  if (x.size() != gamma.size()) throw ShapeError("cpd_quadratic_form: size mismatch");
  if (x.empty()) throw InputError("cpd_quadratic_form: empty input");
  double sum = 0.0;
  for (const double g : gamma) sum += g;
  if (std::abs(sum) > zero_sum_tol)
    throw InputError("cpd_quadratic_form: coefficients must sum to zero (sum = " + std::to_string(sum) + ")");
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j)
      if (x[i] == x[j])
        throw InputError("cpd_quadratic_form: points " + std::to_string(i) + " and " + std::to_string(j) +
                         " coincide");
  CpdForm out;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double d = x[i] - x[j];
      const double gg = gamma[i] * gamma[j];
      if (d > 0.0) out.relu_form -= gg * d;
      out.energy_form -= 0.5 * gg * std::abs(d);
    }
  return out;
}

// Largest deviation of ReLU(x - y) from |x - y|/2 + (x - y)/2 over the given
// pairs. Zero for every finite difference (the halves recombine exactly in
// binary floating point).
inline double relu_energy_identity_check(const std::vector<std::pair<double, double>>& samples) {
  double worst = 0.0;
  for (const auto& [x, y] : samples) {
    const double d = x - y;
    const double relu = d > 0.0 ? d : 0.0;
    const double dev = std::abs(relu - (std::abs(d) / 2.0 + d / 2.0));
    worst = std::max(worst, dev);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Weight-field probe over a 2D lattice, for external plotting.

struct HeatmapGrid {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
  std::size_t nx = 64, ny = 64;
};

struct HeatmapField {
  HeatmapGrid grid;
  std::vector<double> xs, ys;
  Matrix<double> weights;  // ny x nx, row-major over y then x
};

// Attention weight seen by a fixed query at each lattice point acting as the
// key. The bump field is the raw kernel ReLU(1 - |dq - dk| / b) (peak 1 on
// the query's level line); the relu field is normalized by the summed
// absolute differences over the lattice, which preserves monotonicity along
// the projection direction.
template <class T>
HeatmapField kernel_heatmap(const Projection<T>& proj, const HeatmapGrid& grid, Variant variant, double bandwidth,
                            const std::vector<T>& query_point, double epsilon = 1e-12) {
  if (proj.dim() != 2) throw ShapeError("kernel_heatmap: projection must act on d = 2");
  if (query_point.size() != 2) throw ShapeError("kernel_heatmap: query point must be 2D");
  if (variant == Variant::Bump && !(bandwidth > 0.0)) throw ConfigError("kernel_heatmap: bandwidth must be > 0");
  if (grid.nx < 1 || grid.ny < 1) throw InputError("kernel_heatmap: empty grid");

  HeatmapField field;
  field.grid = grid;
  field.xs.resize(grid.nx);
  field.ys.resize(grid.ny);
  for (std::size_t i = 0; i < grid.nx; ++i)
    field.xs[i] = grid.nx == 1 ? grid.x_min : grid.x_min + (grid.x_max - grid.x_min) * i / double(grid.nx - 1);
  for (std::size_t j = 0; j < grid.ny; ++j)
    field.ys[j] = grid.ny == 1 ? grid.y_min : grid.y_min + (grid.y_max - grid.y_min) * j / double(grid.ny - 1);

  const double q_score = static_cast<double>(proj.score(query_point.data(), 0));
  Matrix<double> key_scores(grid.ny, grid.nx);
  double norm = 0.0;
  T point[2];
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      point[0] = static_cast<T>(field.xs[i]);
      point[1] = static_cast<T>(field.ys[j]);
      key_scores(j, i) = static_cast<double>(proj.score(point, 0));
      norm += std::abs(q_score - key_scores(j, i));
    }

  field.weights = Matrix<double>(grid.ny, grid.nx);
  for (std::size_t j = 0; j < grid.ny; ++j)
    for (std::size_t i = 0; i < grid.nx; ++i) {
      const double diff = q_score - key_scores(j, i);
      if (variant == Variant::Bump) {
        const double w = 1.0 - std::abs(diff) / bandwidth;
        field.weights(j, i) = w > 0.0 ? w : 0.0;
      } else {
        field.weights(j, i) = (diff > 0.0 ? diff : 0.0) / (norm + epsilon);
      }
    }
  return field;
}

}  // namespace slicedattn
