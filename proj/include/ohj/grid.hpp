#ifndef OHJ_GRID_HPP_
#define OHJ_GRID_HPP_

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ohj/error.hpp"

namespace ohj {

//! Points, momenta and velocities. In one dimension the second component is
//! carried along as zero.
using Vec2 = std::array<double, 2>;

inline double dot(const Vec2& a, const Vec2& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm2(const Vec2& a) { return dot(a, a); }

//! Uniform periodic lattice on the unit torus T^n, n in {1,2}.
//!
//! Nodes are numbered i + N*j. The spacing is derived from the integer
//! resolution so that h * N == 1 holds in the stored representation; node
//! coordinates are computed as i / N rather than i * h.
class TorusGrid {
 public:
  TorusGrid() = default;

  TorusGrid(int dim, int points_per_axis) : dim_(dim), n_(points_per_axis) {
    if (dim != 1 && dim != 2) {
      throw InvalidArgument("unsupported dimension " + std::to_string(dim) +
                            " (expected 1 or 2)");
    }
    if (points_per_axis <= 0) {
      throw InvalidArgument("non-positive resolution " + std::to_string(points_per_axis));
    }
    if (points_per_axis < 8) {
      throw InvalidArgument("resolution " + std::to_string(points_per_axis) +
                            " below the minimum of 8 points per axis");
    }
  }

  int dim() const { return dim_; }
  int points_per_axis() const { return n_; }
  double spacing() const { return 1.0 / n_; }
  //! h^dim, the quadrature weight of one node.
  double cell_volume() const { return dim_ == 1 ? 1.0 / n_ : 1.0 / (double(n_) * n_); }
  std::size_t size() const {
    return dim_ == 1 ? std::size_t(n_) : std::size_t(n_) * std::size_t(n_);
  }

  std::size_t index(int i, int j = 0) const {
    return std::size_t(wrap(i)) + std::size_t(n_) * std::size_t(dim_ == 1 ? 0 : wrap(j));
  }

  std::array<int, 2> multi_index(std::size_t node) const {
    return {int(node % std::size_t(n_)), dim_ == 1 ? 0 : int(node / std::size_t(n_))};
  }

  Vec2 coords(std::size_t node) const {
    auto [i, j] = multi_index(node);
    return {double(i) / n_, double(j) / n_};
  }

  //! Periodic neighbour of @a node shifted by @a offset along @a axis.
  std::size_t neighbor(std::size_t node, int axis, int offset) const {
    auto [i, j] = multi_index(node);
    if (axis == 0) return index(i + offset, j);
    return index(i, j + offset);
  }

  bool operator==(const TorusGrid&) const = default;

 private:
  int wrap(int i) const {
    int r = i % n_;
    return r < 0 ? r + n_ : r;
  }

  int dim_ = 1;
  int n_ = 8;
};

inline TorusGrid build_grid(int dim, int points_per_axis) { return TorusGrid(dim, points_per_axis); }

//! Grid function. Holds u, psi, u0, correctors and adjoint densities.
struct ScalarField {
  TorusGrid grid;
  std::vector<double> values;

  ScalarField() = default;
  explicit ScalarField(const TorusGrid& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  ScalarField(const TorusGrid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) {
      throw InvalidArgument("field has " + std::to_string(values.size()) + " values, grid has " +
                            std::to_string(grid.size()) + " nodes");
    }
    for (double x : values) {
      if (!std::isfinite(x)) throw InvalidArgument("field contains a non-finite value");
    }
  }

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  std::span<const double> view() const { return values; }
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

//! Discrete Lipschitz constant: largest one-sided difference quotient.
inline double discrete_lipschitz(const TorusGrid& grid, std::span<const double> f) {
  double m = 0.0;
  const double inv_h = 1.0 / grid.spacing();
  for (std::size_t n = 0; n < grid.size(); ++n) {
    for (int d = 0; d < grid.dim(); ++d) {
      m = std::max(m, std::abs(f[grid.neighbor(n, d, 1)] - f[n]) * inv_h);
    }
  }
  return m;
}

}  // namespace ohj

#endif  // OHJ_GRID_HPP_
