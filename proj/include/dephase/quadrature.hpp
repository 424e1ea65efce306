#pragma once

#include <array>
#include <cmath>
#include <queue>
#include <string>
#include <vector>

#include "dephase/error.hpp"

namespace dephase {

struct QuadratureResult {
  double value = 0.0;
  double error = 0.0;  // |Kronrod - Gauss| summed over the final partition
  int intervals = 0;
};

struct QuadratureOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-30;
  int max_intervals = 4000;
};

namespace detail {

// 7-point Gauss / 15-point Kronrod abscissae and weights (QUADPACK qk15).
inline constexpr std::array<double, 8> gk15_x = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr std::array<double, 8> gk15_wk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> gk15_wg = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Segment {
  double a, b, value, error;
  bool operator<(const Segment& o) const { return error < o.error; }
};

template <class F>
Segment gk15(F&& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = fc * gk15_wk[7];
  double gauss = fc * gk15_wg[3];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * gk15_x[j];
    const double s = f(c - dx) + f(c + dx);
    kron += gk15_wk[j] * s;
    if (j % 2 == 1) gauss += gk15_wg[j / 2] * s;
  }
  return {a, b, kron * h, std::abs((kron - gauss) * h)};
}

}  // namespace detail

/// Globally adaptive Gauss-Kronrod integration of f over [a, b].
/// Throws QuadratureFailed when the interval budget runs out before the
/// requested tolerance is met.
template <class F>
QuadratureResult integrate(F&& f, double a, double b,
                           const QuadratureOptions& opt = {}) {
  std::priority_queue<detail::Segment> heap;
  auto first = detail::gk15(f, a, b);
  double value = first.value;
  double error = first.error;
  heap.push(first);
  int n = 1;
  while (error > std::max(opt.abs_tol, opt.rel_tol * std::abs(value))) {
    if (n >= opt.max_intervals)
      fail(ErrorKind::QuadratureFailed,
           "quadrature did not converge: error estimate " + std::to_string(error) +
               " after " + std::to_string(n) + " intervals");
    auto worst = heap.top();
    heap.pop();
    const double mid = 0.5 * (worst.a + worst.b);
    auto left = detail::gk15(f, worst.a, mid);
    auto right = detail::gk15(f, mid, worst.b);
    value += left.value + right.value - worst.value;
    error += left.error + right.error - worst.error;
    heap.push(left);
    heap.push(right);
    ++n;
  }
  // Re-sum from the partition to shed the drift of the running totals.
  value = 0.0;
  error = 0.0;
  std::vector<detail::Segment> parts;
  parts.reserve(heap.size());
  while (!heap.empty()) {
    parts.push_back(heap.top());
    heap.pop();
  }
  std::sort(parts.begin(), parts.end(),
            [](const auto& l, const auto& r) { return l.a < r.a; });
  for (const auto& s : parts) {
    value += s.value;
    error += s.error;
  }
  return {value, error, n};
}

}  // namespace dephase
