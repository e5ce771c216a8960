#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <vector>

#include "sphalign/density.hpp"
#include "sphalign/energy.hpp"

namespace sphalign::detail {

/// Interpolation stencil of one warped grid vertex: the three slots of the
/// containing face and their barycentric weights times sqrt(det D gamma).
struct GridSample {
  std::array<std::uint32_t, 3> slot{};
  std::array<double, 3> weight{};
};

/// One stencil per slot for the pullback by `warp`.
std::vector<GridSample> pullback_samples(const WarpGrid& warp);

/// dst(x, y) = sum_ik wx_i wy_k src(sx_i, sy_k) over all packed slot pairs.
template <class Src, class Dst>
void resample_packed(const PackedSymmetric<Src>& src, PackedSymmetric<Dst>& dst,
                     const std::vector<GridSample>& samples) {
  const std::size_t n = src.dim();
  for (std::size_t x = 0; x < n; ++x) {
    const GridSample& sx = samples[x];
    Dst* out = dst.row(x);
    for (std::size_t y = 0; y <= x; ++y) {
      const GridSample& sy = samples[y];
      double acc = 0.0;
      for (int i = 0; i < 3; ++i) {
        if (sx.weight[i] == 0.0) continue;
        double inner = 0.0;
        for (int k = 0; k < 3; ++k) inner += sy.weight[k] * src(sx.slot[i], sy.slot[k]);
        acc += sx.weight[i] * inner;
      }
      out[y] = static_cast<Dst>(acc);
    }
  }
}

/// 1-ring least-squares gradient stencil: grad f(x) ~ sum_n coef_n (f(n) - f(x))
/// over the mesh neighbours n of x, in slot indices.
struct RingStencil {
  std::vector<std::uint32_t> ptr, nbr;
  std::vector<Vec3> coef;
};

/// Throws SingularNeighborhood when a 1-ring is rank deficient.
RingStencil build_ring_stencil(const GridLayout& layout);

/// Per-slot reductions of the grid form of the energy derivative:
///   g(x) = sum_y w_y r(x, y) d_x q2(x, y),  s(x) = sum_y w_y r(x, y) q2(x, y) / 2,
/// with r = q1 - q2, plus the energy sum w_x w_y r^2.
struct GridSums {
  std::vector<Vec3> g;
  std::vector<double> s;
  double energy = 0.0;
};

/// Projects the sums onto the basis: c_i = -4 sum_{x in h} w_x (g . b_i + s div b_i).
GradientCoeffs coefficients_from_sums(const GridLayout& layout, const GridSums& sums,
                                      const TangentBasis& basis);

/// Grid sums with d_x q2 from the ring stencil. All row access is sequential:
/// D(x, n) = sum_y w_y r(x, y) q2(n, y) is split at y < min(x, n) (prefixes of
/// rows x and n), min <= y < max (short, scattered), y >= max (a sweep over rows y).
template <class T>
GridSums ring_grid_sums(const PackedSymmetric<T>& q1, const PackedSymmetric<T>& q2,
                        const GridLayout& layout, const RingStencil& st) {
  const std::size_t n = q2.dim();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = layout.weight(i);
  // Pair p = (px[p], pn[p]); the self pair of slot x sits at self[x].
  std::vector<std::uint32_t> px, pn, self(n);
  px.reserve(n + st.nbr.size());
  pn.reserve(n + st.nbr.size());
  for (std::uint32_t x = 0; x < n; ++x) {
    self[x] = static_cast<std::uint32_t>(px.size());
    px.push_back(x);
    pn.push_back(x);
    for (std::uint32_t k = st.ptr[x]; k < st.ptr[x + 1]; ++k) {
      px.push_back(x);
      pn.push_back(st.nbr[k]);
    }
  }
  const std::size_t np = px.size();
  std::vector<double> d(np, 0.0);
  const auto r_at = [&](std::size_t a, std::size_t b) {
    return static_cast<double>(q1(a, b)) - static_cast<double>(q2(a, b));
  };
  for (std::size_t p = 0; p < np; ++p) {
    const std::size_t x = px[p], nb = pn[p];
    const std::size_t lo = std::min(x, nb), hi = std::max(x, nb);
    const T* a = q1.row(x);
    const T* b = q2.row(x);
    const T* c = q2.row(nb);
    double acc = 0.0;
    for (std::size_t y = 0; y < lo; ++y)
      acc += w[y] * (static_cast<double>(a[y]) - static_cast<double>(b[y])) *
             static_cast<double>(c[y]);
    for (std::size_t y = lo; y < hi; ++y) acc += w[y] * r_at(x, y) * static_cast<double>(q2(nb, y));
    d[p] = acc;
  }
  std::vector<std::uint32_t> order(np);
  for (std::uint32_t p = 0; p < np; ++p) order[p] = p;
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return std::max(px[a], pn[a]) < std::max(px[b], pn[b]);
  });
  std::vector<std::uint32_t> ox(np), on(np);
  for (std::size_t k = 0; k < np; ++k) {
    ox[k] = px[order[k]];
    on[k] = pn[order[k]];
  }
  std::vector<double> dc(np, 0.0), t(n);
  double energy = 0.0;
  std::size_t active = 0;
  for (std::size_t y = 0; y < n; ++y) {
    const T* a = q1.row(y);
    const T* b = q2.row(y);
    double e = 0.0;
    for (std::size_t x = 0; x <= y; ++x) {
      const double r = static_cast<double>(a[x]) - static_cast<double>(b[x]);
      t[x] = w[y] * r;
      e += (x == y ? 1.0 : 2.0) * w[x] * r * r;
    }
    energy += w[y] * e;
    while (active < np && std::max(ox[active], on[active]) <= y) ++active;
    for (std::size_t k = 0; k < active; ++k) dc[k] += t[ox[k]] * static_cast<double>(b[on[k]]);
  }
  for (std::size_t k = 0; k < np; ++k) d[order[k]] += dc[k];

  GridSums out;
  out.energy = energy;
  out.g.assign(n, Vec3::Zero());
  out.s.assign(n, 0.0);
  for (std::size_t x = 0; x < n; ++x) {
    const double dxx = d[self[x]];
    out.s[x] = 0.5 * dxx;
    Vec3 g = Vec3::Zero();
    for (std::uint32_t k = st.ptr[x]; k < st.ptr[x + 1]; ++k)
      g += st.coef[k] * (d[self[x] + 1 + (k - st.ptr[x])] - dxx);
    out.g[x] = g;
  }
  return out;
}

}  // namespace sphalign::detail
