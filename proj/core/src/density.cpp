#include "sphalign/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <tuple>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "sphalign/errors.hpp"

namespace sphalign {

GridLayout::GridLayout(IcosphereMesh mesh)
    : mesh_(std::move(mesh)), hemi_size_(mesh_.vertex_count()) {
  // Vertices in order of first appearance along the hierarchical face order,
  // which is a quadtree walk over each icosahedron face.
  std::vector<std::uint32_t> order;
  order.reserve(hemi_size_);
  std::vector<char> seen(hemi_size_, 0);
  for (const Face& f : mesh_.faces()) {
    for (std::uint32_t v : f) {
      if (!seen[v]) {
        seen[v] = 1;
        order.push_back(v);
      }
    }
  }
  const auto w = vertex_weights(mesh_);
  points_.resize(hemi_size_);
  weights_.resize(hemi_size_);
  slot_of_.resize(2 * hemi_size_);
  global_of_.resize(2 * hemi_size_);
  for (std::size_t s = 0; s < hemi_size_; ++s) {
    points_[s] = mesh_.vertex(order[s]);
    weights_[s] = w[order[s]];
    for (std::size_t h = 0; h < 2; ++h) {
      const auto slot = static_cast<std::uint32_t>(h * hemi_size_ + s);
      const auto global = static_cast<std::uint32_t>(h * hemi_size_ + order[s]);
      global_of_[slot] = global;
      slot_of_[global] = slot;
    }
  }
}

std::shared_ptr<const GridLayout> make_layout(int level) {
  return std::make_shared<const GridLayout>(build_icosphere(level));
}

double DensityGrid::max_value() const {
  const auto raw = slots().raw();
  return raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
}

KdeEngine::KdeEngine(std::shared_ptr<const GridLayout> layout, const KernelSpec& spec)
    : layout_(std::move(layout)),
      kernel_(spec),
      table_(kernel_),
      coarse_(build_icosphere(std::min(3, layout_->mesh().level()))) {
  const auto pts = layout_->hemi_points();
  const SphereIndex index(pts, std::numbers::pi);
  const std::size_t nf = coarse_.face_count();
  cand_ptr_.assign(nf + 1, 0);
  std::vector<CapHit> hits;
  for (std::size_t f = 0; f < nf; ++f) {
    const Vec3 centre = coarse_.face_centroid(f);
    double radius = 0.0;
    for (std::uint32_t v : coarse_.face(f)) {
      radius = std::max(radius, geodesic_angle(centre, coarse_.vertex(v)));
    }
    const double reach = table_.support_angle() + radius + 1e-9;
    hits.clear();
    index.query(centre, reach >= std::numbers::pi ? -2.0 : std::cos(reach), hits);
    for (const auto& h : hits) cand_.push_back(h.index);
    cand_ptr_[f + 1] = static_cast<std::uint32_t>(cand_.size());
  }
}

void KdeEngine::support(const HemiPoint& p, KernelSupport& out, bool with_derivative) const {
  thread_local std::vector<std::uint32_t> idx;
  thread_local std::vector<double> cos, val, der;
  out.clear();
  idx.clear();
  cos.clear();
  const Vec3& x = p.point.coords();
  const std::uint32_t cell = coarse_.locate_face(x);
  const auto pts = layout_->hemi_points();
  const double tmin = table_.min_cosine();
  for (std::uint32_t k = cand_ptr_[cell]; k < cand_ptr_[cell + 1]; ++k) {
    const std::uint32_t s = cand_[k];
    const double t = pts[s].dot(x);
    if (t >= tmin) {
      idx.push_back(s);
      cos.push_back(t);
    }
  }
  val.resize(idx.size());
  der.resize(with_derivative ? idx.size() : 0);
  table_.evaluate(cos, val, der);
  const auto offset =
      static_cast<std::uint32_t>(hemi_index(p.hemi) * layout_->hemi_size());
  // Runs separated by short gaps are merged; the gap slots carry zero values
  // so the inner loops stay long and contiguous.
  constexpr std::uint32_t kMergeGap = 8;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (val[k] <= 0.0) continue;
    const std::uint32_t slot = offset + idx[k];
    if (!out.runs.empty()) {
      auto& run = out.runs.back();
      const std::uint32_t end = run.slot + run.length;
      if (slot - end <= kMergeGap) {
        for (std::uint32_t g = end; g < slot; ++g) {
          out.slots.push_back(g);
          out.cosine.push_back(0.0);
          out.value.push_back(0.0);
          if (with_derivative) out.deriv.push_back(0.0);
        }
        run.length = slot + 1 - run.slot;
        out.slots.push_back(slot);
        out.cosine.push_back(cos[k]);
        out.value.push_back(val[k]);
        if (with_derivative) out.deriv.push_back(der[k]);
        continue;
      }
    }
    out.runs.push_back({slot, static_cast<std::uint32_t>(out.slots.size()), 1});
    out.slots.push_back(slot);
    out.cosine.push_back(cos[k]);
    out.value.push_back(val[k]);
    if (with_derivative) out.deriv.push_back(der[k]);
  }
}

std::vector<std::uint32_t> KdeEngine::traversal_order(const EndpointSet& pts) const {
  // Coarse cells of both ends; the level-3 faces of the first end are merged
  // into level-1 groups.
  const std::uint64_t nf = coarse_.face_count();
  const std::uint64_t shift = coarse_.level() >= 2 ? 4 : 0;
  std::vector<std::uint64_t> key(pts.size());
  for (std::size_t j = 0; j < pts.size(); ++j) {
    const auto& e = pts[j];
    const std::uint64_t a =
        (hemi_index(e.first.hemi) * nf + coarse_.locate_face(e.first.point)) >> shift;
    const std::uint64_t b =
        (hemi_index(e.second.hemi) * nf + coarse_.locate_face(e.second.point)) >> (shift / 2);
    key[j] = a * 2 * nf + b;
  }
  std::vector<std::uint32_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t i, std::uint32_t j) { return key[i] < key[j]; });
  return order;
}

namespace {

using Run = KernelSupport::Run;

// Adds c * vals over the part of the runs below the exclusive slot bound end.
inline void add_runs(double* row, double c, const Run* runs, std::size_t nruns,
                     const double* vals, std::uint32_t end) {
#if defined(__AVX512F__)
  const __m512d vc = _mm512_set1_pd(c);
#endif
  for (std::size_t k = 0; k < nruns; ++k) {
    const Run& run = runs[k];
    if (run.slot >= end) break;
    const std::uint32_t len = std::min(run.length, end - run.slot);
    double* __restrict r = row + run.slot;
    const double* __restrict v = vals + run.first;
#if defined(__AVX512F__)
    std::uint32_t i = 0;
    for (; i + 8 <= len; i += 8) {
      _mm512_storeu_pd(r + i, _mm512_fmadd_pd(vc, _mm512_loadu_pd(v + i), _mm512_loadu_pd(r + i)));
    }
    if (i < len) {
      const __mmask8 m = static_cast<__mmask8>((1u << (len - i)) - 1u);
      _mm512_mask_storeu_pd(r + i, m,
                            _mm512_fmadd_pd(vc, _mm512_maskz_loadu_pd(m, v + i),
                                            _mm512_maskz_loadu_pd(m, r + i)));
    }
#else
    for (std::uint32_t i = 0; i < len; ++i) r[i] += c * v[i];
#endif
  }
}

// Returns sum r * vals and adds r * c into other, over the same clipped runs.
inline double gather_runs(const double* row, double c, const Run* runs, std::size_t nruns,
                          const double* vals, double* other, std::uint32_t end) {
#if defined(__AVX512F__)
  // Two accumulators keep the dot product off the FMA latency chain.
  const __m512d vc = _mm512_set1_pd(c);
  __m512d acc0 = _mm512_setzero_pd(), acc1 = _mm512_setzero_pd();
#else
  double acc = 0.0;
#endif
  for (std::size_t k = 0; k < nruns; ++k) {
    const Run& run = runs[k];
    if (run.slot >= end) break;
    const std::uint32_t len = std::min(run.length, end - run.slot);
    const double* __restrict r = row + run.slot;
    const double* __restrict v = vals + run.first;
    double* __restrict o = other + run.first;
#if defined(__AVX512F__)
    std::uint32_t i = 0;
    for (; i + 16 <= len; i += 16) {
      const __m512d r0 = _mm512_loadu_pd(r + i), r1 = _mm512_loadu_pd(r + i + 8);
      acc0 = _mm512_fmadd_pd(r0, _mm512_loadu_pd(v + i), acc0);
      acc1 = _mm512_fmadd_pd(r1, _mm512_loadu_pd(v + i + 8), acc1);
      _mm512_storeu_pd(o + i, _mm512_fmadd_pd(r0, vc, _mm512_loadu_pd(o + i)));
      _mm512_storeu_pd(o + i + 8, _mm512_fmadd_pd(r1, vc, _mm512_loadu_pd(o + i + 8)));
    }
    if (i + 8 <= len) {
      const __m512d vr = _mm512_loadu_pd(r + i);
      acc0 = _mm512_fmadd_pd(vr, _mm512_loadu_pd(v + i), acc0);
      _mm512_storeu_pd(o + i, _mm512_fmadd_pd(vr, vc, _mm512_loadu_pd(o + i)));
      i += 8;
    }
    if (i < len) {
      const __mmask8 m = static_cast<__mmask8>((1u << (len - i)) - 1u);
      const __m512d vr = _mm512_maskz_loadu_pd(m, r + i);
      acc1 = _mm512_fmadd_pd(vr, _mm512_maskz_loadu_pd(m, v + i), acc1);
      _mm512_mask_storeu_pd(o + i, m, _mm512_fmadd_pd(vr, vc, _mm512_maskz_loadu_pd(m, o + i)));
    }
#else
    for (std::uint32_t i = 0; i < len; ++i) {
      acc += r[i] * v[i];
      o[i] += r[i] * c;
    }
#endif
  }
#if defined(__AVX512F__)
  return _mm512_reduce_add_pd(_mm512_add_pd(acc0, acc1));
#else
  return acc;
#endif
}

}  // namespace

void KdeEngine::estimate(const EndpointSet& pts, DensityGrid& grid) const {
  if (pts.empty()) throw EmptyEndpointSet("cannot estimate a density from no endpoints");
  if (grid.layout_ptr() != layout_) {
    grid = DensityGrid(layout_);
  } else {
    auto raw = grid.slots().raw();
    std::fill(raw.begin(), raw.end(), 0.0);
  }
  auto& packed = grid.slots();
  KernelSupport a, b;
  for (std::uint32_t j : traversal_order(pts)) {
    support(pts[j].first, a);
    support(pts[j].second, b);
    // Each (x, y) in supp(a) x supp(b) lands once in the lower triangle: rows
    // of the first end take columns <= row, rows of the second end columns < row.
    for (std::size_t k = 0; k < a.slots.size(); ++k) {
      if (a.value[k] == 0.0) continue;
      add_runs(packed.row(a.slots[k]), 0.5 * a.value[k], b.runs.data(), b.runs.size(),
               b.value.data(), a.slots[k] + 1);
    }
    for (std::size_t k = 0; k < b.slots.size(); ++k) {
      if (b.value[k] == 0.0) continue;
      add_runs(packed.row(b.slots[k]), 0.5 * b.value[k], a.runs.data(), a.runs.size(),
               a.value.data(), b.slots[k]);
    }
  }
  const double scale = 1.0 / static_cast<double>(pts.size());
  const std::size_t n = packed.dim();
  for (std::size_t r = 0; r < n; ++r) {
    double* row = packed.row(r);
    for (std::size_t c = 0; c < r; ++c) row[c] *= scale;
    row[r] *= 2.0 * scale;
  }
}

void KdeEngine::endpoint_sensitivities(const EndpointSet& pts,
                                       const PackedSymmetric<double>& weights,
                                       std::vector<Vec3>& u, std::vector<Vec3>& v) const {
  u.assign(pts.size(), Vec3::Zero());
  v.assign(pts.size(), Vec3::Zero());
  KernelSupport a, b;
  std::vector<double> sa, sb;
  // Contracts sum_b R(a, b) K_b per support entry with the kernel gradients
  // with respect to the endpoint p.
  const auto grad = [&](const KernelSupport& s, const std::vector<double>& coef, const Vec3& p) {
    Vec3 acc = Vec3::Zero();
    double along = 0.0;
    for (std::size_t k = 0; k < s.slots.size(); ++k) {
      const double c = coef[k] * s.deriv[k];
      acc += c * layout_->point(s.slots[k]);
      along += c * s.cosine[k];
    }
    return Vec3(acc - along * p);
  };
  for (std::uint32_t j : traversal_order(pts)) {
    support(pts[j].first, a, true);
    support(pts[j].second, b, true);
    sa.assign(a.slots.size(), 0.0);
    sb.assign(b.slots.size(), 0.0);
    for (std::size_t k = 0; k < a.slots.size(); ++k) {
      if (a.value[k] == 0.0) continue;
      sa[k] += gather_runs(weights.row(a.slots[k]), a.value[k], b.runs.data(), b.runs.size(),
                           b.value.data(), sb.data(), a.slots[k] + 1);
    }
    for (std::size_t k = 0; k < b.slots.size(); ++k) {
      if (b.value[k] == 0.0) continue;
      sb[k] += gather_runs(weights.row(b.slots[k]), b.value[k], a.runs.data(), a.runs.size(),
                           a.value.data(), sa.data(), b.slots[k]);
    }
    u[j] = grad(a, sa, pts[j].first.point.coords());
    v[j] = grad(b, sb, pts[j].second.point.coords());
  }
}

DensityGrid estimate_density(const EndpointSet& pts, std::shared_ptr<const GridLayout> layout,
                             const KernelSpec& spec) {
  if (pts.empty()) throw EmptyEndpointSet("cannot estimate a density from no endpoints");
  const KdeEngine engine(std::move(layout), spec);
  DensityGrid grid;
  engine.estimate(pts, grid);
  return grid;
}

DensityGrid estimate_density(const EndpointSet& pts, const IcosphereMesh& mesh,
                             const KernelSpec& spec) {
  return estimate_density(pts, std::make_shared<const GridLayout>(mesh), spec);
}

namespace {

template <class Grid, class F>
double weighted_pair_sum(const Grid& g, F f) {
  const auto& layout = g.layout();
  const auto& packed = g.slots();
  double total = 0.0;
  for (std::size_t r = 0; r < packed.dim(); ++r) {
    const auto* row = packed.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < r; ++c) acc += layout.weight(c) * f(row[c]);
    total += layout.weight(r) * (2.0 * acc + layout.weight(r) * f(row[r]));
  }
  return total;
}

}  // namespace

double quadrature_mass(const DensityGrid& f) {
  return weighted_pair_sum(f, [](double x) { return x; });
}

double quadrature_norm2(const QGrid& q) {
  return weighted_pair_sum(q, [](double x) { return x * x; });
}

QGrid q_transform(const DensityGrid& f) {
  QGrid q(f.layout_ptr());
  const auto src = f.slots().raw();
  auto dst = q.slots().raw();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = std::sqrt(std::max(src[i], 0.0));
  return q;
}

QGradientGrid::QGradientGrid(std::shared_ptr<const GridLayout> layout)
    : layout_(std::move(layout)), n_(layout_->size()), data_(3 * n_ * n_, 0.0) {}

Vec3 QGradientGrid::d_first(std::size_t x, std::size_t y) const {
  return slot_gradient(layout_->slot_of(x), layout_->slot_of(y));
}

QGradientGrid q_gradients(const EndpointSet& pts, const DensityGrid& f, const KernelSpec& spec) {
  if (pts.empty()) throw EmptyEndpointSet("cannot differentiate a density of no endpoints");
  const KdeEngine engine(f.layout_ptr(), spec);
  const auto& layout = f.layout();
  QGradientGrid g(f.layout_ptr());
  KernelSupport a, b;
  // Rows x in supp(s), columns y in supp(o): d/dx of K(x, s_end) K(y, o_end).
  const auto scatter = [&](const KernelSupport& s, const KernelSupport& o, const Vec3& end) {
    for (std::size_t k = 0; k < s.slots.size(); ++k) {
      const Vec3& x = layout.point(s.slots[k]);
      const Vec3 dir = 0.5 * s.deriv[k] * (end - s.cosine[k] * x);
      double* row = g.slot_row(s.slots[k]);
      for (std::size_t m = 0; m < o.slots.size(); ++m) {
        double* cell = row + 3 * o.slots[m];
        const double w = o.value[m];
        cell[0] += w * dir.x();
        cell[1] += w * dir.y();
        cell[2] += w * dir.z();
      }
    }
  };
  for (std::uint32_t j : engine.traversal_order(pts)) {
    engine.support(pts[j].first, a, true);
    engine.support(pts[j].second, b, true);
    scatter(a, b, pts[j].first.point.coords());
    scatter(b, a, pts[j].second.point.coords());
  }
  const double scale = 1.0 / static_cast<double>(pts.size());
  const double floor = 1e-12 * f.max_value();
  const std::size_t n = layout.size();
  for (std::size_t x = 0; x < n; ++x) {
    double* row = g.slot_row(x);
    for (std::size_t y = 0; y < n; ++y) {
      const double fv = f.slots()(x, y);
      const double c = fv < floor || fv <= 0.0 ? 0.0 : scale / (2.0 * std::sqrt(fv));
      for (int d = 0; d < 3; ++d) row[3 * y + d] *= c;
    }
  }
  return g;
}

std::vector<LcvResult> lcv_sweep(const EndpointSet& pts, std::span<const double> sigmas,
                                 double spectral_tol, double value_cutoff) {
  if (pts.size() < 2) throw ConfigError("LCV needs at least two endpoint pairs");
  if (sigmas.empty()) return {};
  std::vector<HeatKernel> kernels;
  int max_h = 0;
  double widest = 0.0, min_cos = 1.0;
  for (double s : sigmas) {
    kernels.emplace_back(make_kernel_spec(s, spectral_tol, value_cutoff));
    max_h = std::max(max_h, kernels.back().spec().truncation);
    if (kernels.back().support_angle() >= widest) {
      widest = kernels.back().support_angle();
      min_cos = kernels.back().min_cosine();
    }
  }
  const std::size_t n = pts.size();
  std::vector<Vec3> first[2];
  std::vector<std::uint32_t> ids[2];
  for (std::size_t j = 0; j < n; ++j) {
    const int h = hemi_index(pts[j].first.hemi);
    first[h].push_back(pts[j].first.point.coords());
    ids[h].push_back(static_cast<std::uint32_t>(j));
  }
  const SphereIndex index[2] = {SphereIndex(first[0], widest), SphereIndex(first[1], widest)};

  std::vector<std::vector<double>> loo(kernels.size(), std::vector<double>(n, 0.0));
  std::vector<std::uint32_t> bi, bj;
  std::vector<double> c1, c2;
  const auto flush = [&] {
    if (bi.empty()) return;
    const LegendreCache l1(c1, max_h), l2(c2, max_h);
    for (std::size_t s = 0; s < kernels.size(); ++s) {
      const auto k1 = l1.kernel_values(kernels[s]);
      const auto k2 = l2.kernel_values(kernels[s]);
      for (std::size_t m = 0; m < bi.size(); ++m) {
        const double prod = k1[m] * k2[m];
        loo[s][bi[m]] += prod;
        loo[s][bj[m]] += prod;
      }
    }
    bi.clear();
    bj.clear();
    c1.clear();
    c2.clear();
  };
  std::vector<CapHit> hits;
  for (std::size_t j = 0; j < n; ++j) {
    const auto& pj = pts[j];
    const int h = hemi_index(pj.first.hemi);
    hits.clear();
    index[h].query(pj.first.point.coords(), min_cos, hits);
    for (const auto& hit : hits) {
      const std::uint32_t i = ids[h][hit.index];
      if (i >= j) break;
      const auto& pi = pts[i];
      if (pi.second.hemi != pj.second.hemi) continue;
      const double t2 = pi.second.point.dot(pj.second.point);
      if (t2 < min_cos) continue;
      bi.push_back(i);
      bj.push_back(static_cast<std::uint32_t>(j));
      c1.push_back(hit.cosine);
      c2.push_back(t2);
    }
    if (bi.size() >= 8192) flush();
  }
  flush();

  std::vector<LcvResult> out;
  for (std::size_t s = 0; s < kernels.size(); ++s) {
    LcvResult r;
    r.sigma = sigmas[s];
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double val = loo[s][j] / static_cast<double>(n - 1);
      if (val > 0.0) {
        acc += std::log(val);
      } else {
        ++r.zero_count;
      }
    }
    r.score = r.zero_count ? -std::numeric_limits<double>::infinity()
                           : acc / static_cast<double>(n);
    out.push_back(r);
  }
  return out;
}

double lcv_score(const EndpointSet& pts, double sigma) {
  const double s[1] = {sigma};
  return lcv_sweep(pts, s).front().score;
}

}  // namespace sphalign
