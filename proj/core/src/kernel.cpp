#include "sphalign/kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>

#include "sphalign/errors.hpp"
#include "sphalign/sphere_index.hpp"

namespace sphalign {

int truncation_degree(double sigma, double spectral_tol) {
  if (!(sigma > 0.0)) throw ConfigError("kernel bandwidth must be positive");
  if (!(spectral_tol > 0.0) || spectral_tol > 1.0) {
    throw ConfigError("spectral tolerance must lie in (0, 1]");
  }
  const double target = -std::log(spectral_tol);
  for (int h = 0; h < kMaxTruncation; ++h) {
    if (static_cast<double>(h) * (h + 1) * sigma >= target) return h;
  }
  return kMaxTruncation;
}

KernelSpec make_kernel_spec(double sigma, double spectral_tol, double value_cutoff,
                            bool normalized) {
  if (!(value_cutoff >= 0.0) || value_cutoff >= 1.0) {
    throw ConfigError("value cutoff must lie in [0, 1)");
  }
  return KernelSpec{sigma, truncation_degree(sigma, spectral_tol), value_cutoff, normalized};
}

std::vector<double> legendre_all(double t, int max_degree) {
  std::vector<double> p(static_cast<std::size_t>(std::max(max_degree, 0)) + 1);
  p[0] = 1.0;
  if (max_degree >= 1) p[1] = t;
  for (int l = 1; l < max_degree; ++l) {
    p[l + 1] = ((2.0 * l + 1.0) * t * p[l] - l * p[l - 1]) / (l + 1.0);
  }
  return p;
}

namespace {

constexpr std::size_t kChunk = 64;

// Series and its t-derivative for up to kChunk cosines. The recurrence for the
// derivative, P'_{l+1} = P'_{l-1} + (2l+1) P_l, has no singularity at t = +-1.
void series_chunk(const double* c, const double* ra, const double* rb, int h, const double* t,
                  std::size_t n, double* val, double* dval) {
  double p0[kChunk], p1[kChunk], d0[kChunk], d1[kChunk], acc[kChunk], dacc[kChunk];
  for (std::size_t k = 0; k < n; ++k) {
    p0[k] = 1.0;
    p1[k] = t[k];
    d0[k] = 0.0;
    d1[k] = 1.0;
    acc[k] = c[0];
    dacc[k] = 0.0;
  }
  if (h >= 1) {
    for (std::size_t k = 0; k < n; ++k) {
      acc[k] += c[1] * p1[k];
      dacc[k] += c[1];
    }
  }
  for (int l = 1; l < h; ++l) {
    const double a = ra[l], b = rb[l], cl = c[l + 1], twol1 = 2.0 * l + 1.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double p2 = a * t[k] * p1[k] - b * p0[k];
      const double d2 = d0[k] + twol1 * p1[k];
      p0[k] = p1[k];
      p1[k] = p2;
      d0[k] = d1[k];
      d1[k] = d2;
      acc[k] += cl * p2;
      dacc[k] += cl * d2;
    }
  }
  for (std::size_t k = 0; k < n; ++k) {
    val[k] = acc[k];
    if (dval) dval[k] = dacc[k];
  }
}

}  // namespace

HeatKernel::HeatKernel(const KernelSpec& spec) : spec_(spec) {
  if (!(spec.sigma > 0.0)) throw ConfigError("kernel bandwidth must be positive");
  if (spec.truncation < 0 || spec.truncation > kMaxTruncation) {
    throw ConfigError("kernel truncation out of range");
  }
  if (!(spec.value_cutoff >= 0.0) || spec.value_cutoff >= 1.0) {
    throw ConfigError("value cutoff must lie in [0, 1)");
  }
  const int h = spec.truncation;
  const double scale = spec.normalized ? 1.0 / (4.0 * std::numbers::pi) : 1.0;
  coeff_.resize(static_cast<std::size_t>(h) + 1);
  rec_a_.assign(coeff_.size(), 0.0);
  rec_b_.assign(coeff_.size(), 0.0);
  for (int l = 0; l <= h; ++l) {
    coeff_[l] = scale * (2.0 * l + 1.0) * std::exp(-static_cast<double>(l) * (l + 1) * spec.sigma);
    rec_a_[l] = (2.0 * l + 1.0) / (l + 1.0);
    rec_b_[l] = static_cast<double>(l) / (l + 1.0);
  }
  peak_ = std::max(raw_value(1.0), 0.0);
  threshold_ = spec.value_cutoff * peak_;

  // Outermost retained angle on a fine scan; the cap edge is pushed one
  // sample further out and the per-value test does the exact trimming.
  constexpr int kScan = 8192;
  std::vector<double> ts(kScan + 1), vs(kScan + 1);
  for (int i = 0; i <= kScan; ++i) ts[i] = std::cos(std::numbers::pi * i / kScan);
  for (std::size_t s = 0; s < ts.size(); s += kChunk) {
    const std::size_t n = std::min(kChunk, ts.size() - s);
    series_chunk(coeff_.data(), rec_a_.data(), rec_b_.data(), h, ts.data() + s, n, vs.data() + s,
                 nullptr);
  }
  int last = 0;
  for (int i = 0; i <= kScan; ++i) {
    if (vs[i] > 0.0 && vs[i] >= threshold_) last = i;
  }
  if (last >= kScan - 1) {
    min_cosine_ = -1.0;
    support_angle_ = std::numbers::pi;
  } else {
    support_angle_ = std::numbers::pi * (last + 1) / kScan;
    min_cosine_ = ts[last + 1];
  }
}

double HeatKernel::raw_value(double t) const {
  double v = 0.0;
  series_chunk(coeff_.data(), rec_a_.data(), rec_b_.data(), spec_.truncation, &t, 1, &v, nullptr);
  return v;
}

void HeatKernel::evaluate(std::span<const double> t, std::span<double> val,
                          std::span<double> dval) const {
  const bool want_d = !dval.empty();
  for (std::size_t s = 0; s < t.size(); s += kChunk) {
    const std::size_t n = std::min(kChunk, t.size() - s);
    series_chunk(coeff_.data(), rec_a_.data(), rec_b_.data(), spec_.truncation, t.data() + s, n,
                 val.data() + s, want_d ? dval.data() + s : nullptr);
    for (std::size_t k = s; k < s + n; ++k) {
      const bool keep = std::max(t[k], -1.0) >= min_cosine_ && val[k] > 0.0 && val[k] >= threshold_;
      if (!keep) {
        val[k] = 0.0;
        if (want_d) dval[k] = 0.0;
      }
    }
  }
}

double HeatKernel::value(double t) const {
  double v = 0.0;
  evaluate({&t, 1}, {&v, 1}, {});
  return v;
}

double HeatKernel::derivative(double t) const {
  double v = 0.0, d = 0.0;
  evaluate({&t, 1}, {&v, 1}, {&d, 1});
  return d;
}

namespace {

const HeatKernel& cached_kernel(const KernelSpec& spec) {
  thread_local std::optional<HeatKernel> last;
  if (!last || !(last->spec() == spec)) last.emplace(spec);
  return *last;
}

}  // namespace

double heat_kernel(const HemiPoint& x, const HemiPoint& y, const HeatKernel& kernel) {
  if (x.hemi != y.hemi) return 0.0;
  return kernel.value(x.point.dot(y.point));
}

double heat_kernel(const HemiPoint& x, const HemiPoint& y, const KernelSpec& spec) {
  return heat_kernel(x, y, cached_kernel(spec));
}

Vec3 heat_kernel_grad(const HemiPoint& x, const HemiPoint& y, const HeatKernel& kernel) {
  if (x.hemi != y.hemi) return Vec3::Zero();
  const Vec3& xc = x.point.coords();
  const Vec3& yc = y.point.coords();
  const double t = xc.dot(yc);
  const double d = kernel.derivative(t);
  if (d == 0.0) return Vec3::Zero();
  return project_tangent(xc, d * yc);
}

Vec3 heat_kernel_grad(const HemiPoint& x, const HemiPoint& y, const KernelSpec& spec) {
  return heat_kernel_grad(x, y, cached_kernel(spec));
}

double SparseKernelMatrix::coeff(std::size_t r, std::size_t c) const {
  const auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
  const auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(c));
  if (it == last || *it != c) return 0.0;
  return value[static_cast<std::size_t>(it - col.begin())];
}

SparseKernelMatrix heat_kernel_matrix(std::span<const HemiPoint> grid,
                                      std::span<const HemiPoint> data, const KernelSpec& spec) {
  const HeatKernel kernel(spec);
  SparseKernelMatrix m;
  m.rows = grid.size();
  m.cols = data.size();
  m.row_ptr.assign(grid.size() + 1, 0);

  std::vector<Vec3> pts[2];
  std::vector<std::uint32_t> ids[2];
  for (std::size_t j = 0; j < data.size(); ++j) {
    const int h = hemi_index(data[j].hemi);
    pts[h].push_back(data[j].point.coords());
    ids[h].push_back(static_cast<std::uint32_t>(j));
  }
  const SphereIndex index[2] = {SphereIndex(pts[0], kernel.support_angle()),
                                SphereIndex(pts[1], kernel.support_angle())};

  std::vector<CapHit> hits;
  std::vector<double> ts, vs;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    const int h = hemi_index(grid[r].hemi);
    hits.clear();
    index[h].query(grid[r].point.coords(), kernel.min_cosine(), hits);
    ts.resize(hits.size());
    vs.resize(hits.size());
    for (std::size_t k = 0; k < hits.size(); ++k) ts[k] = hits[k].cosine;
    kernel.evaluate(ts, vs, {});
    for (std::size_t k = 0; k < hits.size(); ++k) {
      if (vs[k] > 0.0) {
        m.col.push_back(ids[h][hits[k].index]);
        m.value.push_back(vs[k]);
      }
    }
    m.row_ptr[r + 1] = m.value.size();
  }
  return m;
}

LegendreCache::LegendreCache(std::span<const double> cosines, int max_degree)
    : cosines_(cosines.begin(), cosines.end()), max_degree_(max_degree) {
  if (max_degree < 0 || max_degree > kMaxTruncation) {
    throw ConfigError("Legendre cache degree out of range");
  }
  const std::size_t w = static_cast<std::size_t>(max_degree) + 1;
  table_.resize(cosines_.size() * w);
  for (std::size_t k = 0; k < cosines_.size(); ++k) {
    const double t = cosines_[k];
    double* p = table_.data() + k * w;
    p[0] = 1.0;
    if (max_degree >= 1) p[1] = t;
    double p0 = 1.0, p1 = t;
    for (int l = 1; l < max_degree; ++l) {
      const double a = (2.0 * l + 1.0) / (l + 1.0), b = static_cast<double>(l) / (l + 1.0);
      const double p2 = a * t * p1 - b * p0;
      p[l + 1] = p2;
      p0 = p1;
      p1 = p2;
    }
  }
}

std::vector<double> LegendreCache::kernel_values(const HeatKernel& kernel) const {
  const int h = kernel.spec().truncation;
  if (h > max_degree_) throw ConfigError("kernel truncation exceeds cached Legendre degree");
  const auto c = kernel.coefficients();
  const std::size_t w = static_cast<std::size_t>(max_degree_) + 1;
  std::vector<double> out(cosines_.size());
  for (std::size_t k = 0; k < cosines_.size(); ++k) {
    const double* p = table_.data() + k * w;
    double acc = c[0];
    if (h >= 1) acc += c[1] * p[1];
    for (int l = 1; l < h; ++l) acc += c[l + 1] * p[l + 1];
    const double t = cosines_[k];
    const bool keep = std::max(t, -1.0) >= kernel.min_cosine() && acc > 0.0 && acc >= kernel.threshold();
    out[k] = keep ? acc : 0.0;
  }
  return out;
}

namespace {

// Value, first and second derivative of the raw series at t.
std::array<double, 3> series_derivatives(std::span<const double> c, double t) {
  const int h = static_cast<int>(c.size()) - 1;
  double p0 = 1.0, p1 = t, d0 = 0.0, d1 = 1.0, e0 = 0.0, e1 = 0.0;
  double v = c[0], dv = 0.0, ddv = 0.0;
  if (h >= 1) {
    v += c[1] * t;
    dv += c[1];
  }
  for (int l = 1; l < h; ++l) {
    const double twol1 = 2.0 * l + 1.0;
    const double p2 = (twol1 * t * p1 - l * p0) / (l + 1.0);
    const double d2 = d0 + twol1 * p1;
    const double e2 = e0 + twol1 * d1;
    p0 = p1;
    p1 = p2;
    d0 = d1;
    d1 = d2;
    e0 = e1;
    e1 = e2;
    v += c[l + 1] * p2;
    dv += c[l + 1] * d2;
    ddv += c[l + 1] * e2;
  }
  return {v, dv, ddv};
}

}  // namespace

KernelTable::KernelTable(const HeatKernel& kernel, int intervals)
    : t0_(kernel.min_cosine()),
      threshold_(kernel.threshold()),
      support_angle_(kernel.support_angle()),
      intervals_(std::max(intervals, 1)) {
  h_ = (1.0 - t0_) / intervals_;
  inv_h_ = 1.0 / h_;
  k0_.resize(static_cast<std::size_t>(intervals_) + 1);
  k1_.resize(k0_.size());
  k2_.resize(k0_.size());
  for (int i = 0; i <= intervals_; ++i) {
    const double t = i == intervals_ ? 1.0 : t0_ + i * h_;
    const auto d = series_derivatives(kernel.coefficients(), t);
    k0_[i] = d[0];
    k1_[i] = d[1];
    k2_[i] = d[2];
  }
}

void KernelTable::evaluate(std::span<const double> t, std::span<double> val,
                           std::span<double> dval) const {
  const bool want_d = !dval.empty();
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double tk = std::clamp(t[k], -1.0, 1.0);
    if (!(tk >= t0_)) {
      val[k] = 0.0;
      if (want_d) dval[k] = 0.0;
      continue;
    }
    const double s = (tk - t0_) * inv_h_;
    const int i = std::min(static_cast<int>(s), intervals_ - 1);
    const double u = s - i, u2 = u * u, u3 = u2 * u;
    const double h00 = 2 * u3 - 3 * u2 + 1, h10 = u3 - 2 * u2 + u;
    const double h01 = -2 * u3 + 3 * u2, h11 = u3 - u2;
    const double v = h00 * k0_[i] + h10 * h_ * k1_[i] + h01 * k0_[i + 1] + h11 * h_ * k1_[i + 1];
    const bool keep = v > 0.0 && v >= threshold_;
    val[k] = keep ? v : 0.0;
    if (want_d) {
      dval[k] = keep ? h00 * k1_[i] + h10 * h_ * k2_[i] + h01 * k1_[i + 1] +
                           h11 * h_ * k2_[i + 1]
                     : 0.0;
    }
  }
}

double KernelTable::value(double t) const {
  double v = 0.0;
  evaluate({&t, 1}, {&v, 1}, {});
  return v;
}

double KernelTable::derivative(double t) const {
  double v = 0.0, d = 0.0;
  evaluate({&t, 1}, {&v, 1}, {&d, 1});
  return d;
}

}  // namespace sphalign
