#include "sphalign/basis.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>

#include "sphalign/errors.hpp"

namespace sphalign {

namespace {

constexpr std::size_t scalar_index(int l, int m) {
  return static_cast<std::size_t>(l * l - 1 + m + l);
}

}  // namespace

TangentBasis::TangentBasis(int max_degree) : degree_(max_degree) {
  if (max_degree > kMaxBasisDegree) {
    throw DegreeTooLarge("basis degree " + std::to_string(max_degree) + " exceeds " +
                         std::to_string(kMaxBasisDegree));
  }
  if (max_degree < 1) throw ConfigError("basis degree must be at least 1");
  const std::size_t ns = basis_size(max_degree) / 2;
  norm_.resize(ns);
  for (int l = 1; l <= max_degree; ++l) {
    for (int m = -l; m <= l; ++m) {
      const int am = std::abs(m);
      // (l - |m|)! / (l + |m|)!
      double ratio = 1.0;
      for (int k = l - am + 1; k <= l + am; ++k) ratio /= k;
      double n = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * ratio);
      if (m != 0) n *= std::numbers::sqrt2;
      norm_[scalar_index(l, m)] = n;
    }
  }
  for (FieldKind kind : {FieldKind::Gradient, FieldKind::Rotational}) {
    for (int l = 1; l <= max_degree; ++l) {
      for (int m = -l; m <= l; ++m) tags_.push_back({kind, l, m});
    }
  }
}

std::size_t TangentBasis::index_of(FieldKind kind, int l, int m) const {
  if (l < 1 || l > degree_ || std::abs(m) > l) throw ConfigError("no such basis field");
  return (kind == FieldKind::Rotational ? size() / 2 : 0) + scalar_index(l, m);
}

void TangentBasis::eval_harmonics(const Vec3& p, double* y, Vec3* grad) const {
  const int big_l = degree_;
  const double x = p.x(), yy = p.y(), z = p.z();
  // q[l][m] = d^m P_l / dz^m, kept for m <= l + 1 (zero beyond l).
  double q[kMaxBasisDegree + 1][kMaxBasisDegree + 2] = {};
  double dfact = 1.0;  // (2m - 1)!!
  for (int m = 0; m <= big_l; ++m) {
    if (m > 0) dfact *= 2.0 * m - 1.0;
    q[m][m] = dfact;
    if (m + 1 <= big_l) q[m + 1][m] = (2.0 * m + 1.0) * z * dfact;
    for (int l = m + 2; l <= big_l; ++l) {
      q[l][m] = ((2.0 * l - 1.0) * z * q[l - 1][m] - (l + m - 1.0) * q[l - 2][m]) / (l - m);
    }
  }
  // Powers (x + i y)^m.
  std::complex<double> pw[kMaxBasisDegree + 1];
  pw[0] = 1.0;
  const std::complex<double> w(x, yy);
  for (int m = 1; m <= big_l; ++m) pw[m] = pw[m - 1] * w;

  for (int l = 1; l <= big_l; ++l) {
    for (int m = -l; m <= l; ++m) {
      const int am = std::abs(m);
      const double n = norm_[scalar_index(l, m)];
      double c, dcx, dcy;
      if (m >= 0) {
        c = pw[am].real();
        // d/dx (x+iy)^m = m (x+iy)^(m-1), d/dy = i m (x+iy)^(m-1).
        dcx = am ? am * pw[am - 1].real() : 0.0;
        dcy = am ? -am * pw[am - 1].imag() : 0.0;
      } else {
        c = pw[am].imag();
        dcx = am * pw[am - 1].imag();
        dcy = am * pw[am - 1].real();
      }
      const double qv = q[l][am];
      const double dq = am + 1 <= l ? q[l][am + 1] : 0.0;
      const std::size_t k = scalar_index(l, m);
      if (y) y[k] = n * qv * c;
      if (grad) {
        const Vec3 g(n * qv * dcx, n * qv * dcy, n * dq * c);
        grad[k] = g - g.dot(p) * p;
      }
    }
  }
}

void TangentBasis::eval_scalar(const Vec3& p, std::span<double> out) const {
  eval_harmonics(p, out.data(), nullptr);
}

void TangentBasis::eval(const Vec3& p, std::span<Vec3> out) const {
  const std::size_t half = size() / 2;
  eval_harmonics(p, nullptr, out.data());
  for (std::size_t k = 0; k < half; ++k) {
    const int l = tags_[k].l;
    const double s = 1.0 / std::sqrt(static_cast<double>(l) * (l + 1));
    out[k] *= s;
    out[half + k] = p.cross(out[k]);
  }
}

void TangentBasis::divergence(const Vec3& p, std::span<double> out) const {
  const std::size_t half = size() / 2;
  eval_harmonics(p, out.data(), nullptr);
  for (std::size_t k = 0; k < half; ++k) {
    const int l = tags_[k].l;
    out[k] *= -std::sqrt(static_cast<double>(l) * (l + 1));
    out[half + k] = 0.0;
  }
}

Vec3 TangentBasis::synthesize(std::span<const double> coeffs, const Vec3& p) const {
  thread_local std::vector<Vec3> fields;
  fields.resize(size());
  eval(p, fields);
  Vec3 v = Vec3::Zero();
  for (std::size_t i = 0; i < fields.size(); ++i) v += coeffs[i] * fields[i];
  return v;
}

TangentBasis build_basis(int max_degree) { return TangentBasis(max_degree); }

const TangentBasis& shared_basis(int max_degree) {
  static std::mutex mutex;
  static std::array<std::unique_ptr<TangentBasis>, kMaxBasisDegree + 1> cache;
  if (max_degree < 1 || max_degree > kMaxBasisDegree) {
    TangentBasis check(max_degree);  // throws the matching error
  }
  const std::lock_guard lock(mutex);
  auto& slot = cache[static_cast<std::size_t>(max_degree)];
  if (!slot) slot = std::make_unique<TangentBasis>(max_degree);
  return *slot;
}

std::vector<TangentVector> eval_basis(const TangentBasis& basis, const SpherePoint& p) {
  std::vector<Vec3> f(basis.size());
  basis.eval(p.coords(), f);
  std::vector<TangentVector> out;
  out.reserve(f.size());
  for (const auto& v : f) out.push_back({p, v});
  return out;
}

std::vector<double> basis_divergence(const TangentBasis& basis, const SpherePoint& p) {
  std::vector<double> d(basis.size());
  basis.divergence(p.coords(), d);
  return d;
}

}  // namespace sphalign
