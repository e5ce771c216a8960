#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sphalign/sphere.hpp"

namespace sphalign {

constexpr int kMaxTruncation = 256;
constexpr double kDefaultSpectralTol = 1e-10;
constexpr double kDefaultValueCutoff = 1e-8;

/// Truncated spherical heat kernel parameters.
struct KernelSpec {
  double sigma = 0.005;        ///< diffusion time (bandwidth)
  int truncation = 68;         ///< highest Legendre degree kept
  double value_cutoff = kDefaultValueCutoff;  ///< relative to the peak value
  bool normalized = true;      ///< divide by 4 pi so the kernel integrates to one

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

/// Smallest H with exp(-H(H+1) sigma) <= spectral_tol, capped at kMaxTruncation.
int truncation_degree(double sigma, double spectral_tol);

/// Kernel spec with the truncation derived from spectral_tol.
KernelSpec make_kernel_spec(double sigma, double spectral_tol = kDefaultSpectralTol,
                            double value_cutoff = kDefaultValueCutoff, bool normalized = true);

/// P_0(t) .. P_H(t) by the three-term recurrence.
std::vector<double> legendre_all(double t, int max_degree);

/// Zonal heat kernel as a function of the cosine t = x . y.
///
/// A value is retained when t >= min_cosine() and the truncated series is
/// positive and at least value_cutoff * peak(); anything else evaluates to
/// exactly zero (with zero derivative). The same rule is used by the scalar,
/// batched and matrix entry points, so they agree bit for bit.
class HeatKernel {
 public:
  explicit HeatKernel(const KernelSpec& spec);

  const KernelSpec& spec() const noexcept { return spec_; }
  double peak() const noexcept { return peak_; }
  double threshold() const noexcept { return threshold_; }
  double min_cosine() const noexcept { return min_cosine_; }
  double support_angle() const noexcept { return support_angle_; }
  std::span<const double> coefficients() const noexcept { return coeff_; }

  double value(double t) const;
  /// dK/dt; the surface gradient in x of K(x . y) is derivative(t) * (y - t x).
  double derivative(double t) const;

  /// Batched evaluation; dval may be empty.
  void evaluate(std::span<const double> t, std::span<double> val, std::span<double> dval) const;

  /// Raw truncated series without clamping or cutoff.
  double raw_value(double t) const;

 private:
  KernelSpec spec_;
  std::vector<double> coeff_;
  std::vector<double> rec_a_, rec_b_;
  double peak_ = 0.0;
  double threshold_ = 0.0;
  double min_cosine_ = -1.0;
  double support_angle_ = 0.0;
};

/// Kernel value; zero when x and y lie on different hemispheres.
double heat_kernel(const HemiPoint& x, const HemiPoint& y, const KernelSpec& spec);
double heat_kernel(const HemiPoint& x, const HemiPoint& y, const HeatKernel& kernel);

/// Surface gradient of heat_kernel with respect to x (tangent at x).
Vec3 heat_kernel_grad(const HemiPoint& x, const HemiPoint& y, const KernelSpec& spec);
Vec3 heat_kernel_grad(const HemiPoint& x, const HemiPoint& y, const HeatKernel& kernel);

/// Compressed-row kernel matrix between grid points (rows) and data points
/// (columns). Column indices are ascending within a row.
struct SparseKernelMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::uint32_t> col;
  std::vector<double> value;

  std::size_t nnz() const noexcept { return value.size(); }
  double coeff(std::size_t r, std::size_t c) const;
};

SparseKernelMatrix heat_kernel_matrix(std::span<const HemiPoint> grid,
                                      std::span<const HemiPoint> data, const KernelSpec& spec);

/// Piecewise cubic Hermite table of a HeatKernel and its derivative over the
/// retained cosine range, for inner loops that evaluate millions of kernel
/// values. Nodes hold exact series values; the retention rule is the same as
/// HeatKernel's, applied to the interpolated value.
class KernelTable {
 public:
  explicit KernelTable(const HeatKernel& kernel, int intervals = 8192);

  double min_cosine() const noexcept { return t0_; }
  double threshold() const noexcept { return threshold_; }
  double support_angle() const noexcept { return support_angle_; }

  /// dval may be empty.
  void evaluate(std::span<const double> t, std::span<double> val, std::span<double> dval) const;
  double value(double t) const;
  double derivative(double t) const;

 private:
  double t0_ = -1.0, h_ = 1.0, inv_h_ = 1.0, threshold_ = 0.0, support_angle_ = 0.0;
  int intervals_ = 1;
  std::vector<double> k0_, k1_, k2_;
};

/// Legendre values of a fixed set of cosines, kept so that kernels for many
/// bandwidths are weighted sums of the same table.
class LegendreCache {
 public:
  LegendreCache(std::span<const double> cosines, int max_degree);

  int max_degree() const noexcept { return max_degree_; }
  std::size_t size() const noexcept { return cosines_.size(); }

  /// Kernel values for every cached cosine; spec.truncation must not exceed
  /// max_degree(). Identical to HeatKernel::evaluate on the same cosines.
  std::vector<double> kernel_values(const HeatKernel& kernel) const;

 private:
  std::vector<double> cosines_;
  int max_degree_;
  std::vector<double> table_;  // [k * (max_degree + 1) + l]
};

}  // namespace sphalign
