#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sphalign/kernel.hpp"
#include "sphalign/mesh.hpp"
#include "sphalign/sphere.hpp"
#include "sphalign/sphere_index.hpp"

namespace sphalign {

/// One streamline: its two endpoints, in load order.
struct EndpointPair {
  HemiPoint first;
  HemiPoint second;

  friend bool operator==(const EndpointPair&, const EndpointPair&) = default;
};

/// Endpoint pairs plus optional per-pair ids and labels (empty or one per pair).
struct EndpointSet {
  std::vector<EndpointPair> pairs;
  std::vector<std::int64_t> ids;
  std::vector<std::string> labels;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
  const EndpointPair& operator[](std::size_t i) const { return pairs[i]; }
  EndpointPair& operator[](std::size_t i) { return pairs[i]; }
  bool has_labels() const noexcept { return !labels.empty(); }
};

/// Vertex layout of the grid on Omega = S1 u S2 used by all pair grids.
///
/// A global vertex index is (hemi - 1) * V + v for mesh vertex v. Pair grids
/// store rows in a separate slot order in which spatially close vertices get
/// close slots, so that a kernel support is a handful of contiguous runs.
class GridLayout {
 public:
  explicit GridLayout(IcosphereMesh mesh);

  const IcosphereMesh& mesh() const noexcept { return mesh_; }
  std::size_t hemi_size() const noexcept { return hemi_size_; }
  std::size_t size() const noexcept { return 2 * hemi_size_; }

  std::uint32_t slot_of(std::size_t global) const { return slot_of_[global]; }
  std::uint32_t global_of(std::size_t slot) const { return global_of_[slot]; }
  static std::size_t global_index(Hemisphere h, std::size_t v, std::size_t hemi_size) {
    return static_cast<std::size_t>(hemi_index(h)) * hemi_size + v;
  }

  /// Per-slot data.
  const Vec3& point(std::size_t slot) const { return points_[slot % hemi_size_]; }
  Hemisphere hemi(std::size_t slot) const {
    return slot < hemi_size_ ? Hemisphere::Left : Hemisphere::Right;
  }
  double weight(std::size_t slot) const { return weights_[slot % hemi_size_]; }
  std::uint32_t vertex_of_slot(std::size_t slot) const {
    return global_of_[slot] % static_cast<std::uint32_t>(hemi_size_);
  }

  /// Slot-ordered points and weights of one hemisphere (the same for both).
  std::span<const Vec3> hemi_points() const noexcept { return points_; }
  std::span<const double> hemi_weights() const noexcept { return weights_; }

 private:
  IcosphereMesh mesh_;
  std::size_t hemi_size_;
  std::vector<std::uint32_t> slot_of_, global_of_;
  std::vector<Vec3> points_;
  std::vector<double> weights_;
};

std::shared_ptr<const GridLayout> make_layout(int level);

/// Packed lower triangle of a symmetric n x n matrix.
template <class T>
class PackedSymmetric {
 public:
  PackedSymmetric() = default;
  explicit PackedSymmetric(std::size_t n) : n_(n), data_(n * (n + 1) / 2, T(0)) {}

  std::size_t dim() const noexcept { return n_; }
  static std::size_t row_offset(std::size_t r) noexcept { return r * (r + 1) / 2; }

  T* row(std::size_t r) noexcept { return data_.data() + row_offset(r); }
  const T* row(std::size_t r) const noexcept { return data_.data() + row_offset(r); }

  T operator()(std::size_t a, std::size_t b) const noexcept {
    return a >= b ? data_[row_offset(a) + b] : data_[row_offset(b) + a];
  }
  T& ref(std::size_t a, std::size_t b) noexcept {
    return a >= b ? data_[row_offset(a) + b] : data_[row_offset(b) + a];
  }

  std::span<T> raw() noexcept { return data_; }
  std::span<const T> raw() const noexcept { return data_; }

 private:
  std::size_t n_ = 0;
  std::vector<T> data_;
};

/// Symmetric function on grid-vertex pairs of Omega x Omega.
template <class T>
class PairGrid {
 public:
  PairGrid() = default;
  explicit PairGrid(std::shared_ptr<const GridLayout> layout)
      : layout_(std::move(layout)), values_(layout_->size()) {}

  const GridLayout& layout() const noexcept { return *layout_; }
  const std::shared_ptr<const GridLayout>& layout_ptr() const noexcept { return layout_; }
  std::size_t size() const noexcept { return values_.dim(); }

  /// Value at global vertex indices a, b.
  T value(std::size_t a, std::size_t b) const {
    return values_(layout_->slot_of(a), layout_->slot_of(b));
  }
  T value(Hemisphere ha, std::size_t va, Hemisphere hb, std::size_t vb) const {
    const std::size_t n = layout_->hemi_size();
    return value(GridLayout::global_index(ha, va, n), GridLayout::global_index(hb, vb, n));
  }

  /// Slot-ordered storage.
  PackedSymmetric<T>& slots() noexcept { return values_; }
  const PackedSymmetric<T>& slots() const noexcept { return values_; }

 private:
  std::shared_ptr<const GridLayout> layout_;
  PackedSymmetric<T> values_;
};

/// f_sym sampled on all grid pairs.
class DensityGrid : public PairGrid<double> {
 public:
  using PairGrid<double>::PairGrid;
  double max_value() const;
};

/// sqrt(f_sym) sampled on all grid pairs.
class QGrid : public PairGrid<double> {
 public:
  using PairGrid<double>::PairGrid;
};

/// Kernel values of one endpoint on the grid: sorted slots, values, optional
/// derivatives dK/dt, and the contiguous runs of slots.
struct KernelSupport {
  struct Run {
    std::uint32_t slot;   // first slot of the run
    std::uint32_t first;  // position of that slot in the arrays below
    std::uint32_t length;
  };
  std::vector<std::uint32_t> slots;
  std::vector<double> cosine;
  std::vector<double> value;
  std::vector<double> deriv;
  std::vector<Run> runs;

  void clear() {
    slots.clear();
    cosine.clear();
    value.clear();
    deriv.clear();
    runs.clear();
  }
};

/// Grid KDE machinery shared by density estimation and the gradient passes.
/// Every datum contributes its product kernel on the pairs of its two supports;
/// work is O(N s^2) for supports of s vertices.
class KdeEngine {
 public:
  KdeEngine(std::shared_ptr<const GridLayout> layout, const KernelSpec& spec);

  const GridLayout& layout() const noexcept { return *layout_; }
  const std::shared_ptr<const GridLayout>& layout_ptr() const noexcept { return layout_; }
  const HeatKernel& kernel() const noexcept { return kernel_; }
  const KernelTable& table() const noexcept { return table_; }
  const KernelSpec& spec() const noexcept { return kernel_.spec(); }

  /// Fills support with the retained grid slots of p (and dK/dt when asked).
  void support(const HemiPoint& p, KernelSupport& out, bool with_derivative = false) const;

  /// Processing order of the pairs: grouped by coarse location of both ends.
  std::vector<std::uint32_t> traversal_order(const EndpointSet& pts) const;

  /// Evaluates f_sym into grid (reallocated if its layout differs).
  void estimate(const EndpointSet& pts, DensityGrid& grid) const;

  /// For a symmetric weight grid R over pairs, computes for every datum j
  ///   u_j = sum_{a,b} R(a,b) grad_p K(a, p_j) K(b, q_j),
  ///   v_j = sum_{a,b} R(a,b) K(a, p_j) grad_q K(b, q_j),
  /// i.e. the derivative of sum R f with respect to each endpoint, times N.
  void endpoint_sensitivities(const EndpointSet& pts, const PackedSymmetric<double>& weights,
                              std::vector<Vec3>& u, std::vector<Vec3>& v) const;

 private:
  std::shared_ptr<const GridLayout> layout_;
  HeatKernel kernel_;
  KernelTable table_;
  // Coarse cells with the ascending hemisphere slots that can fall inside the
  // support of any point of the cell.
  IcosphereMesh coarse_;
  std::vector<std::uint32_t> cand_ptr_, cand_;
};

/// Eq. 1 KDE followed by symmetrization. Throws EmptyEndpointSet.
DensityGrid estimate_density(const EndpointSet& pts, const IcosphereMesh& mesh,
                             const KernelSpec& spec);
DensityGrid estimate_density(const EndpointSet& pts, std::shared_ptr<const GridLayout> layout,
                             const KernelSpec& spec);

/// Quadrature double sum of f with vertex weights.
double quadrature_mass(const DensityGrid& f);
/// Quadrature double sum of q^2.
double quadrature_norm2(const QGrid& q);

QGrid q_transform(const DensityGrid& f);

/// Analytic first-argument gradients dq(x, y)/dx for all ordered pairs; the
/// second-argument gradient follows from symmetry, dq(x, y)/dy = dq(y, x)/dy.
class QGradientGrid {
 public:
  QGradientGrid() = default;
  explicit QGradientGrid(std::shared_ptr<const GridLayout> layout);

  const GridLayout& layout() const noexcept { return *layout_; }
  /// Gradient at x of q(., y) for global vertex indices x, y (tangent at x).
  Vec3 d_first(std::size_t x, std::size_t y) const;
  /// Gradient at y of q(x, .).
  Vec3 d_second(std::size_t x, std::size_t y) const { return d_first(y, x); }

  /// Slot-indexed access, row x holds the gradients at x against every y.
  Vec3 slot_gradient(std::size_t x_slot, std::size_t y_slot) const {
    const double* g = data_.data() + 3 * (x_slot * n_ + y_slot);
    return {g[0], g[1], g[2]};
  }
  double* slot_row(std::size_t x_slot) { return data_.data() + 3 * x_slot * n_; }

 private:
  std::shared_ptr<const GridLayout> layout_;
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// dq = df / (2 sqrt f), zero where f < 1e-12 max f. Memory is 24 (2V)^2 bytes.
QGradientGrid q_gradients(const EndpointSet& pts, const DensityGrid& f, const KernelSpec& spec);

/// Leave-one-out log-likelihood for one bandwidth.
struct LcvResult {
  double sigma = 0.0;
  double score = 0.0;            ///< -infinity when any leave-one-out value is zero
  std::size_t zero_count = 0;    ///< pairs with a zero leave-one-out density
};

/// One LCV score per bandwidth; Legendre values of each block of candidate
/// pairs are computed once and shared by all bandwidths.
std::vector<LcvResult> lcv_sweep(const EndpointSet& pts, std::span<const double> sigmas,
                                 double spectral_tol = kDefaultSpectralTol,
                                 double value_cutoff = kDefaultValueCutoff);

/// Single-bandwidth LCV score; -infinity when degenerate.
double lcv_score(const EndpointSet& pts, double sigma);

}  // namespace sphalign
