#include "sphalign/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "sphalign/errors.hpp"
#include "sphalign/sphere_index.hpp"

namespace sphalign {

std::uint64_t ConnectivityCounts::at(std::uint32_t a, std::uint32_t b) const {
  const auto it = counts.find({std::min(a, b), std::max(a, b)});
  return it == counts.end() ? 0 : it->second;
}

ConnectivityCounts bin_endpoints(const EndpointSet& pts, const IcosphereMesh& mesh) {
  ConnectivityCounts c;
  c.level = mesh.level();
  const auto k = static_cast<std::uint32_t>(mesh.face_count());
  const auto cell = [&](const HemiPoint& p) {
    return static_cast<std::uint32_t>(hemi_index(p.hemi)) * k + mesh.locate_face(p.point);
  };
  for (const auto& pair : pts.pairs) {
    const std::uint32_t a = cell(pair.first), b = cell(pair.second);
    ++c.counts[{std::min(a, b), std::max(a, b)}];
    ++c.n;
  }
  return c;
}

namespace {

template <class Keep>
EndpointSet filter_pairs(const EndpointSet& pts, Keep keep, const char* what) {
  EndpointSet out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!keep(i)) continue;
    out.pairs.push_back(pts[i]);
    if (!pts.ids.empty()) out.ids.push_back(pts.ids[i]);
    if (pts.has_labels()) out.labels.push_back(pts.labels[i]);
  }
  if (out.empty()) throw EmptyAfterFilter(std::string("no pairs left after filtering by ") + what);
  return out;
}

}  // namespace

EndpointSet filter_by_label(const EndpointSet& pts, const std::string& label) {
  if (!pts.has_labels()) throw EmptyAfterFilter("endpoint set has no labels");
  return filter_pairs(pts, [&](std::size_t i) { return pts.labels[i] == label; }, "label");
}

EndpointSet filter_by_hemisphere(const EndpointSet& pts, Hemisphere h) {
  return filter_pairs(
      pts, [&](std::size_t i) { return pts[i].first.hemi == h && pts[i].second.hemi == h; },
      "hemisphere");
}

OverlapReport overlap_coefficient(const ConnectivityCounts& c1, const ConnectivityCounts& c2,
                                  double tau) {
  if (c1.level != c2.level) throw MeshMismatch("connectivity counts binned on different meshes");
  if (!(tau >= 0.0)) throw ConfigError("tau must be non-negative");
  OverlapReport r;
  r.tau = tau;
  const auto above = [tau](std::uint64_t c, std::uint64_t n) {
    return n > 0 && static_cast<double>(c) / static_cast<double>(n) > tau;
  };
  std::size_t shared = 0;
  for (const auto& [cell, count] : c1.counts) {
    if (!above(count, c1.n)) continue;
    ++r.suprathreshold_sizes.first;
    const auto it = c2.counts.find(cell);
    if (it != c2.counts.end() && above(it->second, c2.n)) ++shared;
  }
  for (const auto& [cell, count] : c2.counts) r.suprathreshold_sizes.second += above(count, c2.n);
  const std::size_t denom = std::min(r.suprathreshold_sizes.first, r.suprathreshold_sizes.second);
  if (denom == 0) {
    r.empty = true;
    return r;
  }
  r.overlap = static_cast<double>(shared) / static_cast<double>(denom);
  return r;
}

namespace {

// Upper-triangle product-kernel entries of a pooled sample.
struct PooledGram {
  std::size_t m1 = 0, m2 = 0;
  std::vector<std::uint32_t> row, col;
  std::vector<double> value;
  double diagonal_sum = 0.0;
};

std::vector<EndpointPair> prepare(const EndpointSet& pts, const MmdOptions& o,
                                  std::uint64_t stream) {
  EndpointSet kept = o.hemisphere ? filter_by_hemisphere(pts, *o.hemisphere) : pts;
  if (kept.empty()) throw EmptyAfterFilter("no pairs for MMD");
  std::vector<EndpointPair> out = kept.pairs;
  if (o.subsample > 0 && o.subsample < out.size()) {
    std::mt19937_64 gen(o.seed * 2 + stream);
    std::vector<std::size_t> idx(out.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), gen);
    idx.resize(o.subsample);
    std::sort(idx.begin(), idx.end());
    std::vector<EndpointPair> sub;
    sub.reserve(idx.size());
    for (std::size_t i : idx) sub.push_back(out[i]);
    out = std::move(sub);
  }
  return out;
}

PooledGram pooled_gram(const std::vector<EndpointPair>& a, const std::vector<EndpointPair>& b,
                       const KernelSpec& spec) {
  const HeatKernel kernel(spec);
  const KernelTable table(kernel);
  PooledGram g;
  g.m1 = a.size();
  g.m2 = b.size();
  std::vector<EndpointPair> all = a;
  all.insert(all.end(), b.begin(), b.end());
  // Index the first endpoints per hemisphere.
  std::vector<Vec3> pts[2];
  std::vector<std::uint32_t> ids[2];
  for (std::uint32_t i = 0; i < all.size(); ++i) {
    const int h = hemi_index(all[i].first.hemi);
    pts[h].push_back(all[i].first.point.coords());
    ids[h].push_back(i);
  }
  const SphereIndex index[2] = {SphereIndex(pts[0], table.support_angle()),
                                SphereIndex(pts[1], table.support_angle())};
  const double peak = table.value(1.0);
  g.diagonal_sum = static_cast<double>(all.size()) * peak * peak;
  std::vector<CapHit> hits;
  for (std::uint32_t i = 0; i < all.size(); ++i) {
    const int h = hemi_index(all[i].first.hemi);
    hits.clear();
    index[h].query(all[i].first.point.coords(), table.min_cosine(), hits);
    for (const CapHit& hit : hits) {
      const std::uint32_t j = ids[h][hit.index];
      if (j <= i || all[j].second.hemi != all[i].second.hemi) continue;
      const double k1 = table.value(hit.cosine);
      if (k1 == 0.0) continue;
      const double k2 =
          table.value(clamped_dot(all[i].second.point.coords(), all[j].second.point.coords()));
      if (k2 == 0.0) continue;
      g.row.push_back(i);
      g.col.push_back(j);
      g.value.push_back(k1 * k2);
    }
  }
  return g;
}

// Unbiased squared MMD for the split given by in_first (size m1 + m2).
double split_statistic(const PooledGram& g, const std::vector<char>& in_first) {
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t e = 0; e < g.value.size(); ++e) {
    const bool a = in_first[g.row[e]], b = in_first[g.col[e]];
    if (a && b) saa += 2.0 * g.value[e];
    else if (!a && !b) sbb += 2.0 * g.value[e];
    else sab += g.value[e];
  }
  const double m1 = static_cast<double>(g.m1), m2 = static_cast<double>(g.m2);
  double out = -2.0 * sab / (m1 * m2);
  if (g.m1 > 1) out += saa / (m1 * (m1 - 1.0));
  if (g.m2 > 1) out += sbb / (m2 * (m2 - 1.0));
  return out;
}

std::vector<char> initial_split(const PooledGram& g) {
  std::vector<char> split(g.m1 + g.m2, 0);
  std::fill(split.begin(), split.begin() + static_cast<std::ptrdiff_t>(g.m1), 1);
  return split;
}

// Strict order on endpoint sets; the statistics run in this order so that
// swapping the arguments reproduces the same floating-point sums.
bool canonical_before(const EndpointSet& x, const EndpointSet& y) {
  if (x.size() != y.size()) return x.size() < y.size();
  const auto key = [](const EndpointPair& e) {
    const Vec3 &p = e.first.point.coords(), &q = e.second.point.coords();
    return std::array<double, 8>{double(e.first.hemi), p.x(), p.y(), p.z(),
                                 double(e.second.hemi), q.x(), q.y(), q.z()};
  };
  return std::lexicographical_compare(
      x.pairs.begin(), x.pairs.end(), y.pairs.begin(), y.pairs.end(),
      [&](const EndpointPair& a, const EndpointPair& b) { return key(a) < key(b); });
}

}  // namespace

double mmd(const EndpointSet& pts1, const EndpointSet& pts2, const MmdOptions& options) {
  if (canonical_before(pts2, pts1)) return mmd(pts2, pts1, options);
  const auto a = prepare(pts1, options, 0);
  const auto b = prepare(pts2, options, 1);
  const PooledGram g = pooled_gram(a, b, options.kernel);
  return std::sqrt(std::max(0.0, split_statistic(g, initial_split(g))));
}

MmdTest mmd_permutation_test(const EndpointSet& pts1, const EndpointSet& pts2,
                             const MmdOptions& options, int permutations) {
  if (canonical_before(pts2, pts1)) return mmd_permutation_test(pts2, pts1, options, permutations);
  const auto a = prepare(pts1, options, 0);
  const auto b = prepare(pts2, options, 1);
  const PooledGram g = pooled_gram(a, b, options.kernel);
  std::vector<char> split = initial_split(g);
  MmdTest t;
  t.statistic = split_statistic(g, split);
  std::mt19937_64 gen(options.seed ^ 0x5bd1e995ULL);
  int exceed = 0;
  for (int p = 0; p < permutations; ++p) {
    std::shuffle(split.begin(), split.end(), gen);
    t.null.push_back(split_statistic(g, split));
    if (t.null.back() >= t.statistic) ++exceed;
  }
  if (!t.null.empty()) {
    std::vector<double> sorted = t.null;
    std::sort(sorted.begin(), sorted.end());
    const auto k = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(sorted.size()))) - 1;
    t.null_q95 = sorted[std::min(k, sorted.size() - 1)];
  }
  t.p_value = (1.0 + exceed) / (1.0 + permutations);
  return t;
}

}  // namespace sphalign
