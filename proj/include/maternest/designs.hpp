#pragma once

// Point sequences on axis-aligned boxes and quasi-uniformity diagnostics.
//
// A Design is an ordered list of distinct points. Order matters: experiments
// take prefixes X_n from the front, so generators emit points coarse-to-fine.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace maternest {

struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  static Box unit(std::size_t d);
  std::size_t dim() const { return lower.size(); }
  bool contains(std::span<const double> x) const;
  /// Throws DomainError unless dimensions agree and lower < upper on every axis.
  void validate() const;
};

class Design {
 public:
  Design() = default;
  /// coords holds the points row-major, d = domain.dim() values per point.
  /// Throws DomainError for points outside the box and
  /// DegenerateDesignError for exact duplicates.
  Design(Box domain, std::vector<double> coords);

  std::size_t size() const { return d_ == 0 ? 0 : coords_.size() / d_; }
  std::size_t dim() const { return d_; }
  const Box& domain() const { return domain_; }
  std::span<const double> point(std::size_t i) const {
    return {coords_.data() + i * d_, d_};
  }
  const std::vector<double>& coords() const { return coords_; }

  /// First n points, same domain.
  Design prefix(std::size_t n) const;
  /// This design followed by the points of other (same domain).
  Design concat(const Design& other) const;

 private:
  Box domain_;
  std::size_t d_ = 0;
  std::vector<double> coords_;
};

double distance(std::span<const double> a, std::span<const double> b);

/// Tensor grid with m points per axis, box corners included. Points are
/// emitted by refinement level (the 2-per-axis grid first, then successive
/// dyadic refinements), lexicographically within a level, so the prefix
/// ending at each level is a complete coarser grid.
Design uniform_grid(const Box& box, int m_per_axis);

/// Endpoints of the interval, then the base-2 radical inverse of 1, 2, 3, ...
/// mapped affinely onto it. n points in total.
Design van_der_corput_sequence(const Box& box, std::size_t n);

/// Uniform random points with a minimum pairwise distance (0 for plain
/// i.i.d. sampling), drawn by rejection. Deterministic given the seed.
Design random_design(const Box& box, std::size_t n, std::uint64_t seed,
                     double min_distance = 0.0);

/// max over a probe grid (probe_resolution points per axis, corners
/// included) of the distance to the nearest design point. A lower bound on
/// the true fill distance that converges as the resolution grows.
/// Resolution 0 picks default_probe_resolution(d); the defaults put probes
/// on every dyadic midpoint down to spacing 1/4096 (d=1) and 1/256 (d=2).
double fill_distance(const Design& design, int probe_resolution = 0);
int default_probe_resolution(std::size_t d);

/// Half the minimal pairwise distance.
double separation_distance(const Design& design);

struct UniformityReport {
  std::size_t n = 0;
  double fill = 0.0;
  double separation = 0.0;
  double ratio_upper = 0.0;  // fill * n^{1/d}
  double mesh_ratio = 0.0;   // fill / separation
};

std::vector<UniformityReport> uniformity_report(const Design& design,
                                                const std::vector<std::size_t>& n_schedule,
                                                int probe_resolution = 0);

/// Text format: a "d n" header line, then one point per line, coordinates
/// separated by spaces at 17 significant digits, optionally followed by a
/// value column.
void write_design(std::ostream& out, const Design& design,
                  const std::vector<double>* values = nullptr);

struct DesignFile {
  Design design;
  std::optional<std::vector<double>> values;
};

/// Reads the text format. Without an explicit box the domain is the
/// bounding box of the points (widened on degenerate axes).
DesignFile read_design(std::istream& in, const std::optional<Box>& box = std::nullopt);

}  // namespace maternest
