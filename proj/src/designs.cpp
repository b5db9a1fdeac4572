#include "maternest/designs.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "maternest/errors.hpp"

namespace maternest {

Box Box::unit(std::size_t d) {
  return Box{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
}

bool Box::contains(std::span<const double> x) const {
  if (x.size() != dim()) return false;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] >= lower[k] && x[k] <= upper[k])) return false;
  }
  return true;
}

void Box::validate() const {
  if (lower.empty() || lower.size() != upper.size()) {
    throw DomainError("box: corner dimensions must agree and be at least 1");
  }
  for (std::size_t k = 0; k < lower.size(); ++k) {
    if (!std::isfinite(lower[k]) || !std::isfinite(upper[k]) || !(lower[k] < upper[k])) {
      throw DomainError("box: degenerate extent on axis " + std::to_string(k));
    }
  }
}

Design::Design(Box domain, std::vector<double> coords)
    : domain_(std::move(domain)), d_(domain_.dim()), coords_(std::move(coords)) {
  domain_.validate();
  if (coords_.size() % d_ != 0) {
    throw DomainError("design: coordinate count is not a multiple of the dimension");
  }
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    if (!domain_.contains(point(i))) {
      throw DomainError("design: point " + std::to_string(i) + " lies outside the box");
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    const auto pa = point(a);
    const auto pb = point(b);
    return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
  };
  std::sort(order.begin(), order.end(), less);
  for (std::size_t k = 1; k < n; ++k) {
    const auto pa = point(order[k - 1]);
    const auto pb = point(order[k]);
    if (std::equal(pa.begin(), pa.end(), pb.begin())) {
      throw DegenerateDesignError("design: points " + std::to_string(order[k - 1]) +
                                  " and " + std::to_string(order[k]) + " coincide");
    }
  }
}

Design Design::prefix(std::size_t n) const {
  if (n > size()) throw DomainError("design: prefix longer than the design");
  Design out;
  out.domain_ = domain_;
  out.d_ = d_;
  out.coords_.assign(coords_.begin(), coords_.begin() + static_cast<std::ptrdiff_t>(n * d_));
  return out;
}

Design Design::concat(const Design& other) const {
  if (other.dim() != d_) throw DomainError("design: dimension mismatch in concat");
  std::vector<double> all = coords_;
  all.insert(all.end(), other.coords_.begin(), other.coords_.end());
  return Design(domain_, std::move(all));
}

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double t = a[k] - b[k];
    s += t * t;
  }
  return std::sqrt(s);
}

namespace {

// Refinement level of each grid index: the smallest l such that the index
// is round(i (m-1) / 2^l) for some i.
std::vector<int> grid_levels(int m) {
  std::vector<int> level(m, -1);
  for (int l = 0;; ++l) {
    const long long parts = 1LL << l;
    for (long long i = 0; i <= parts; ++i) {
      const auto j = static_cast<int>(std::llround(static_cast<double>(i) * (m - 1) /
                                                   static_cast<double>(parts)));
      if (level[j] < 0) level[j] = l;
    }
    if (parts >= m - 1) break;
  }
  return level;
}

double radical_inverse_base2(std::uint64_t i) {
  double result = 0.0;
  double f = 0.5;
  while (i != 0) {
    if (i & 1U) result += f;
    i >>= 1U;
    f *= 0.5;
  }
  return result;
}

}  // namespace

Design uniform_grid(const Box& box, int m_per_axis) {
  box.validate();
  if (m_per_axis < 2) throw DomainError("uniform_grid: need at least 2 points per axis");
  const std::size_t d = box.dim();
  const auto m = static_cast<std::size_t>(m_per_axis);
  const std::vector<int> level = grid_levels(m_per_axis);

  std::size_t total = 1;
  for (std::size_t k = 0; k < d; ++k) total *= m;

  struct Entry {
    int level;
    std::vector<int> idx;
  };
  std::vector<Entry> entries;
  entries.reserve(total);
  std::vector<int> idx(d, 0);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rem = c;
    for (std::size_t k = d; k-- > 0;) {
      idx[k] = static_cast<int>(rem % m);
      rem /= m;
    }
    int lv = 0;
    for (int j : idx) lv = std::max(lv, level[j]);
    entries.push_back({lv, idx});
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const Entry& a, const Entry& b) { return a.level < b.level; });
  std::vector<double> coords;
  coords.reserve(total * d);
  for (const auto& e : entries) {
    for (std::size_t k = 0; k < d; ++k) {
      const double t = static_cast<double>(e.idx[k]) / static_cast<double>(m - 1);
      coords.push_back(e.idx[k] == m_per_axis - 1
                           ? box.upper[k]
                           : box.lower[k] + t * (box.upper[k] - box.lower[k]));
    }
  }
  return Design(box, std::move(coords));
}

Design van_der_corput_sequence(const Box& box, std::size_t n) {
  box.validate();
  if (box.dim() != 1) throw DomainError("van_der_corput_sequence: box must be an interval");
  if (n == 0) throw DomainError("van_der_corput_sequence: n must be positive");
  const double lo = box.lower[0];
  const double hi = box.upper[0];
  std::vector<double> coords;
  coords.reserve(n);
  coords.push_back(lo);
  if (n > 1) coords.push_back(hi);
  for (std::uint64_t i = 1; coords.size() < n; ++i) {
    coords.push_back(lo + radical_inverse_base2(i) * (hi - lo));
  }
  return Design(box, std::move(coords));
}

Design random_design(const Box& box, std::size_t n, std::uint64_t seed,
                     double min_distance) {
  box.validate();
  const std::size_t d = box.dim();
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> coords;
  coords.reserve(n * d);
  std::vector<double> x(d);
  const std::size_t max_attempts = 100000 + 1000 * n;
  std::size_t attempts = 0;
  while (coords.size() < n * d) {
    if (++attempts > max_attempts) {
      throw DomainError("random_design: cannot place " + std::to_string(n) +
                        " points at minimum distance " + std::to_string(min_distance));
    }
    for (std::size_t k = 0; k < d; ++k) {
      x[k] = box.lower[k] + unif(gen) * (box.upper[k] - box.lower[k]);
    }
    bool ok = true;
    for (std::size_t j = 0; ok && j < coords.size() / d; ++j) {
      const double r = distance(x, std::span<const double>(coords.data() + j * d, d));
      ok = r > min_distance && r > 0.0;
    }
    if (ok) coords.insert(coords.end(), x.begin(), x.end());
  }
  return Design(box, std::move(coords));
}

int default_probe_resolution(std::size_t d) {
  if (d == 1) return 4097;
  if (d == 2) return 257;
  return 65;
}

double fill_distance(const Design& design, int probe_resolution) {
  const std::size_t n = design.size();
  if (n == 0) throw DomainError("fill_distance: empty design");
  if (probe_resolution == 0) probe_resolution = default_probe_resolution(design.dim());
  if (probe_resolution < 64) throw DomainError("fill_distance: probe resolution below 64");
  const Box& box = design.domain();
  const std::size_t d = design.dim();
  const auto res = static_cast<std::size_t>(probe_resolution);
  auto probe_coord = [&](std::size_t k, std::size_t i) {
    if (i + 1 == res) return box.upper[k];
    return box.lower[k] +
           (box.upper[k] - box.lower[k]) * static_cast<double>(i) / static_cast<double>(res - 1);
  };

  double worst = 0.0;
  if (d == 1) {
    std::vector<double> xs(design.coords());
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i < res; ++i) {
      const double p = probe_coord(0, i);
      const auto it = std::lower_bound(xs.begin(), xs.end(), p);
      double best = std::numeric_limits<double>::infinity();
      if (it != xs.end()) best = *it - p;
      if (it != xs.begin()) best = std::min(best, p - *(it - 1));
      worst = std::max(worst, best);
    }
    return worst;
  }

  std::size_t total = 1;
  for (std::size_t k = 0; k < d; ++k) total *= res;
  std::vector<double> p(d);
  for (std::size_t c = 0; c < total; ++c) {
    std::size_t rem = c;
    for (std::size_t k = 0; k < d; ++k) {
      p[k] = probe_coord(k, rem % res);
      rem /= res;
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n && best > worst; ++i) {
      best = std::min(best, distance(p, design.point(i)));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

double separation_distance(const Design& design) {
  const std::size_t n = design.size();
  if (n < 2) throw DomainError("separation_distance: need at least 2 points");
  double best = std::numeric_limits<double>::infinity();
  if (design.dim() == 1) {
    std::vector<double> xs(design.coords());
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < n; ++i) best = std::min(best, xs[i] - xs[i - 1]);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        best = std::min(best, distance(design.point(i), design.point(j)));
      }
    }
  }
  return 0.5 * best;
}

std::vector<UniformityReport> uniformity_report(const Design& design,
                                                const std::vector<std::size_t>& n_schedule,
                                                int probe_resolution) {
  if (!std::is_sorted(n_schedule.begin(), n_schedule.end())) {
    throw DomainError("uniformity_report: schedule must be ascending");
  }
  std::vector<UniformityReport> out;
  out.reserve(n_schedule.size());
  for (std::size_t n : n_schedule) {
    if (n > design.size()) throw DomainError("uniformity_report: schedule exceeds design size");
    const Design p = design.prefix(n);
    UniformityReport r;
    r.n = n;
    r.fill = fill_distance(p, probe_resolution);
    r.separation = separation_distance(p);
    r.ratio_upper = r.fill * std::pow(static_cast<double>(n), 1.0 / static_cast<double>(design.dim()));
    r.mesh_ratio = r.fill / r.separation;
    out.push_back(r);
  }
  return out;
}

void write_design(std::ostream& out, const Design& design, const std::vector<double>* values) {
  if (values != nullptr && values->size() != design.size()) {
    throw DomainError("write_design: value count does not match the design");
  }
  const auto old_prec = out.precision(17);
  out << design.dim() << ' ' << design.size() << '\n';
  for (std::size_t i = 0; i < design.size(); ++i) {
    const auto p = design.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (k > 0) out << ' ';
      out << p[k];
    }
    if (values != nullptr) out << ' ' << (*values)[i];
    out << '\n';
  }
  out.precision(old_prec);
}

DesignFile read_design(std::istream& in, const std::optional<Box>& box) {
  std::string line;
  std::size_t d = 0;
  std::size_t n = 0;
  if (!std::getline(in, line)) throw DomainError("read_design: missing header");
  {
    std::istringstream hs(line);
    if (!(hs >> d >> n) || d == 0) throw DomainError("read_design: malformed header");
  }
  std::vector<double> coords;
  coords.reserve(n * d);
  std::vector<double> values;
  bool has_values = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw DomainError("read_design: truncated point list");
    std::istringstream ls(line);
    std::vector<double> row;
    double v = 0.0;
    while (ls >> v) row.push_back(v);
    if (i == 0) has_values = row.size() == d + 1;
    if (row.size() != d + (has_values ? 1 : 0)) {
      throw DomainError("read_design: wrong column count on point " + std::to_string(i));
    }
    coords.insert(coords.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(d));
    if (has_values) values.push_back(row.back());
  }
  Box domain;
  if (box) {
    domain = *box;
  } else {
    domain.lower.assign(d, std::numeric_limits<double>::infinity());
    domain.upper.assign(d, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < d; ++k) {
        domain.lower[k] = std::min(domain.lower[k], coords[i * d + k]);
        domain.upper[k] = std::max(domain.upper[k], coords[i * d + k]);
      }
    }
    for (std::size_t k = 0; k < d; ++k) {
      if (!(domain.lower[k] < domain.upper[k])) {
        const double c = n == 0 ? 0.0 : domain.lower[k];
        domain.lower[k] = c - 0.5;
        domain.upper[k] = c + 0.5;
      }
    }
  }
  DesignFile f{Design(std::move(domain), std::move(coords)), std::nullopt};
  if (has_values) f.values = std::move(values);
  return f;
}

}  // namespace maternest
