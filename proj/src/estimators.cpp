#include "maternest/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <utility>
#include <numbers>

#include "maternest/errors.hpp"
#include "maternest/gp.hpp"
#include "maternest/parallel.hpp"

namespace maternest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Raw terms of one (theta, n, y) cell before sigma handling.
struct Terms {
  std::size_t n = 0;
  double quad = 0.0;
  double log_det = 0.0;
  double cv_data = 0.0;
  double cv_log_var = 0.0;
};

struct Assembled {
  ObjectiveValue value;
  double sigma_sq = 1.0;
  bool degenerate = false;
};

Assembled assemble(const Terms& t, Objective objective, bool profile) {
  Assembled a;
  const auto n = static_cast<double>(t.n);
  double s2 = 1.0;
  if (profile) {
    s2 = t.quad / n;
    if (!(s2 > 0.0)) {
      a.degenerate = true;
      s2 = 1.0;
    }
  }
  a.sigma_sq = s2;
  const double shift = n * std::log(s2);
  if (objective == Objective::ML) {
    a.value = ObjectiveValue::from_terms(t.quad / s2, t.log_det + shift);
  } else {
    a.value = ObjectiveValue::from_terms(t.cv_data / s2, t.cv_log_var + shift);
  }
  return a;
}

Terms direct_terms(const Kernel& k, const Design& design, const Eigen::VectorXd& y,
                   Objective objective) {
  const Posterior post = condition(k, design, y);
  Terms t;
  t.n = design.size();
  t.quad = quadratic_form(post);
  t.log_det = log_det(post);
  if (objective == Objective::CV) {
    const LooResult r = loo(post);
    t.cv_data = (r.residuals.array().square() / r.variances.array()).sum();
    t.cv_log_var = r.variances.array().log().sum();
  }
  return t;
}

struct Cell {
  bool ok = false;
  Assembled a;
};

using CellMap = std::map<double, Cell>;

// Single-point evaluator; false on a conditioning failure.
using PointEval = std::function<bool(double theta, Cell& out, std::string& reason)>;

struct SearchState {
  CellMap cells;
  std::vector<EstimateFailure> failures;
  std::size_t evaluations = 0;
};

bool evaluate_into(SearchState& st, const PointEval& eval, double theta) {
  auto it = st.cells.find(theta);
  if (it != st.cells.end()) return it->second.ok;
  Cell c;
  std::string reason;
  ++st.evaluations;
  const bool ok = eval(theta, c, reason);
  c.ok = ok;
  if (!ok) st.failures.push_back({theta, reason});
  st.cells.emplace(theta, c);
  return ok;
}

double cell_value(const CellMap& cells, double theta) {
  const auto it = cells.find(theta);
  return (it != cells.end() && it->second.ok) ? it->second.a.value.total : kInf;
}

// Shrinks [ok, fail] to width <= tol around the conditioning boundary.
// Returns the largest value seen to factorize.
double bisect_boundary(double ok, double fail, double tol,
                       const std::function<bool(double)>& conditions) {
  while (fail - ok > tol) {
    const double mid = 0.5 * (ok + fail);
    if (conditions(mid)) {
      ok = mid;
    } else {
      fail = mid;
    }
  }
  return ok;
}

// Effective bracket from the coarse cells: everything up to the first
// failing cell above the lowest successful one.
struct Bracket {
  double effective_hi = 0.0;
  bool truncated = false;
  std::optional<double> first_fail;
  double last_ok = 0.0;
};

Bracket coarse_bracket(const std::vector<double>& grid, const CellMap& cells) {
  Bracket b;
  bool seen_ok = false;
  for (double theta : grid) {
    const bool ok = cells.at(theta).ok;
    if (ok) {
      seen_ok = true;
      b.last_ok = theta;
      continue;
    }
    if (seen_ok) {
      b.first_fail = theta;
      b.truncated = true;
      break;
    }
  }
  b.effective_hi = b.last_ok;
  if (!b.truncated) b.effective_hi = grid.back();
  return b;
}

// Best successful cell at or below hi; ties go to the larger theta.
std::optional<double> best_theta(const CellMap& cells, double hi) {
  std::optional<double> best;
  double best_v = kInf;
  for (const auto& [theta, c] : cells) {
    if (theta > hi || !c.ok) continue;
    if (c.a.value.total <= best_v) {
      best_v = c.a.value.total;
      best = theta;
    }
  }
  return best;
}

// Returns the final interval.
std::pair<double, double> golden_section(SearchState& st, const PointEval& eval, double a,
                                         double b, double tol) {
  const double inv_phi = 1.0 / std::numbers::phi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  evaluate_into(st, eval, c);
  evaluate_into(st, eval, d);
  while (b - a > tol) {
    // Strict < keeps the upper interval on ties, toward larger theta.
    if (cell_value(st.cells, c) < cell_value(st.cells, d)) {
      b = d;
      d = c;
      c = b - inv_phi * (b - a);
      evaluate_into(st, eval, c);
    } else {
      a = c;
      c = d;
      d = a + inv_phi * (b - a);
      evaluate_into(st, eval, d);
    }
  }
  return {a, b};
}

// Shared tail of every search: truncation, refinement, result packaging.
NuEstimate finish_search(SearchState& st, const std::vector<double>& grid,
                         const PointEval& eval, const std::function<bool(double)>& conditions,
                         double tol, bool degenerate) {
  Bracket br = coarse_bracket(grid, st.cells);
  if (br.truncated) {
    br.effective_hi = bisect_boundary(br.last_ok, *br.first_fail, tol, conditions);
    if (br.effective_hi > br.last_ok) evaluate_into(st, eval, br.effective_hi);
  }

  std::vector<double> usable;
  for (const auto& [theta, c] : st.cells) {
    if (c.ok && theta <= br.effective_hi) usable.push_back(theta);
  }
  if (usable.empty()) {
    throw EstimationError("estimate: no candidate in the bracket could be conditioned");
  }

  const double coarse_best = *best_theta(st.cells, br.effective_hi);
  const auto pos = static_cast<std::size_t>(
      std::lower_bound(usable.begin(), usable.end(), coarse_best) - usable.begin());
  bool non_unimodal = false;
  if (usable.size() > 1) {
    const double left = pos > 0 ? usable[pos - 1] : usable[pos];
    const double right = pos + 1 < usable.size() ? usable[pos + 1] : usable[pos];
    if (right - left > tol) {
      const auto [a, b] = golden_section(st, eval, left, right, tol);
      // Around an interior coarse minimum the refinement should settle
      // strictly inside the triple; ending on either end means the
      // objective is not unimodal there.
      const bool interior = pos > 0 && pos + 1 < usable.size();
      non_unimodal = interior && (a - left <= tol || right - b <= tol);
    }
  }

  NuEstimate est;
  const double theta_hat = *best_theta(st.cells, br.effective_hi);
  const Cell& best = st.cells.at(theta_hat);
  est.nu_hat = theta_hat;
  est.objective_at_min = best.a.value.total;
  est.decomposition = best.a.value;
  est.sigma_sq = best.a.sigma_sq;
  est.degenerate = degenerate || best.a.degenerate;
  est.effective_nu_max = br.effective_hi;
  est.bracket_truncated = br.truncated;
  est.hit_upper_bracket = theta_hat >= br.effective_hi - tol;
  est.non_unimodal = non_unimodal;
  est.evaluations = st.evaluations;
  est.failures = st.failures;
  return est;
}

void check_search(const ScalarSearch& s) {
  if (!(s.lo > 0.0) || !(s.hi >= s.lo) || !std::isfinite(s.hi)) {
    throw DomainError("estimate: bracket must satisfy 0 < lo <= hi");
  }
  if (!(s.refine_tol > 0.0)) throw DomainError("estimate: refine_tol must be positive");
  if (s.hi > s.lo && s.coarse_grid < 2) throw DomainError("estimate: coarse grid too small");
}

ScalarSearch search_from(const EstimatorConfig& c) {
  ScalarSearch s;
  s.lo = c.nu_min;
  s.hi = c.nu_max;
  s.coarse_grid = c.coarse_grid;
  s.refine_tol = c.refine_tol;
  s.objective = c.objective;
  s.profile_sigma = c.sigma_mode == SigmaMode::ProfiledPerNu;
  s.threads = c.threads;
  return s;
}

KernelFamily matern_family(const EstimatorConfig& c, std::size_t d) {
  MaternParams base;
  base.sigma = c.sigma_mode == SigmaMode::ProfiledPerNu ? 1.0 : c.sigma_fixed;
  base.lambda = c.lambda_fixed;
  base.scaling = c.scaling.value_or(ScalingPolicy::clamped(d));
  return [base](double nu) {
    MaternParams p = base;
    p.nu = nu;
    return Kernel::matern(p);
  };
}

}  // namespace

std::vector<double> log_grid(double lo, double hi, int count) {
  if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw DomainError("log_grid: bad arguments");
  std::vector<double> g(static_cast<std::size_t>(count));
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
  g.front() = lo;
  g.back() = hi;
  return g;
}

void EstimatorConfig::validate() const {
  if (!(nu_min > 0.0) || !(nu_min < nu_max) || !std::isfinite(nu_max)) {
    throw DomainError("estimator: need 0 < nu_min < nu_max");
  }
  if (coarse_grid < 8) throw DomainError("estimator: coarse_grid must be at least 8");
  if (!(refine_tol > 0.0)) throw DomainError("estimator: refine_tol must be positive");
  if (sigma_mode == SigmaMode::Fixed && !(sigma_fixed > 0.0)) {
    throw DomainError("estimator: sigma_fixed must be positive");
  }
  if (!(lambda_fixed > 0.0)) throw DomainError("estimator: lambda_fixed must be positive");
}

NuEstimate estimate_parameter(const KernelFamily& family, const Design& design,
                              const Eigen::VectorXd& y, const ScalarSearch& search) {
  check_search(search);
  const std::size_t n = design.size();
  if (static_cast<std::size_t>(y.size()) != n) {
    throw DomainError("estimate: observation count does not match the design");
  }
  if (n < 1 || (search.objective == Objective::CV && n < 2)) {
    throw DomainError(std::string("estimate: too few points for ") + to_string(search.objective));
  }
  const bool degenerate = y.squaredNorm() == 0.0;

  const PointEval eval = [&](double theta, Cell& out, std::string& reason) {
    try {
      out.a = assemble(direct_terms(family(theta), design, y, search.objective), search.objective,
                       search.profile_sigma);
      return true;
    } catch (const ConditioningError& e) {
      reason = e.what();
      return false;
    }
  };
  const auto conditions = [&](double theta) {
    try {
      (void)cholesky_factor(kernel_matrix(family(theta), design));
      return true;
    } catch (const ConditioningError&) {
      return false;
    }
  };

  const std::vector<double> grid =
      search.hi > search.lo ? log_grid(search.lo, search.hi, search.coarse_grid)
                            : std::vector<double>{search.lo};
  SearchState st;
  std::vector<Cell> coarse(grid.size());
  std::vector<std::string> reasons(grid.size());
  std::vector<char> oks(grid.size());
  parallel_for(grid.size(), search.threads, [&](std::size_t i) {
    oks[i] = eval(grid[i], coarse[i], reasons[i]) ? 1 : 0;
    coarse[i].ok = oks[i] != 0;
  });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ++st.evaluations;
    if (!oks[i]) st.failures.push_back({grid[i], reasons[i]});
    st.cells.emplace(grid[i], coarse[i]);
  }
  return finish_search(st, grid, eval, conditions, search.refine_tol, degenerate);
}

NuEstimate estimate_nu(const Design& design, const Eigen::VectorXd& y,
                       const EstimatorConfig& config) {
  config.validate();
  return estimate_parameter(matern_family(config, design.dim()), design, y,
                            search_from(config));
}

SigmaProfile profile_sigma(double nu, double lambda, const Design& design,
                           const Eigen::VectorXd& y, std::optional<ScalingPolicy> scaling) {
  if (design.size() == 0) throw DomainError("profile_sigma: empty design");
  MaternParams p;
  p.nu = nu;
  p.sigma = 1.0;
  p.lambda = lambda;
  p.scaling = scaling.value_or(ScalingPolicy::clamped(design.dim()));
  const Posterior post = condition(Kernel::matern(p), design, y);
  SigmaProfile s;
  s.sigma_sq = quadratic_form(post) / static_cast<double>(design.size());
  s.degenerate = !(s.sigma_sq > 0.0);
  return s;
}

std::vector<std::vector<PrefixEstimate>> sweep_prefixes(const Design& design,
                                                        const Eigen::MatrixXd& Y,
                                                        const std::vector<std::size_t>& n_schedule,
                                                        const EstimatorConfig& config,
                                                        const std::vector<Objective>& objectives) {
  config.validate();
  if (n_schedule.empty()) return std::vector<std::vector<PrefixEstimate>>(static_cast<std::size_t>(Y.cols()));
  if (!std::is_sorted(n_schedule.begin(), n_schedule.end()) || n_schedule.front() == 0) {
    throw DomainError("sweep_prefixes: schedule must be ascending and positive");
  }
  const std::size_t n_max = n_schedule.back();
  if (n_max > design.size() || static_cast<std::size_t>(Y.rows()) < n_max) {
    throw DomainError("sweep_prefixes: schedule exceeds the design or the data");
  }
  const auto S = static_cast<std::size_t>(Y.cols());
  const std::size_t K = n_schedule.size();
  const KernelFamily family = matern_family(config, design.dim());
  const bool profile = config.sigma_mode == SigmaMode::ProfiledPerNu;
  const std::vector<double> grid = log_grid(config.nu_min, config.nu_max, config.coarse_grid);

  // Coarse grid: one factorization per nu serves every prefix and column.
  std::vector<std::vector<std::optional<PrefixStats>>> coarse(grid.size());
  std::vector<std::string> coarse_reason(grid.size());
  parallel_for(grid.size(), config.threads, [&](std::size_t j) {
    const PrefixFactorization f(family(grid[j]), design, n_max);
    coarse[j] = f.evaluate(Y, n_schedule);
    if (f.valid() < n_max) {
      coarse_reason[j] = "kernel matrix is numerically singular (pivot " +
                         std::to_string(f.valid()) + " = " + std::to_string(f.failed_pivot()) + ")";
    }
  });

  auto terms_of = [](const PrefixStats& st, std::size_t col) {
    Terms t;
    t.n = st.n;
    t.quad = st.quad(static_cast<Eigen::Index>(col));
    t.log_det = st.log_det;
    t.cv_data = st.cv_data(static_cast<Eigen::Index>(col));
    t.cv_log_var = st.cv_log_var;
    return t;
  };

  std::vector<std::vector<PrefixEstimate>> out(S, std::vector<PrefixEstimate>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t n = n_schedule[k];
    const Design prefix = design.prefix(n);
    const double fill = fill_distance(prefix);

    // Conditioning boundary for this prefix, shared by all columns and
    // both objectives.
    std::map<double, std::optional<PrefixStats>> extra;
    const auto conditions = [&](double theta) {
      auto it = extra.find(theta);
      if (it == extra.end()) {
        const PrefixFactorization f(family(theta), design, n);
        it = extra.emplace(theta, f.evaluate(Y, {n})[0]).first;
      }
      return it->second.has_value();
    };

    parallel_for(S, 1, [&](std::size_t s) {
      PrefixEstimate& pe = out[s][k];
      pe.n = n;
      pe.fill = fill;
      const Eigen::VectorXd y = Y.col(static_cast<Eigen::Index>(s)).head(static_cast<Eigen::Index>(n));
      const bool degenerate = y.squaredNorm() == 0.0;
      for (Objective obj : objectives) {
        if (obj == Objective::CV && n < 2) continue;
        SearchState st;
        for (std::size_t j = 0; j < grid.size(); ++j) {
          Cell c;
          c.ok = coarse[j][k].has_value();
          if (c.ok) {
            c.a = assemble(terms_of(*coarse[j][k], s), obj, profile);
          } else {
            st.failures.push_back({grid[j], coarse_reason[j]});
          }
          ++st.evaluations;
          st.cells.emplace(grid[j], c);
        }
        const PointEval eval = [&](double theta, Cell& c, std::string& reason) {
          auto it = extra.find(theta);
          if (it != extra.end()) {
            if (!it->second) {
              reason = "kernel matrix is numerically singular";
              return false;
            }
            c.a = assemble(terms_of(*it->second, s), obj, profile);
            return true;
          }
          try {
            c.a = assemble(direct_terms(family(theta), prefix, y, obj), obj, profile);
            return true;
          } catch (const ConditioningError& e) {
            reason = e.what();
            return false;
          }
        };
        try {
          NuEstimate est =
              finish_search(st, grid, eval, conditions, config.refine_tol, degenerate);
          (obj == Objective::ML ? pe.ml : pe.cv) = std::move(est);
        } catch (const EstimationError& e) {
          pe.notes += std::string(to_string(obj)) + ": " + e.what() + "; ";
        }
      }
    });
  }
  return out;
}

std::vector<PrefixEstimate> sweep_prefixes(const Design& design, const Eigen::VectorXd& y,
                                           const std::vector<std::size_t>& n_schedule,
                                           const EstimatorConfig& config,
                                           const std::vector<Objective>& objectives) {
  return sweep_prefixes(design, Eigen::MatrixXd(y), n_schedule, config, objectives).front();
}

}  // namespace maternest
