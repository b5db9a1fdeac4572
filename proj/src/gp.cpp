#include "maternest/gp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maternest {

namespace {

using Eigen::Index;

ConditioningError pivot_error(const std::string& where, std::size_t index, double value) {
  return ConditioningError(where + ": kernel matrix is numerically singular (pivot " +
                               std::to_string(index) + " = " + std::to_string(value) + ")",
                           index, value);
}

// Left-looking unblocked factorization that stops at the first bad pivot.
PartialCholesky unblocked_partial(const Eigen::MatrixXd& K) {
  const Index n = K.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (Index j = 0; j < n; ++j) {
    const double d = K(j, j) - L.row(j).head(j).squaredNorm();
    if (!(d > 0.0) || !std::isfinite(d)) {
      return {L.topLeftCorner(j, j), static_cast<std::size_t>(j), d};
    }
    const double ljj = std::sqrt(d);
    L(j, j) = ljj;
    const Index rest = n - j - 1;
    if (rest > 0) {
      L.col(j).tail(rest) =
          (K.col(j).tail(rest) -
           L.bottomRows(rest).leftCols(j) * L.row(j).head(j).transpose()) /
          ljj;
    }
  }
  return {std::move(L), static_cast<std::size_t>(n), 0.0};
}

// Bordered growth of the factor, one point per step; shared by the
// incremental-variance and sequential-expansion routines.
template <typename Step>
void grow_factor(const Eigen::MatrixXd& K, const char* where, Step&& step) {
  const Index n = K.rows();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    Eigen::VectorXd l;
    if (i > 0) {
      l = L.topLeftCorner(i, i).triangularView<Eigen::Lower>().solve(K.col(i).head(i));
    } else {
      l.resize(0);
    }
    const double v = K(i, i) - l.squaredNorm();
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw pivot_error(where, static_cast<std::size_t>(i), v);
    }
    L.row(i).head(i) = l.transpose();
    L(i, i) = std::sqrt(v);
    step(i, l, v);
  }
}

double clamp_variance(double v, double prior, std::size_t index) {
  if (v >= 0.0) return v;
  if (v >= -1e-12 * prior) return 0.0;
  throw ConditioningError("posterior_var: negative variance " + std::to_string(v) +
                              " beyond rounding tolerance",
                          index, v);
}

}  // namespace

PartialCholesky partial_cholesky(const Eigen::MatrixXd& K) {
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd L = llt.matrixL();
    if (L.diagonal().allFinite()) return {std::move(L), static_cast<std::size_t>(K.rows()), 0.0};
  }
  return unblocked_partial(K);
}

Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& K) {
  PartialCholesky p = partial_cholesky(K);
  if (p.valid < static_cast<std::size_t>(K.rows())) {
    throw pivot_error("cholesky", p.valid, p.failed_pivot);
  }
  return std::move(p.L);
}

Posterior::Posterior(Kernel kernel, Design design, Eigen::VectorXd y)
    : kernel_(std::move(kernel)), design_(std::move(design)), y_(std::move(y)) {
  if (static_cast<std::size_t>(y_.size()) != design_.size()) {
    throw DomainError("condition: observation count does not match the design");
  }
  if (design_.size() == 0) {
    L_.resize(0, 0);
    w_.resize(0);
    return;
  }
  L_ = cholesky_factor(kernel_matrix(kernel_, design_));
  w_ = solve(y_);
}

Eigen::VectorXd Posterior::solve(const Eigen::VectorXd& b) const {
  const auto tri = L_.triangularView<Eigen::Lower>();
  Eigen::VectorXd z = tri.solve(b);
  return tri.transpose().solve(z);
}

Eigen::MatrixXd Posterior::inverse() const {
  const auto n = L_.rows();
  const Eigen::MatrixXd Linv =
      L_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  return Linv.transpose() * Linv;
}

Posterior condition(const Kernel& kernel, const Design& design, const Eigen::VectorXd& y) {
  return Posterior(kernel, design, y);
}

double posterior_mean(const Posterior& post, std::span<const double> x) {
  if (post.size() == 0) return 0.0;
  return kernel_vector(post.kernel(), post.design(), x).dot(post.weights());
}

double posterior_var(const Posterior& post, std::span<const double> x) {
  const double prior = post.kernel()(0.0);
  if (post.size() == 0) return prior;
  const Eigen::VectorXd k = kernel_vector(post.kernel(), post.design(), x);
  const Eigen::VectorXd v = post.chol().triangularView<Eigen::Lower>().solve(k);
  return clamp_variance(prior - v.squaredNorm(), prior, post.size());
}

Eigen::VectorXd posterior_mean(const Posterior& post, const Design& probes) {
  if (post.size() == 0) return Eigen::VectorXd::Zero(static_cast<Index>(probes.size()));
  return cross_kernel_matrix(post.kernel(), probes, post.design()) * post.weights();
}

Eigen::VectorXd posterior_var(const Posterior& post, const Design& probes) {
  const double prior = post.kernel()(0.0);
  const auto m = static_cast<Index>(probes.size());
  if (post.size() == 0) return Eigen::VectorXd::Constant(m, prior);
  const Eigen::MatrixXd C = cross_kernel_matrix(post.kernel(), post.design(), probes);
  const Eigen::MatrixXd V = post.chol().triangularView<Eigen::Lower>().solve(C);
  Eigen::VectorXd out(m);
  for (Index j = 0; j < m; ++j) {
    out(j) = clamp_variance(prior - V.col(j).squaredNorm(), prior, post.size());
  }
  return out;
}

Eigen::VectorXd incremental_variances(const Kernel& kernel, const Design& design) {
  const Eigen::MatrixXd K = kernel_matrix(kernel, design);
  Eigen::VectorXd out(K.rows());
  grow_factor(K, "incremental_variances",
              [&](Index i, const Eigen::VectorXd&, double v) { out(i) = v; });
  return out;
}

SequentialExpansion sequential_expansion(const Kernel& kernel, const Design& design,
                                         const Eigen::VectorXd& y) {
  if (static_cast<std::size_t>(y.size()) != design.size()) {
    throw DomainError("sequential_expansion: observation count does not match the design");
  }
  const Eigen::MatrixXd K = kernel_matrix(kernel, design);
  const Index n = K.rows();
  SequentialExpansion out{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  Eigen::VectorXd z(n);  // whitened data L^{-1} y, grown with the factor
  grow_factor(K, "sequential_expansion", [&](Index i, const Eigen::VectorXd& l, double v) {
    // mu(x_i | X_{i-1}) = l^T z_{<i}, with l = L_{i-1}^{-1} K(X_{i-1}, x_i).
    const double mean = i > 0 ? l.dot(z.head(i)) : 0.0;
    out.residuals(i) = y(i) - mean;
    out.variances(i) = v;
    z(i) = out.residuals(i) / std::sqrt(v);
  });
  return out;
}

LooResult loo(const Posterior& post) {
  if (post.size() < 2) throw DomainError("loo: need at least 2 points");
  const Eigen::VectorXd diag = post.inverse().diagonal();
  LooResult r;
  r.residuals = post.weights().cwiseQuotient(diag);
  r.variances = diag.cwiseInverse();
  return r;
}

double log_det(const Posterior& post) {
  return 2.0 * post.chol().diagonal().array().log().sum();
}

double quadratic_form(const Posterior& post) {
  if (post.size() == 0) return 0.0;
  return post.chol().triangularView<Eigen::Lower>().solve(post.y()).squaredNorm();
}

double trace_ratio(const Kernel& k0, const Kernel& k1, const Design& design) {
  if (design.size() == 0) throw DomainError("trace_ratio: empty design");
  const Eigen::MatrixXd K0 = kernel_matrix(k0, design);
  const Eigen::MatrixXd L1 = cholesky_factor(kernel_matrix(k1, design));
  // tr[K0 K1^{-1}] = tr[L1^{-1} K0 L1^{-T}]
  const Eigen::MatrixXd A = L1.triangularView<Eigen::Lower>().solve(K0);
  const Eigen::MatrixXd B = L1.triangularView<Eigen::Lower>().solve(A.transpose());
  return B.trace() / static_cast<double>(design.size());
}

PrefixFactorization::PrefixFactorization(const Kernel& kernel, const Design& design,
                                         std::size_t n_max)
    : n_max_(n_max) {
  if (n_max > design.size()) throw DomainError("prefix factorization: n exceeds the design");
  part_ = partial_cholesky(kernel_matrix(kernel, design.prefix(n_max)));
}

std::vector<std::optional<PrefixStats>> PrefixFactorization::evaluate(
    const Eigen::MatrixXd& Y, const std::vector<std::size_t>& schedule) const {
  if (!std::is_sorted(schedule.begin(), schedule.end())) {
    throw DomainError("prefix factorization: schedule must be ascending");
  }
  std::vector<std::optional<PrefixStats>> out(schedule.size());
  if (schedule.empty()) return out;
  const std::size_t top = std::min(schedule.back(), part_.valid);
  if (schedule.back() > n_max_) throw DomainError("prefix factorization: schedule exceeds n_max");
  if (static_cast<std::size_t>(Y.rows()) < top) {
    throw DomainError("prefix factorization: data has fewer rows than the schedule needs");
  }
  const auto N = static_cast<Index>(top);
  const Index S = Y.cols();
  if (N == 0) return out;

  const Eigen::MatrixXd& L = part_.L;
  const auto tri = L.topLeftCorner(N, N).triangularView<Eigen::Lower>();
  // Column k of LinvT is row k of L^{-1}: the coefficients of K_n^{-1} that
  // get added when the prefix grows past point k.
  const Eigen::MatrixXd LinvT =
      tri.solve(Eigen::MatrixXd::Identity(N, N)).transpose();
  const Eigen::MatrixXd Z = tri.solve(Y.topRows(N));

  Eigen::VectorXd inv_diag = Eigen::VectorXd::Zero(N);  // (K_n^{-1})_ii
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(N, S);      // (K_n^{-1} Y)_i
  Eigen::VectorXd quad = Eigen::VectorXd::Zero(S);
  double log_det = 0.0;
  std::size_t next = 0;
  while (next < schedule.size() && schedule[next] == 0) ++next;

  for (Index k = 0; k < N && next < schedule.size(); ++k) {
    const auto col = LinvT.col(k).head(k + 1);
    inv_diag.head(k + 1) += col.cwiseAbs2();
    W.topRows(k + 1).noalias() += col * Z.row(k);
    quad += Z.row(k).transpose().cwiseAbs2();
    log_det += 2.0 * std::log(L(k, k));

    const auto n = static_cast<std::size_t>(k + 1);
    while (next < schedule.size() && schedule[next] == n) {
      PrefixStats s;
      s.n = n;
      s.log_det = log_det;
      s.quad = quad;
      s.last_incremental_var = L(k, k) * L(k, k);
      const auto d = inv_diag.head(k + 1).array();
      s.cv_log_var = -d.log().sum();
      s.max_loo_var = 1.0 / d.minCoeff();
      s.cv_data.resize(S);
      for (Index c = 0; c < S; ++c) {
        s.cv_data(c) = (W.col(c).head(k + 1).array().square() / d).sum();
      }
      out[next] = std::move(s);
      ++next;
    }
  }
  return out;
}

}  // namespace maternest
