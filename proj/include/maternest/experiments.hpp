#pragma once

// Experiment drivers behind the command-line tool. Each driver takes a flat
// configuration, returns structured results plus a CSV table, and lists the
// checks it asserts.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "maternest/analysis.hpp"
#include "maternest/designs.hpp"
#include "maternest/estimators.hpp"

namespace maternest::experiments {

/// Thrown for malformed or inconsistent configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key=value settings. Lines starting with '#' are comments.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::istream& in);

struct ExperimentConfig {
  std::string experiment;
  std::size_t d = 1;
  std::string design = "vdc";  // vdc | grid | random
  std::optional<double> nu0;
  std::vector<std::size_t> schedule;
  std::vector<std::uint64_t> seeds;
  EstimatorConfig estimator;
  std::string output_path;

  // Experiment-specific settings.
  std::vector<double> nu_list;  // kernels or model orders under study
  double lambda = 1.0;
  double sigma = 1.0;
  std::string test_function;  // empty: a Matérn-nu0 draw
  std::size_t probes = 1000;
  double lambda_min = 0.05;
  double lambda_max = 2.0;
  std::size_t tail_count = 3;
  double slack = 0.1;
  std::size_t min_pass_seeds = 8;
  double slope_tol = 0.3;
  bool inject_fault = false;
  // verify-identities: the leave-one-out check runs on its own grid.
  std::vector<std::size_t> loo_schedule;
  std::vector<double> loo_nu_list;

  void validate() const;
};

/// Built-in defaults for a command (also shipped under configs/).
ExperimentConfig default_config(const std::string& experiment, std::size_t d = 1);
/// Applies keys on top of cfg; unknown keys or bad values throw ConfigError.
void apply_key_values(ExperimentConfig& cfg, const KeyValues& kv);

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Decimal text at 17 significant digits; NaN prints as "nan".
std::string fmt(double v);
/// CSV with fields quoted only when they contain a comma or quote.
void write_csv(std::ostream& out, const Table& t);

struct Outcome {
  Table table;
  std::vector<std::string> summary;
  std::vector<Check> checks;
  bool passed() const;
};

// --- verify-identities -------------------------------------------------

struct IdentityCase {
  std::string identity;  // logdet | expansion | loo | min_norm | error_bound
  std::size_t d = 1;
  std::string design;  // quasi | random
  std::size_t n = 0;
  double nu = 0.0;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string note;
};

struct IdentityReport {
  std::vector<IdentityCase> cases;
  std::map<std::string, double> max_residual;
  bool passed() const;
};

IdentityReport verify_identities(const ExperimentConfig& cfg);

// --- variance-decay ------------------------------------------------------

struct DecaySeries {
  double nu = 0.0;
  std::vector<std::size_t> ns;
  std::vector<double> max_loo_var;
  std::vector<double> sequential_var;
  RateFit fit;
  double expected_slope = 0.0;
  std::vector<std::string> notes;
};

std::vector<DecaySeries> variance_decay(const ExperimentConfig& cfg);

// --- non-undersmoothing ----------------------------------------------------

struct SweepRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  double fill = 0.0;
  double nu_hat_ml = 0.0;
  double nu_hat_cv = 0.0;
  double ell_ml_min = 0.0;
  double ell_cv_min = 0.0;
  std::optional<double> max_loo_var_ratio;
  bool hit_upper_ml = false;
  bool hit_upper_cv = false;
  double effective_nu_max = 0.0;
  std::string notes;
};

struct NonUndersmoothingResult {
  std::vector<SweepRecord> records;
  /// Per seed, the minimum estimate over the last tail_count records.
  std::vector<double> tail_min_ml;
  std::vector<double> tail_min_cv;
  bool degenerate = false;
};

NonUndersmoothingResult non_undersmoothing(const ExperimentConfig& cfg);

// --- logdet-growth ---------------------------------------------------------

struct LogdetRow {
  double nu = 0.0;
  std::size_t n = 0;
  double log_det = 0.0;
  double trend = 0.0;  // -(2 nu / d) n ln n
  double nu_hat_ml = 0.0;  // median over seeds of the nu0 draws
};

struct LogdetResult {
  std::vector<LogdetRow> rows;
  double median_tail_nu_hat = 0.0;
  double conjectured_limit = 0.0;  // nu0 + d/2
  std::vector<std::string> notes;
};

LogdetResult logdet_growth(const ExperimentConfig& cfg);

// --- convergence ------------------------------------------------------------

struct ConvergenceSeries {
  double nu_model = 0.0;
  std::vector<std::size_t> ns;
  std::vector<double> sup_error;  // median over seeds
  std::vector<double> sd_ratio;   // median over seeds of max |err| / sqrt(V)
  RateFit fit;
  std::vector<std::string> notes;
};

std::vector<ConvergenceSeries> convergence(const ExperimentConfig& cfg);

// --- gaussian-scale-probe ---------------------------------------------------

struct ScaleProbeRow {
  std::size_t n = 0;
  std::optional<double> lambda_ml;
  std::optional<double> lambda_cv;
  bool truncated_ml = false;
  bool degenerate = false;
  std::string notes;
};

std::vector<ScaleProbeRow> gaussian_scale_probe(const ExperimentConfig& cfg);

/// Runs the named command and renders table, summary and checks.
Outcome run(const ExperimentConfig& cfg);

/// Shared by several commands: the design named in cfg with at least n points.
Design make_design(const ExperimentConfig& cfg, std::size_t n);

}  // namespace maternest::experiments
