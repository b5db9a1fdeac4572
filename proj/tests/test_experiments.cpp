#include <algorithm>
#include <sstream>
#include <string>

#include "doctest.h"
#include "maternest/experiments.hpp"

using namespace maternest;
using namespace maternest::experiments;

namespace {

KeyValues parse(const std::string& text) {
  std::istringstream in(text);
  return parse_key_values(in);
}

ExperimentConfig small_verify() {
  ExperimentConfig c = default_config("verify-identities");
  c.schedule = {1, 2, 8};
  c.nu_list = {0.5, 2.5};
  c.loo_schedule = {8};
  c.loo_nu_list = {0.5};
  return c;
}

}  // namespace

TEST_CASE("key=value parsing") {
  const KeyValues kv = parse("# comment\n  d = 2 \n\nschedule=4,9, 16\n");
  CHECK(kv.at("d") == "2");
  CHECK(kv.at("schedule") == "4,9, 16");
  CHECK_THROWS_AS(parse("no equals sign\n"), ConfigError);
}

TEST_CASE("apply_key_values") {
  ExperimentConfig c = default_config("non-undersmoothing");
  apply_key_values(c, parse("schedule=16,32,64\nseeds=3,4\nnu0=2\nobjective=cv\nnu_max=9\n"));
  CHECK(c.schedule == std::vector<std::size_t>{16, 32, 64});
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(*c.nu0 == 2.0);
  CHECK(c.estimator.objective == Objective::CV);
  CHECK(c.estimator.nu_max == 9.0);
  CHECK_NOTHROW(c.validate());

  ExperimentConfig bad = c;
  CHECK_THROWS_AS(apply_key_values(bad, parse("colour=blue\n")), ConfigError);
  CHECK_THROWS_AS(apply_key_values(bad, parse("lambda=abc\n")), ConfigError);
  CHECK_THROWS_AS(apply_key_values(bad, parse("objective=mle\n")), ConfigError);
}

TEST_CASE("validation rejects inconsistent configs") {
  ExperimentConfig c = default_config("variance-decay");
  c.schedule = {32, 16};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_config("variance-decay");
  c.d = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_config("variance-decay", 2);
  c.design = "vdc";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_config("non-undersmoothing");
  c.test_function = "nonexistent";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_config("non-undersmoothing");
  c.nu0.reset();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.test_function = "gauss_bump";
  CHECK_NOTHROW(c.validate());
  CHECK_THROWS_AS(default_config("fly-to-the-moon"), ConfigError);
}

TEST_CASE("defaults validate for every command") {
  for (const char* e : {"verify-identities", "variance-decay", "non-undersmoothing", "logdet-growth",
                        "convergence", "gaussian-scale-probe"}) {
    CHECK_NOTHROW(default_config(e).validate());
  }
  CHECK_NOTHROW(default_config("variance-decay", 2).validate());
}

TEST_CASE("fmt and CSV quoting") {
  CHECK(fmt(0.1) == "0.10000000000000001");
  CHECK(fmt(2.0) == "2");
  CHECK(fmt(std::nan("")) == "nan");
  Table t;
  t.header = {"a", "b"};
  t.rows = {{"1", "x,y"}, {"say \"hi\"", "plain"}};
  std::ostringstream out;
  write_csv(out, t);
  CHECK(out.str() == "a,b\n1,\"x,y\"\n\"say \"\"hi\"\"\",plain\n");
}

TEST_CASE("make_design") {
  ExperimentConfig c = default_config("variance-decay", 2);
  CHECK(make_design(c, 25).size() >= 25);
  c = default_config("variance-decay");
  CHECK(make_design(c, 16).coords() == van_der_corput_sequence(Box::unit(1), 16).coords());
}

TEST_CASE("small identity suite passes") {
  const IdentityReport r = verify_identities(small_verify());
  CHECK(r.passed());
  CHECK_FALSE(r.cases.empty());
  for (const char* id : {"logdet", "expansion", "loo", "min_norm", "error_bound"}) {
    CHECK(std::any_of(r.cases.begin(), r.cases.end(),
                      [&](const IdentityCase& k) { return k.identity == id; }));
  }
  const Outcome o = run(small_verify());
  CHECK(o.passed());
  CHECK_FALSE(o.table.rows.empty());
}

TEST_CASE("an injected kernel fault is caught") {
  ExperimentConfig c = small_verify();
  c.inject_fault = true;
  CHECK_FALSE(verify_identities(c).passed());
  CHECK_FALSE(run(c).passed());
}

TEST_CASE("zero data are flagged as degenerate") {
  ExperimentConfig c = default_config("non-undersmoothing");
  c.test_function = "zero";
  c.schedule = {8, 16};
  c.tail_count = 1;
  const NonUndersmoothingResult r = non_undersmoothing(c);
  CHECK(r.degenerate);
  CHECK_FALSE(r.records.empty());
}

TEST_CASE("variance-decay on a short schedule") {
  ExperimentConfig c = default_config("variance-decay");
  c.schedule = {16, 32, 64, 128};
  c.nu_list = {0.5};
  const auto s = variance_decay(c);
  REQUIRE(s.size() == 1);
  CHECK(s[0].expected_slope == -1.0);
  CHECK(std::abs(s[0].fit.slope + 1.0) <= 0.3);
  for (std::size_t i = 1; i < s[0].max_loo_var.size(); ++i) {
    CHECK(s[0].max_loo_var[i] < s[0].max_loo_var[i - 1]);
  }
}
