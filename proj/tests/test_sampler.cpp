#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "livingmeta/sampler.hpp"

using namespace livingmeta;
using Catch::Approx;

namespace {

EffectEstimate effect(std::string id, std::string study, double g, double var) {
  EffectEstimate e;
  e.effect_id = std::move(id);
  e.study_id = std::move(study);
  e.g = g;
  e.var_g = var;
  e.group_label = "all";
  e.outcome_label = e.effect_id;
  e.timepoint_index = 0;
  e.oriented = true;
  return e;
}

// One effect, both heterogeneity SDs pinned: the posterior over mu is the
// conjugate normal N(0.4, 0.2).
Model conjugate_model() {
  std::vector<EffectEstimate> one{effect("s:1", "s", 0.5, 0.25)};
  ModelSpec spec;
  spec.prior_tau = PriorSpec::fixed(0.0);
  spec.prior_omega = PriorSpec::fixed(0.0);
  return Model(build_vcov(one, {0.0, 0.0}), spec);
}

Model small_model() {
  std::vector<EffectEstimate> effects{
      effect("a:1", "a", 0.42, 0.031), effect("a:2", "a", 0.18, 0.052),
      effect("b:1", "b", -0.10, 0.024), effect("c:1", "c", 0.30, 0.040),
  };
  return Model(build_vcov(effects, {0.5, 0.8}), ModelSpec{});
}

McmcConfig quick_config(std::uint64_t seed) {
  McmcConfig cfg;
  cfg.n_chains = 2;
  cfg.warmup_iterations = 200;
  cfg.sampling_iterations = 200;
  cfg.master_seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("mcmc config rejects unusable settings") {
  McmcConfig ok;
  CHECK_NOTHROW(ok.check());
  McmcConfig bad = ok;
  bad.n_chains = 1;
  CHECK_THROWS_AS(bad.check(), Error);
  bad = ok;
  bad.warmup_iterations = 0;
  CHECK_THROWS_AS(bad.check(), Error);
  bad = ok;
  bad.sampling_iterations = 0;
  CHECK_THROWS_AS(bad.check(), Error);
  bad = ok;
  bad.target_accept = 1.0;
  CHECK_THROWS_AS(bad.check(), Error);
  bad = ok;
  bad.max_treedepth = 0;
  CHECK_THROWS_AS(bad.check(), Error);
}

TEST_CASE("warmup schedule uses fast-slow-fast windows with doubling") {
  auto s = nuts::WarmupSchedule::plan(1000);
  CHECK(s.init_end == 75);
  CHECK(s.slow_end == 950);
  REQUIRE(!s.window_ends.empty());
  CHECK(s.window_ends.front() == 100);  // first slow window spans 25
  CHECK(s.window_ends.back() == 950);   // metric frozen before the last 50
  // windows double until the tail is absorbed
  long prev_size = 0;
  for (std::size_t i = 0; i + 1 < s.window_ends.size(); ++i) {
    long start = i == 0 ? s.init_end : s.window_ends[i - 1];
    long size = s.window_ends[i] - start;
    if (i > 0 && i + 1 < s.window_ends.size()) CHECK(size == 2 * prev_size);
    prev_size = size;
  }

  // short runs shrink the buffers instead of failing
  auto tiny = nuts::WarmupSchedule::plan(100);
  CHECK(tiny.init_end == 15);
  CHECK(tiny.slow_end == 90);
  CHECK(tiny.window_ends.back() == 90);
}

TEST_CASE("a fixed master seed reproduces every draw bit for bit") {
  Model m = small_model();
  PosteriorDraws a = fit(m, quick_config(42));
  PosteriorDraws b = fit(m, quick_config(42));
  REQUIRE(a.values.size() == b.values.size());
  CHECK(a.values == b.values);
  CHECK(a.step_sizes == b.step_sizes);
  CHECK(a.divergences == b.divergences);

  PosteriorDraws c = fit(m, quick_config(43));
  CHECK(a.values != c.values);
}

TEST_CASE("draws carry natural-scale parameters and metadata") {
  Model m = small_model();
  McmcConfig cfg = quick_config(7);
  PosteriorDraws d = fit(m, cfg);

  CHECK(d.names == std::vector<std::string>{"mu", "tau", "omega"});
  CHECK(d.sampled == std::vector<bool>{true, true, true});
  CHECK(d.n_chains() == 2);
  CHECK(d.n_iterations() == 200);
  CHECK(d.master_seed == 7);
  CHECK(d.warmup_iterations == 200);
  CHECK(d.divergences.size() == 2);
  CHECK(d.step_sizes.size() == 2);
  CHECK(d.chain_failures.empty());
  for (double s : d.step_sizes) CHECK(s > 0.0);

  // tau and omega are reported on the natural (positive) scale
  for (double v : d.flat(d.index_of("tau"))) CHECK(v > 0.0);
  for (double v : d.flat(d.index_of("omega"))) CHECK(v > 0.0);
  CHECK_THROWS_AS(d.index_of("zeta"), Error);
}

TEST_CASE("the conjugate posterior is recovered") {
  Model m = conjugate_model();
  McmcConfig cfg;
  cfg.n_chains = 4;
  cfg.warmup_iterations = 300;
  cfg.sampling_iterations = 500;
  cfg.master_seed = 2026;
  PosteriorDraws d = fit(m, cfg);

  CHECK(d.sampled == std::vector<bool>{true, false, false});
  auto mu = d.flat(d.index_of("mu"));
  REQUIRE(mu.size() == 2000);
  double mean = 0.0;
  for (double v : mu) mean += v;
  mean /= static_cast<double>(mu.size());
  double var = 0.0;
  for (double v : mu) var += (v - mean) * (v - mean);
  var /= static_cast<double>(mu.size() - 1);

  CHECK(mean == Approx(0.4).margin(0.05));
  CHECK(std::sqrt(var) == Approx(std::sqrt(0.2)).margin(0.06));

  // fixed parameters are carried through as constants
  for (double v : d.flat(d.index_of("tau"))) CHECK(v == 0.0);
}

TEST_CASE("fitting nothing but fixed parameters is refused") {
  std::vector<EffectEstimate> one{effect("s:1", "s", 0.5, 0.25)};
  ModelSpec spec;
  spec.prior_mu = PriorSpec::fixed(0.0);
  spec.prior_tau = PriorSpec::fixed(0.0);
  spec.prior_omega = PriorSpec::fixed(0.0);
  Model m(build_vcov(one, {0.0, 0.0}), spec);
  CHECK_THROWS_AS(fit(m, quick_config(1)), Error);
  try {
    fit(m, quick_config(1));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::validation);
  }
}

TEST_CASE("draw csv lists chain, iteration, parameter and value") {
  Model m = small_model();
  McmcConfig cfg = quick_config(11);
  cfg.warmup_iterations = 50;
  cfg.sampling_iterations = 10;
  PosteriorDraws d = fit(m, cfg);
  std::string text = draws_to_csv(d);

  REQUIRE(text.rfind("chain,iteration,parameter,value", 0) == 0);
  std::size_t lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  CHECK(lines == 1 + 2 * 10 * 3);  // header + chains x iterations x params
  CHECK(text.find("\n1,1,mu,") != std::string::npos);
  CHECK(text.find(",tau,") != std::string::npos);
}
