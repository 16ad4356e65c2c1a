#include "sage/benchmarks.hpp"
#include "sage/errors.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

namespace sb = sage::bench;

namespace {

sb::ProblemSpec separable(int fid, int instance, int dim = 5) {
  sb::ProblemSpec spec;
  spec.fid = fid;
  spec.instance = instance;
  spec.dim = dim;
  return spec;
}

}  // namespace

TEST(Aocc, AllAtFloorIsOne) {
  const sb::Trace t(std::vector<double>(50, 1e-9));
  EXPECT_EQ(sb::aocc(t, 50, 0.0), 1.0);
  // Below the floor still clips to the floor.
  EXPECT_EQ(sb::aocc(sb::Trace({0.0, 0.0}), 2, 0.0), 1.0);
}

TEST(Aocc, AllAtCeilingIsZero) {
  const sb::Trace t(std::vector<double>(50, 1e5));
  EXPECT_EQ(sb::aocc(t, 50, 0.0), 0.0);
  EXPECT_EQ(sb::aocc(sb::Trace({100.0}), 10, 0.0), 0.0);
}

TEST(Aocc, HalfCeilingHalfFloorIsHalf) {
  std::vector<double> v(100, 1e3);
  std::fill(v.begin() + 50, v.end(), 1e-10);
  EXPECT_EQ(sb::aocc(sb::Trace(v), 100, 0.0), 0.5);
}

TEST(Aocc, IntermediateValue) {
  // log10 regret of -3 sits at 0.5 of the [-8, 2] range.
  EXPECT_NEAR(sb::aocc(sb::Trace({7.001}), 4, 7.0), 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(sb::aocc(sb::Trace({1.0}), 1, 0.0, {.lb = -2.0, .ub = 2.0}), 0.5);
}

TEST(Aocc, PadsAndTruncates) {
  // Padding repeats the last value.
  EXPECT_DOUBLE_EQ(sb::aocc(sb::Trace({1e3, 1e-9}), 4, 0.0), 0.75);
  // Truncation ignores evaluations past the budget.
  EXPECT_DOUBLE_EQ(sb::aocc(sb::Trace({1e3, 1e3, 1e-9, 1e-9}), 2, 0.0), 0.0);
}

TEST(Aocc, MonotoneInTrace) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-9.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> raw(30);
    for (auto& v : raw) v = std::pow(10.0, u(rng));
    const auto base = sb::Trace::from_raw(raw);
    auto better = raw;
    better[static_cast<std::size_t>(trial % 30)] *= 0.01;
    const double a = sb::aocc(base, 30, 0.0);
    const double b = sb::aocc(sb::Trace::from_raw(better), 30, 0.0);
    EXPECT_GE(b, a);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Aocc, Errors) {
  EXPECT_THROW(sb::aocc(sb::Trace(), 10, 0.0), sage::EmptyTrace);
  EXPECT_THROW(sb::aocc(sb::Trace({1.0}), 0, 0.0), std::invalid_argument);
}

TEST(Trace, RejectsIncreasingValues) {
  EXPECT_THROW(sb::Trace({1.0, 2.0}), std::invalid_argument);
  const std::vector<double> raw = {5.0, 7.0, 3.0, 4.0, 1.0};
  EXPECT_EQ(sb::Trace::from_raw(raw).values(), (std::vector<double>{5.0, 5.0, 3.0, 3.0, 1.0}));
}

TEST(Problems, OptimumIsAttainedForEveryFid) {
  for (int fid = 1; fid <= 5; ++fid) {
    for (int instance = 0; instance < 4; ++instance) {
      for (int dim : {1, 2, 5, 10}) {
        const auto p = sb::make_problem(separable(fid, instance, dim));
        EXPECT_NEAR(p(p.optimum_location()), p.optimum_value(), 1e-9)
            << "fid " << fid << " instance " << instance << " dim " << dim;
      }
    }
  }
}

TEST(Problems, OptimumIsAMinimumNearby) {
  std::mt19937 rng(8);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int fid = 1; fid <= 5; ++fid) {
    const auto p = sb::make_problem(separable(fid, 2));
    for (int k = 0; k < 200; ++k) {
      auto x = p.optimum_location();
      for (auto& v : x) v = std::clamp(v + n(rng), -5.0, 5.0);
      EXPECT_GE(p(x), p.optimum_value() - 1e-9) << "fid " << fid;
    }
  }
}

TEST(Problems, InstanceZeroIsUnshifted) {
  const auto p = sb::make_problem(separable(1, 0, 3));
  EXPECT_EQ(p.optimum_value(), 0.0);
  EXPECT_EQ(p.optimum_location(), std::vector<double>(3, 0.0));
  EXPECT_DOUBLE_EQ(p(std::vector<double>{1.0, 2.0, 2.0}), 9.0);
}

TEST(Problems, ClosedFormValues) {
  // The cosine term cancels at integer offsets.
  const auto r = sb::make_problem(separable(3, 0, 2));
  EXPECT_NEAR(r(std::vector<double>{1.0, 0.0}), 1.0, 1e-12);
  EXPECT_NEAR(r(std::vector<double>{0.5, 0.0}), 0.25 + 20.0, 1e-12);
  // Ellipsoid conditioning runs from 1 to 1e6.
  const auto e = sb::make_problem(separable(2, 0, 3));
  EXPECT_DOUBLE_EQ(e(std::vector<double>{0.0, 0.0, 1.0}), 1e6);
  EXPECT_DOUBLE_EQ(e(std::vector<double>{0.0, 1.0, 0.0}), 1e3);
  // Bueche-Rastrigin penalizes leaving the box.
  const auto b = sb::make_problem(separable(4, 0, 1));
  // z = 6 is scaled by 10 on even positive coordinates, plus 100 * (6 - 5)^2.
  EXPECT_NEAR(b(std::vector<double>{6.0}), 3600.0 + 100.0, 1e-9);
  EXPECT_NEAR(b(std::vector<double>{-6.0}), 36.0 + 100.0, 1e-9);
  // Linear slope is flat beyond the optimum corner.
  const auto s = sb::make_problem(separable(5, 1, 2));
  auto beyond = s.optimum_location();
  for (auto& v : beyond) v *= 1.2;
  EXPECT_DOUBLE_EQ(s(beyond), s.optimum_value());
}

TEST(Problems, InstancesAreDeterministicAndDistinct) {
  const auto a = sb::make_problem(separable(1, 3));
  const auto b = sb::make_problem(separable(1, 3));
  const auto c = sb::make_problem(separable(1, 4));
  EXPECT_EQ(a.optimum_location(), b.optimum_location());
  EXPECT_EQ(a.optimum_value(), b.optimum_value());
  EXPECT_NE(a.optimum_location(), c.optimum_location());
  for (double v : a.optimum_location()) {
    EXPECT_GE(v, -4.0);
    EXPECT_LE(v, 4.0);
  }
  // Offsets are rounded to two decimals.
  EXPECT_DOUBLE_EQ(std::round(a.optimum_value() * 100.0) / 100.0, a.optimum_value());
}

TEST(Problems, FrozenInstanceValues) {
  // First draws of the SplitMix64 stream for seed 1000003 * 1 + 1.
  sb::SplitMix64 rng(1000004);
  const double u0 = rng.uniform();
  const auto p = sb::make_problem(separable(1, 1, 1));
  EXPECT_DOUBLE_EQ(p.optimum_location()[0], -4.0 + 8.0 * u0);
  sb::SplitMix64 zero(0);
  EXPECT_EQ(zero.next(), 0xE220A8397B1DCDAFULL);
}

TEST(Problems, AffinePair) {
  sb::ProblemSpec spec;
  spec.suite = sb::Suite::affine_pair;
  spec.fid = 1;
  spec.fid_b = 3;
  spec.instance = 2;
  spec.dim = 4;
  spec.alpha = 0.0;
  const auto a = sb::make_problem(spec);
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  for (int k = 0; k < 50; ++k) {
    std::vector<double> x(4);
    for (auto& v : x) v = u(rng);
    double regret = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      regret += (x[i] - a.optimum_location()[i]) * (x[i] - a.optimum_location()[i]);
    }
    EXPECT_NEAR(a(x) - a.optimum_value(), regret, 1e-9 * std::max(1.0, regret));
  }
  EXPECT_NEAR(a(a.optimum_location()), a.optimum_value(), 1e-9);

  spec.alpha = 0.5;
  const auto mixed = sb::make_problem(spec);
  EXPECT_NEAR(mixed(mixed.optimum_location()), mixed.optimum_value(), 1e-9);

  spec.fid_b = 5;
  EXPECT_THROW(sb::make_problem(spec), sage::UnknownFid);
  spec.fid_b = 2;
  spec.alpha = 1.5;
  EXPECT_THROW(sb::make_problem(spec), std::invalid_argument);
}

TEST(Problems, Errors) {
  EXPECT_THROW(sb::make_problem(separable(0, 1)), sage::UnknownFid);
  EXPECT_THROW(sb::make_problem(separable(6, 1)), sage::UnknownFid);
  auto synth = separable(1, 1);
  synth.suite = sb::Suite::synthetic;
  EXPECT_THROW(sb::make_problem(synth), sage::UnknownFid);
  const auto p = sb::make_problem(separable(1, 1, 3));
  EXPECT_THROW(p(std::vector<double>{1.0}), sage::DimensionMismatch);
  EXPECT_THROW(sb::suite_from_string("bbob"), sage::ConfigError);
}

TEST(Problems, SpecJsonRoundTrip) {
  auto spec = separable(3, 7, 10);
  spec.inner_budget = 2000;
  const auto j = sb::to_json(spec);
  EXPECT_EQ(j.dump(),
            R"({"dim":10,"fid":3,"inner_budget":2000,"instance":7,"lb":-5.0,"suite":"sbox_separable","ub":5.0})");
  const auto back = sb::problem_spec_from_json(j);
  EXPECT_EQ(back.fid, 3);
  EXPECT_EQ(back.instance, 7);
  EXPECT_EQ(back.dim, 10);
  EXPECT_EQ(back.inner_budget, 2000);
  EXPECT_FALSE(j.contains("fid_b"));

  spec.suite = sb::Suite::affine_pair;
  spec.fid_b = 2;
  spec.alpha = 0.25;
  const auto aj = sb::to_json(spec);
  EXPECT_EQ(sb::problem_spec_from_json(aj).alpha, 0.25);
  EXPECT_EQ(sb::problem_spec_from_json(aj).fid_b, 2);
}

TEST(Aggregate, MeanOfScores) {
  EXPECT_DOUBLE_EQ(sb::aggregate_fitness(std::vector<double>{0.2, 0.4, 0.9}), 0.5);
  EXPECT_THROW(sb::aggregate_fitness(std::vector<double>{}), std::invalid_argument);
}
