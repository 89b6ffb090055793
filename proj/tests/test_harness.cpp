#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "swarm/harness.hpp"

using namespace swarm;
using nlohmann::json;

namespace {

json smooth_scan() {
  return json::parse(R"({
    "id": "tiny_scan",
    "experiment": "MeanFieldScan",
    "potential": {
      "confinement": "quadratic",
      "interaction": {"kind": "gaussian", "amplitude": 1.0, "width": 1.0},
      "communication": {"kind": "bump", "radius": 1.0, "strength": 1.0}
    },
    "initial": {"interval": [-4, 4], "density": {"kind": "gaussian", "mean": 0, "sigma": 1},
                "velocity": {"kind": "tanh", "amplitude": -0.5}, "sampling": "quantile"},
    "gamma": 1.0, "T": 0.2, "dt": 1e-2, "reference_dt": 1e-2,
    "M": 256, "N_list": [8, 16, 32, 64]
  })");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("swarm_harness_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(FitSlope, ExactPowerLaw) {
  const std::vector<double> x{1, 2, 4, 8, 16};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * v * v);
  const auto f = fit_slope(x, y);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(std::exp(f.intercept), 3.0, 1e-12);
  EXPECT_NEAR(f.residual, 0.0, 1e-12);
  EXPECT_EQ(f.points, 5u);
}

TEST(FitSlope, ConstantIsFlat) {
  const std::vector<double> x{1, 10, 100, 1000};
  const std::vector<double> y(4, 0.7);
  EXPECT_NEAR(fit_slope(x, y).slope, 0.0, 1e-14);
}

TEST(FitSlope, NoisyLinear) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> noise(-0.01, 0.01);
  std::vector<double> x, y;
  for (int k = 0; k < 10; ++k) {
    x.push_back(std::pow(2.0, k));
    y.push_back(x.back() * (1.0 + noise(rng)));
  }
  const double s = fit_slope(x, y).slope;
  EXPECT_GE(s, 0.95);
  EXPECT_LE(s, 1.05);
}

TEST(FitSlope, Preconditions) {
  const std::vector<double> three{1, 2, 3};
  EXPECT_THROW(fit_slope(three, three), InvalidArgument);
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_THROW(fit_slope(x, std::vector<double>{1, 0, 1, 1}), NonPositiveValue);
  EXPECT_THROW(fit_slope(x, std::vector<double>{1, -2, 1, 1}), NonPositiveValue);
  EXPECT_THROW(fit_slope(std::vector<double>{2, 2, 2, 2}, x), InvalidArgument);
}

TEST(Config, ParsesFullDocument) {
  const auto c = parse_config(smooth_scan());
  EXPECT_EQ(c.id, "tiny_scan");
  EXPECT_EQ(c.experiment, ExperimentKind::MeanFieldScan);
  EXPECT_EQ(c.potential.confinement, Confinement::Quadratic);
  EXPECT_TRUE(std::holds_alternative<GaussianKernel>(c.potential.interaction));
  EXPECT_TRUE(std::holds_alternative<CompactBump>(c.potential.communication));
  EXPECT_EQ(c.N_list, (std::vector<std::size_t>{8, 16, 32, 64}));
  EXPECT_EQ(c.velocity.amplitude, -0.5);
  EXPECT_EQ(c.integrator, Integrator::RK4);
}

TEST(Config, UnknownKeysAreErrors) {
  auto j = smooth_scan();
  j["Gamma"] = 1.0;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = smooth_scan();
  j["potential"]["interaction"]["sigma"] = 1.0;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = smooth_scan();
  j["initial"]["density"]["width"] = 2.0;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = smooth_scan();
  j["checks"] = json::array({{{"kind", "slope"}, {"column", "dbl_T"}, {"tolerance", 1}}});
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, BadValuesAreErrors) {
  const auto expect_error = [](const std::function<void(json&)>& edit) {
    auto j = smooth_scan();
    edit(j);
    EXPECT_THROW(parse_config(j), ConfigError) << j.dump();
  };
  expect_error([](json& j) { j.erase("experiment"); });
  expect_error([](json& j) { j["experiment"] = "Scan"; });
  expect_error([](json& j) { j["dt"] = "small"; });
  expect_error([](json& j) { j["dt"] = 0.0; });
  expect_error([](json& j) { j["M"] = 100; });
  expect_error([](json& j) { j["dimension"] = 2; });
  expect_error([](json& j) { j["integrator"] = "euler"; });
  expect_error([](json& j) { j["initial"]["interval"] = json::array({1.0}); });
  expect_error([](json& j) { j["initial"]["sampling"] = "sobol"; });
  expect_error([](json& j) { j["potential"]["interaction"] = {{"kind", "riesz"}, {"exponent", 1.5}}; });
  expect_error([](json& j) { j["checks"] = 3; });
  expect_error([](json& j) { j["checks"] = json::array({{{"kind", "maybe"}, {"column", "x"}}}); });
  expect_error([](json& j) { j["N_list"] = json::array(); });
}

TEST(Config, LoadFromFile) {
  const auto dir = scratch("load");
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "c.json");
    f << smooth_scan().dump(2);
  }
  EXPECT_EQ(load_config((dir / "c.json").string()).M, 256u);
  {
    std::ofstream f(dir / "bad.json");
    f << "{ not json";
  }
  EXPECT_THROW(load_config((dir / "bad.json").string()), ConfigError);
  EXPECT_THROW(load_config((dir / "missing.json").string()), ConfigError);
}

TEST(Checks, Kinds) {
  ExperimentResult r;
  r.axis = "N";
  r.table.columns = {"N", "err"};
  r.table.rows = {{8, 0.4}, {16, 0.2}, {32, 0.1}, {64, 0.05}};
  r.scalars["ratio"] = 1.5;
  r.slopes["err"] = fit_slope(r.table.column("N"), r.table.column("err"));
  EXPECT_TRUE(evaluate_check(r, {"decreasing", "err"}).passed);
  EXPECT_FALSE(evaluate_check(r, {"decreasing", "N"}).passed);
  EXPECT_TRUE(evaluate_check(r, {"slope", "err", -1.1, -0.9}).passed);
  EXPECT_FALSE(evaluate_check(r, {"slope", "err", -0.8, -0.5}).passed);
  EXPECT_FALSE(evaluate_check(r, {"slope", "N", 0.0, 2.0}).passed);
  EXPECT_TRUE(evaluate_check(r, {"at_most", "err", 0, 0, 0.4}).passed);
  EXPECT_FALSE(evaluate_check(r, {"at_most", "err", 0, 0, 0.3}).passed);
  EXPECT_TRUE(evaluate_check(r, {"at_least", "ratio", 0, 0, 1.5}).passed);
  EXPECT_FALSE(evaluate_check(r, {"greater_than", "ratio", 0, 0, 1.5}).passed);
  EXPECT_THROW(evaluate_check(r, {"at_most", "nope", 0, 0, 1}), ConfigError);
}

TEST(ReferenceHistory, HermiteReproducesCubics) {
  // Node path x(t) = t^3 - t with velocity 3t^2 - 1.
  std::vector<ContinuumState> s;
  for (double t : {0.0, 0.5, 1.0}) {
    s.push_back({{t * t * t - t}, {1.0}, {3.0 * t * t - 1.0}, t});
  }
  const ReferenceHistory h(s);
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const auto c = h.at(t);
    EXPECT_NEAR(c.nodes[0], t * t * t - t, 1e-15);
    EXPECT_EQ(c.t, t);
  }
  EXPECT_EQ(h.at(0.5).velocities[0], s[1].velocities[0]);
  EXPECT_EQ(h.at(2.0).nodes[0], 0.0);
  EXPECT_THROW(ReferenceHistory(std::vector<ContinuumState>{}), InvalidArgument);
}

TEST(MeanFieldScan, ZeroDynamicsKeepsInitialErrors) {
  auto j = json::parse(R"({
    "id": "still", "experiment": "MeanFieldScan",
    "initial": {"density": {"kind": "gaussian"}, "velocity": {"kind": "zero"}},
    "gamma": 0.0, "T": 0.1, "dt": 1e-2, "M": 512, "N_list": [8, 16, 32, 64, 128]
  })");
  const auto r = run_mean_field_scan(parse_config(j));
  ASSERT_EQ(r.table.rows.size(), 5u);
  EXPECT_TRUE(r.complete);
  for (const auto& [a, b] : {std::pair{"energy_0", "energy_T"}, std::pair{"dbl_0", "dbl_T"},
                             std::pair{"error_0", "error_T"}}) {
    EXPECT_EQ(r.table.column(a), r.table.column(b)) << a;
  }
  for (double e : r.table.column("energy_T")) EXPECT_EQ(e, 0.0);
  for (double x : r.table.column("error_ratio")) EXPECT_EQ(x, 1.0);
  EXPECT_EQ(r.scalars.at("reference_selfconv_energy"), 0.0);
  // E^N vanishes identically, so no slope can be fitted for it.
  EXPECT_NE(std::find(r.unfitted.begin(), r.unfitted.end(), "energy_T"), r.unfitted.end());
  ASSERT_TRUE(r.slopes.count("dbl_T"));
  EXPECT_NEAR(r.slopes.at("dbl_T").slope, -1.0, 0.15);
}

TEST(MeanFieldScan, TooFewPointsForAFit) {
  auto j = smooth_scan();
  j["N_list"] = json::array({64});
  EXPECT_THROW(run_mean_field_scan(parse_config(j)), InvalidArgument);
}

TEST(MeanFieldScan, OutputsAreByteIdenticalAcrossThreadCounts) {
  const auto cfg = parse_config(smooth_scan());
  const auto a = scratch("t1");
  const auto b = scratch("t2");
  write_outputs(run_experiment(cfg, 1), a);
  write_outputs(run_experiment(cfg, 3), b);
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(a)) {
    const auto name = e.path().filename();
    EXPECT_EQ(slurp(e.path()), slurp(b / name)) << name;
    ++files;
  }
  EXPECT_EQ(files, 4u);
  const std::string csv = slurp(a / "tiny_scan.csv");
  EXPECT_EQ(csv.rfind("experiment,t,N,epsilon,M,energy_0,", 0), 0u);
  EXPECT_EQ(csv.find("partial"), std::string::npos);
}

TEST(MeanFieldScan, CrossingAbortsWithPartialResult) {
  auto j = json::parse(R"({
    "id": "collapse", "experiment": "MeanFieldScan",
    "initial": {"interval": [-1, 1], "density": {"kind": "uniform"},
                "velocity": {"kind": "linear", "slope": -2.0}},
    "gamma": 0.0, "T": 1.0, "dt": 1e-2, "M": 256, "N_list": [8, 16, 32, 64]
  })");
  const auto cfg = parse_config(j);
  try {
    run_mean_field_scan(cfg);
    FAIL() << "expected ScanAborted";
  } catch (const ScanAborted& e) {
    EXPECT_FALSE(e.partial().complete);
    EXPECT_NE(e.partial().abort_reason.find("M = 256"), std::string::npos);
    EXPECT_THROW(std::rethrow_exception(e.cause()), CharacteristicCrossing);
    const auto dir = scratch("partial");
    write_outputs(e.partial(), dir);
    EXPECT_NE(slurp(dir / "collapse.csv").find("# partial: "), std::string::npos);
  }
}

TEST(InertiaScan, ClosedFormAggregationReference) {
  // psi = 0, W = 0, V quadratic, gamma = 2: ubar = -x/2 exactly.
  auto j = json::parse(R"({
    "id": "inertia_exact", "experiment": "InertiaScan",
    "potential": {"confinement": "quadratic"},
    "initial": {"density": {"kind": "gaussian"}, "velocity": {"kind": "linear", "slope": -0.5}},
    "gamma": 2.0, "T": 1.0, "dt": 1e-3, "reference_dt": 1e-2, "M": 1024, "N": 256,
    "epsilon_list": [0.1, 0.03, 0.01, 0.003, 0.001], "integrator": "semi_implicit"
  })");
  const auto r = run_inertia_scan(parse_config(j), 2);
  ASSERT_EQ(r.table.rows.size(), 5u);
  EXPECT_LE(r.scalars.at("max_relation_residual"), 1e-12);
  EXPECT_EQ(r.scalars.at("direct_solves"), 0.0);
  EXPECT_GE(r.slopes.at("sup_energy").slope, 0.7);
  EXPECT_LE(r.slopes.at("sup_energy").slope, 1.3);
  const auto d = r.table.column("delta");
  EXPECT_NEAR(d[0], std::sqrt(0.1), 1e-15);
}

TEST(InertiaScan, StiffRk4IsRejected) {
  auto j = json::parse(R"({
    "id": "stiff", "experiment": "InertiaScan", "potential": {"confinement": "quadratic"},
    "gamma": 5.0, "T": 0.1, "dt": 1e-2, "M": 256, "N": 32,
    "epsilon_list": [0.1, 0.01, 0.001, 0.0001], "integrator": "rk4"
  })");
  try {
    run_inertia_scan(parse_config(j));
    FAIL() << "expected ScanAborted";
  } catch (const ScanAborted& e) {
    EXPECT_THROW(std::rethrow_exception(e.cause()), StiffnessWarning);
    EXPECT_NE(e.partial().abort_reason.find("epsilon = "), std::string::npos);
  }
}

TEST(SingleRun, TwoDimensionalWithArtifacts) {
  auto j = json::parse(R"({
    "id": "plane", "experiment": "SingleRun", "dimension": 2,
    "potential": {"confinement": "quadratic", "interaction": {"kind": "coulomb"}},
    "initial": {"interval": [-1, 1], "density": {"kind": "uniform"}, "sampling": "iid", "seed": 3},
    "gamma": 1.0, "T": 0.1, "dt": 1e-3, "N": 16, "sample_every": 20
  })");
  const auto r = run_single(parse_config(j));
  EXPECT_EQ(r.table.rows.size(), 6u);
  EXPECT_GT(r.scalars.at("min_distance"), 0.0);
  ASSERT_TRUE(r.artifacts.count("plane_final.bin"));
  std::istringstream bin(r.artifacts.at("plane_final.bin"));
  const auto p = io::read_checkpoint<2>(bin);
  EXPECT_EQ(p.size(), 16u);
  EXPECT_NEAR(p.t, 0.1, 1e-12);
  const auto fe = r.table.column("free_energy");
  for (std::size_t k = 1; k < fe.size(); ++k) EXPECT_LE(fe[k], fe[k - 1] + 1e-12);
}

TEST(DissipationCheck, SmallRun) {
  auto j = json::parse(R"({
    "id": "diss", "experiment": "DissipationCheck",
    "potential": {"confinement": "quadratic", "interaction": {"kind": "gaussian"},
                  "communication": {"kind": "bump"}},
    "initial": {"velocity": {"kind": "tanh", "amplitude": -0.5}},
    "gamma": 1.0, "T": 0.5, "dt": 2e-3, "N": 32
  })");
  const auto r = run_dissipation_check(parse_config(j));
  EXPECT_LE(r.scalars.at("dissipation_residual"), 1e-5);
  EXPECT_GT(r.scalars.at("residual_ratio"), 6.0);
  EXPECT_LE(r.scalars.at("conservative_drift"), 1e-8);
  EXPECT_LE(r.scalars.at("max_free_energy_increase"), 0.0);
}
