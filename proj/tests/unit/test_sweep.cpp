#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "gasrotor/error.hpp"
#include "gasrotor/sweep.hpp"

using namespace gasrotor;

namespace {

Design reference_design() {
  std::ifstream in(std::string(GASROTOR_DATA_DIR) + "/reference.rotor");
  std::stringstream ss;
  ss << in.rdbuf();
  Design d;
  d.rotor = parse_rotor(ss.str());
  d.bearing = journal_geometry(d.rotor, HGJBGeometry{});
  return d;
}

PointEvaluation with_log_dec(double delta, double load = 1.0, double power = 1.0) {
  PointEvaluation e;
  for (int m = 0; m < 4; ++m) {
    e.modes[m].mode = static_cast<ModeId>(m + 1);
    e.modes[m].excited = m == 0;
  }
  e.modes[0].log_dec = delta;
  e.modes[0].whirl_speed_ratio = 0.5;
  e.modes[0].stable = delta > 0.0;
  e.load_capacity_N = load;
  e.power_loss_W = power;
  return e;
}

// log_dec = -sign(dh_r), load and power encode the cell and speed.
PointEvaluator half_plane(const Design& nominal) {
  const double h_r = nominal.bearing.h_r, h_g = nominal.bearing.h_g;
  return [h_r, h_g](const Design& d) {
    const double dr = d.bearing.h_r - h_r;
    return with_log_dec(dr < 0.0 ? 1.0 : dr > 0.0 ? -1.0 : 0.0, 1.0 + 1e5 * dr + 1e3 * (d.bearing.h_g - h_g),
                        d.op.N * 1e-4);
  };
}

SweepSpec spec_of(int n, std::vector<double> speeds, EvaluatorKind kind = EvaluatorKind::oracle) {
  SweepSpec s;
  s.speeds = std::move(speeds);
  s.tolerance = {1e-6, 2e-6, n};
  s.evaluator = kind;
  return s;
}

}  // namespace

TEST_CASE("deviation axis: symmetric, exact centre, refinement coincidence") {
  for (int n : {3, 5, 11, 21, 41}) {
    const auto a = deviation_axis(1e-6, n);
    CHECK(a.size() == static_cast<std::size_t>(n));
    CHECK(a[n / 2] == 0.0);
    CHECK(a.front() == -1e-6);
    CHECK(a.back() == 1e-6);
    for (int i = 0; i < n; ++i) CHECK(a[i] == -a[n - 1 - i]);
    const auto fine = deviation_axis(1e-6, 2 * n - 1);
    for (int i = 0; i < n; ++i) CHECK(fine[2 * i] == a[i]);
  }
  CHECK(deviation_axis(1e-6, 1) == std::vector<double>{0.0});
}

TEST_CASE("default speeds") {
  const auto s = default_speeds(1e5);
  REQUIRE(s.size() == 11);
  CHECK(s.front() == doctest::Approx(5e4));
  CHECK(s.back() == doctest::Approx(1.2e5));
  CHECK(std::is_sorted(s.begin(), s.end()));
}

TEST_CASE("constant positive log decrement: the whole map is feasible") {
  const Design d = reference_design();
  const FeasibilityMap map = run_sweep(d, spec_of(5, {5e4, 1e5}), [](const Design&) { return with_log_dec(1.0); });
  CHECK(map.cells.size() == 25);
  CHECK(feasible_fraction(map) == 1.0);
  for (const auto& c : map.cells) {
    CHECK(c.valid);
    CHECK(*c.worst_log_dec == 1.0);
    CHECK(c.per_speed.size() == 2);
  }
}

TEST_CASE("half-plane evaluator gives 210 of 441") {
  const Design d = reference_design();
  const FeasibilityMap map = run_sweep(d, spec_of(21, {1e5}), half_plane(d));
  CHECK(feasible_fraction(map) == 210.0 / 441.0);
  for (int i = 0; i < 21; ++i)
    for (int j = 0; j < 21; ++j) CHECK(map.at(i, j).feasible == (i < 10));
}

TEST_CASE("nothing excited counts as feasible; worst metrics over speeds") {
  const Design d = reference_design();
  const FeasibilityMap quiet = run_sweep(d, spec_of(3, {1e5}), [](const Design&) {
    PointEvaluation e = with_log_dec(-1.0);
    e.modes[0] = {};
    return e;
  });
  for (const auto& c : quiet.cells) {
    CHECK_FALSE(c.worst_log_dec);
    CHECK(c.feasible);
  }
  const FeasibilityMap map = run_sweep(d, spec_of(3, {4e4, 8e4, 1.2e5}), [](const Design& x) {
    return with_log_dec(x.op.N * 1e-5 - 0.5, 1e6 / x.op.N, x.op.N);
  });
  const SweepCell& c = map.at(1, 1);
  CHECK(*c.worst_log_dec == doctest::Approx(4e4 * 1e-5 - 0.5));
  CHECK_FALSE(c.feasible);
  CHECK(c.min_load_N == doctest::Approx(1e6 / 1.2e5));
  CHECK(c.max_power_W == 1.2e5);
}

TEST_CASE("failing cells are marked invalid and the sweep continues") {
  const Design d = reference_design();
  const double h_r = d.bearing.h_r;
  const FeasibilityMap map = run_sweep(d, spec_of(3, {1e5}), [h_r](const Design& x) {
    if (x.bearing.h_r > h_r) throw Error(errc::nonconvergence, "toy failure");
    return with_log_dec(1.0);
  });
  int invalid = 0;
  for (const auto& c : map.cells) invalid += !c.valid;
  CHECK(invalid == 3);
  CHECK(map.at(2, 0).error.find("toy failure") != std::string::npos);
  CHECK(feasible_fraction(map) == 1.0);
  const FeasibilityMap dead = run_sweep(d, spec_of(3, {1e5}), [](const Design&) -> PointEvaluation {
    throw Error(errc::nonconvergence, "always");
  });
  CHECK_THROWS_AS(feasible_fraction(dead), Error);
}

TEST_CASE("results do not depend on evaluation order or threads") {
  const Design d = reference_design();
  const SweepSpec spec = spec_of(9, {6e4, 1e5});
  const FeasibilityMap a = run_sweep(d, spec, half_plane(d));
  SweepOptions o;
  o.order.resize(81);
  std::iota(o.order.begin(), o.order.end(), 0);
  std::mt19937_64 rng(5);
  std::shuffle(o.order.begin(), o.order.end(), rng);
  CHECK(run_sweep(d, spec, half_plane(d), o) == a);
  std::reverse(o.order.begin(), o.order.end());
  o.threads = 4;
  CHECK(run_sweep(d, spec, half_plane(d), o) == a);
  o.order = {0, 1, 2};
  CHECK_THROWS_AS(run_sweep(d, spec, half_plane(d), o), Error);
}

TEST_CASE("refined grid reproduces the coarse cells") {
  const Design d = reference_design();
  const FeasibilityMap coarse = run_sweep(d, spec_of(5, {1e5}), half_plane(d));
  const FeasibilityMap fine = run_sweep(d, spec_of(9, {1e5}), half_plane(d));
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) CHECK(fine.at(2 * i, 2 * j) == coarse.at(i, j));
}

TEST_CASE("oracle sweep: the nominal cell equals a direct evaluation bitwise") {
  const Design d = reference_design();
  const FluidRegistry fluids = FluidRegistry::defaults();
  const FeasibilityMap map =
      run_sweep(d, spec_of(3, {d.op.N}), [&](const Design& x) { return evaluate_oracle(x, fluids); });
  const PointEvaluation direct = evaluate_oracle(d, fluids);
  const SweepCell& c = map.at(1, 1);
  CHECK(c.delta_h_r == 0.0);
  CHECK(c.delta_h_g == 0.0);
  REQUIRE(c.per_speed.size() == 1);
  CHECK(c.per_speed[0] == direct.modes);
  CHECK(c.min_load_N == direct.load_capacity_N);
  CHECK(c.max_power_W == direct.power_loss_W);
}

TEST_CASE("contour export round trip") {
  const Design d = reference_design();
  const double h_r = d.bearing.h_r;
  const FeasibilityMap map = run_sweep(d, spec_of(5, {8e4, 1e5}), [&, h_r](const Design& x) {
    if (x.bearing.h_r > h_r && x.bearing.h_g > d.bearing.h_g) throw Error(errc::nonconvergence, "corner");
    if (x.bearing.h_r < h_r) {
      PointEvaluation e = with_log_dec(0.0);
      e.modes[0] = {};
      return e;
    }
    return half_plane(d)(x);
  });
  const ContourDocument doc = make_contours(map, design_digest(d), "2026-01-01T00:00:00Z");
  CHECK(doc.delta_h_r_um.size() == 5);
  CHECK(doc.delta_h_r_um.front() == doctest::Approx(-1.0));
  CHECK(doc.delta_h_g_um.back() == doctest::Approx(2.0));
  CHECK(doc.worst_log_dec.size() == 5);
  CHECK(doc.worst_log_dec[0].size() == 5);
  CHECK_FALSE(doc.worst_log_dec[0][0]);
  CHECK_FALSE(doc.valid[4][4]);
  CHECK(doc.failures.size() == 4);
  CHECK(doc.nominal.size() == 2);
  const std::string text = export_contours(doc);
  const ContourDocument back = parse_contours(text);
  CHECK(back == doc);
  CHECK(export_contours(back) == text);
  CHECK_THROWS_AS(parse_contours("{\"format\": \"other\"}"), Error);
  CHECK_THROWS_AS(parse_contours("not json"), Error);
}

TEST_CASE("design digest tracks the design") {
  Design d = reference_design();
  const std::string a = design_digest(d);
  CHECK(a.size() == 64);
  CHECK(design_digest(d) == a);
  d.bearing.h_r *= 1.01;
  CHECK(design_digest(d) != a);
}

TEST_CASE("spec validation") {
  const Design d = reference_design();
  SweepSpec s = spec_of(21, {1e5});
  CHECK_NOTHROW(validate(s, d));
  s.tolerance.delta_h_r = d.bearing.h_r;
  CHECK_THROWS_AS(validate(s, d), Error);
  s = spec_of(0, {1e5});
  CHECK_THROWS_AS(validate(s, d), Error);
  s = spec_of(5, {1e5, 9e4});
  CHECK_THROWS_AS(validate(s, d), Error);
  s = spec_of(5, {});
  CHECK_THROWS_AS(validate(s, d), Error);
  s = spec_of(5, {1e5});
  s.tolerance.delta_h_g = -1e-6;
  CHECK_THROWS_AS(validate(s, d), Error);
  CHECK(evaluator_from("oracle") == EvaluatorKind::oracle);
  CHECK_THROWS_AS(evaluator_from("gpu"), Error);
}
