#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "gasrotor/error.hpp"
#include "gasrotor/rotor.hpp"

using namespace gasrotor;
using std::numbers::pi;

namespace {

std::string element(double L, double d, double D, double rho) {
  return "{\"L_m\": " + std::to_string(L) + ", \"layers\": [{\"d_m\": " + std::to_string(d) +
         ", \"D_m\": " + std::to_string(D) + ", \"rho_kg_m3\": " + std::to_string(rho) + "}]}";
}

std::string document(const std::string& elements, const std::string& tail = "") {
  return "{\"format_version\": 1, \"elements\": [" + elements + "]" + tail + "}";
}

Rotor solid(double L, double D, double rho) {
  Rotor r;
  r.elements.push_back({L, {{0.0, D, rho, std::nullopt}}});
  return r;
}

std::string code_of(const auto& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal document parses to one element") {
  const Rotor r = parse_rotor(document(element(0.01, 0.0, 0.01, 7800.0)));
  CHECK(r.elements.size() == 1);
  CHECK(r.elements[0].layers[0].density == 7800.0);
}

TEST_CASE("layer with D_outer <= d_inner is rejected") {
  CHECK(code_of([] { parse_rotor(document(element(0.01, 0.01, 0.008, 7800.0))); }) == errc::invalid_rotor);
  try {
    parse_rotor(document(element(0.01, 0.0, 0.01, 7800.0) + "," + element(0.01, 0.01, 0.01, 7800.0)));
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.path().find("elements[1]") != std::string::npos);
  }
}

TEST_CASE("three contiguous layers parse, a radial gap does not") {
  const std::string ok = R"({"format_version": 1, "elements": [{"L_m": 0.02, "layers": [
      {"d_m": 0.0, "D_m": 0.005, "material": "steel"},
      {"d_m": 0.005, "D_m": 0.008, "material": "titanium"},
      {"d_m": 0.008, "D_m": 0.012, "rho_kg_m3": 2000}]}]})";
  CHECK(parse_rotor(ok).elements[0].layers.size() == 3);
  const std::string gap = R"({"format_version": 1, "elements": [{"L_m": 0.02, "layers": [
      {"d_m": 0.0, "D_m": 0.005, "material": "steel"},
      {"d_m": 0.006, "D_m": 0.008, "material": "titanium"}]}]})";
  CHECK(code_of([&] { parse_rotor(gap); }) == errc::invalid_rotor);
}

TEST_CASE("syntax errors, unknown materials and bad versions") {
  CHECK(code_of([] { parse_rotor("{\"format_version\": 1, \"elements\": [}"); }) == errc::parse_error);
  CHECK(code_of([] {
          parse_rotor(R"({"format_version": 1, "elements": [{"L_m": 0.01, "layers": [{"d_m": 0, "D_m": 0.01, "material": "unobtainium"}]}]})");
        }) == errc::unknown_material);
  CHECK(code_of([] { parse_rotor(R"({"format_version": 2, "elements": []})"); }) == errc::invalid_rotor);
}

TEST_CASE("solid and hollow cylinder mass properties") {
  const double rho = 8000.0, L = 0.1, D = 0.02;
  const MassProperties mp = mass_properties(solid(L, D, rho));
  const double m = rho * pi / 4.0 * D * D * L;
  CHECK(mp.mass == doctest::Approx(m).epsilon(1e-14));
  CHECK(mp.mass == doctest::Approx(0.2513).epsilon(1e-3));
  CHECK(mp.I_polar == doctest::Approx(m * D * D / 8.0).epsilon(1e-14));
  CHECK(mp.I_polar == doctest::Approx(1.257e-5).epsilon(1e-3));
  CHECK(mp.I_transverse == doctest::Approx(m * (3.0 * D * D / 4.0 + L * L) / 12.0).epsilon(1e-14));
  CHECK(mp.I_transverse == doctest::Approx(2.157e-4).epsilon(1e-3));
  CHECK(mp.z_cg == doctest::Approx(L / 2.0));

  Rotor hollow;
  hollow.elements.push_back({L, {{0.01, D, rho, std::nullopt}}});
  CHECK(mass_properties(hollow).mass == doctest::Approx(rho * pi / 4.0 * (D * D - 1e-4) * L).epsilon(1e-14));
  CHECK(mass_properties(hollow).mass == doctest::Approx(0.1885).epsilon(1e-3));
}

TEST_CASE("two identical elements put the CG on their interface") {
  Rotor r = solid(0.03, 0.01, 7800.0);
  r.elements.push_back(r.elements[0]);
  CHECK(mass_properties(r).z_cg == 0.03);
}

TEST_CASE("solid cylinders with L^2 >= 3R^2 have I_polar <= I_transverse") {
  for (double D : {0.005, 0.01, 0.02, 0.04}) {
    const double R = D / 2.0;
    for (double f : {1.0, 1.5, 3.0, 10.0}) {
      const double L = std::sqrt(3.0) * R * f;
      const MassProperties mp = mass_properties(solid(L, D, 7800.0));
      CHECK(mp.mass > 0.0);
      CHECK(mp.I_polar > 0.0);
      CHECK(mp.I_polar <= mp.I_transverse * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("splitting an element leaves mass properties unchanged") {
  const Rotor full = parse_rotor(R"({"format_version": 1, "elements": [
      {"L_m": 0.01, "layers": [{"d_m": 0, "D_m": 0.012, "material": "steel"}]},
      {"L_m": 0.04, "layers": [{"d_m": 0, "D_m": 0.006, "material": "steel"}, {"d_m": 0.006, "D_m": 0.01, "material": "titanium"}]},
      {"L_m": 0.005, "layers": [{"d_m": 0.002, "D_m": 0.02, "material": "ceramic"}]}]})");
  const MassProperties a = mass_properties(full);
  for (std::size_t k = 0; k < full.elements.size(); ++k) {
    Rotor split = full;
    RotorElement half = split.elements[k];
    half.L /= 2.0;
    split.elements[k] = half;
    split.elements.insert(split.elements.begin() + static_cast<std::ptrdiff_t>(k), half);
    const MassProperties b = mass_properties(split);
    CHECK(b.mass == doctest::Approx(a.mass).epsilon(1e-12));
    CHECK(b.z_cg == doctest::Approx(a.z_cg).epsilon(1e-12));
    CHECK(b.I_polar == doctest::Approx(a.I_polar).epsilon(1e-12));
    CHECK(std::abs(b.I_transverse - a.I_transverse) <= 1e-12 * a.I_transverse);
  }
}

TEST_CASE("reversing the element order mirrors the CG") {
  const Rotor r = parse_rotor(R"({"format_version": 1, "elements": [
      {"L_m": 0.01, "layers": [{"d_m": 0, "D_m": 0.012, "material": "steel"}]},
      {"L_m": 0.03, "layers": [{"d_m": 0, "D_m": 0.008, "material": "titanium"}]},
      {"L_m": 0.004, "layers": [{"d_m": 0, "D_m": 0.02, "material": "ceramic"}]}]})");
  Rotor rev = r;
  std::reverse(rev.elements.begin(), rev.elements.end());
  const MassProperties a = mass_properties(r), b = mass_properties(rev);
  CHECK(b.z_cg == doctest::Approx(r.length() - a.z_cg).epsilon(1e-14));
  CHECK(b.mass == doctest::Approx(a.mass).epsilon(1e-15));
  CHECK(b.I_polar == doctest::Approx(a.I_polar).epsilon(1e-15));
  CHECK(b.I_transverse == doctest::Approx(a.I_transverse).epsilon(1e-13));
}

TEST_CASE("serialize then parse is the identity") {
  const Rotor r = parse_rotor(R"({"format_version": 1, "elements": [
      {"L_m": 0.006, "layers": [{"d_m": 0, "D_m": 0.01, "material": "steel"}]},
      {"L_m": 0.01, "layers": [{"d_m": 0, "D_m": 0.006, "rho_kg_m3": 7321.5}, {"d_m": 0.006, "D_m": 0.01, "material": "titanium"}]},
      {"L_m": 0.02, "layers": [{"d_m": 0, "D_m": 0.01, "material": "steel"}]},
      {"L_m": 0.01, "layers": [{"d_m": 0, "D_m": 0.01, "material": "steel"}]}],
      "journal_a": 1, "journal_b": 3, "thrust": 0})");
  CHECK(parse_rotor(serialize_rotor(r)) == r);
  CHECK(serialize_rotor(parse_rotor(serialize_rotor(r))) == serialize_rotor(r));
}

TEST_CASE("update_element edits a copy and re-validates") {
  const Rotor r = solid(0.01, 0.01, 7800.0);
  const Rotor longer = update_element(r, 0, "L_m", 0.02);
  CHECK(mass_properties(longer).mass == doctest::Approx(2.0 * mass_properties(r).mass).epsilon(1e-14));
  CHECK(r.elements[0].L == 0.01);

  Rotor hollow;
  hollow.elements.push_back({0.01, {{0.004, 0.01, 7800.0, std::nullopt}}});
  CHECK(code_of([&] { update_element(hollow, 0, "layers[0].D_m", 0.003); }) == errc::invalid_rotor);
  CHECK(hollow.elements[0].layers[0].D_outer == 0.01);
  CHECK(code_of([&] { update_element(r, 3, "L_m", 0.02); }) == errc::out_of_range);
}

TEST_CASE("journal assignments must be distinct and ordered") {
  Rotor r = solid(0.01, 0.01, 7800.0);
  r.elements.push_back(r.elements[0]);
  r.elements.push_back(r.elements[0]);
  r = assign_bearing(r, BearingSlot::journal_a, 0);
  CHECK(code_of([&] { assign_bearing(r, BearingSlot::journal_b, 0); }) == errc::invalid_rotor);
  const Rotor ok = assign_bearing(r, BearingSlot::journal_b, 2);
  CHECK(ok.has_journals());
  const MassProperties mp = mass_properties(ok);
  REQUIRE(mp.z1);
  CHECK(*mp.z1 == doctest::Approx(-0.01));
  CHECK(*mp.z2 == doctest::Approx(0.01));
  CHECK(code_of([&] { assign_bearing(r, BearingSlot::journal_b, 7); }) == errc::invalid_rotor);
}
