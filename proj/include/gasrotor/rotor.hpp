#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gasrotor {

/// One annulus of a cylindrical element. Diameters in m, density in kg/m^3.
/// `material` keeps the registry name when the density was resolved from one.
struct Layer {
  double d_inner = 0.0;
  double D_outer = 0.0;
  double density = 0.0;
  std::optional<std::string> material;

  bool operator==(const Layer&) const = default;
};

/// A cylinder of length L with 1-3 contiguous layers ordered inside-out.
struct RotorElement {
  double L = 0.0;
  std::vector<Layer> layers;

  bool operator==(const RotorElement&) const = default;
};

/// Elements stack left to right starting at the rotor's left face (z = 0).
/// Journal assignments are optional so a bare geometry can be loaded and
/// edited; dynamic evaluation requires both.
struct Rotor {
  std::vector<RotorElement> elements;
  std::optional<std::size_t> journal_a;
  std::optional<std::size_t> journal_b;
  std::optional<std::size_t> thrust;

  bool operator==(const Rotor&) const = default;

  bool has_journals() const noexcept { return journal_a.has_value() && journal_b.has_value(); }
  double length() const noexcept;
};

struct MassProperties {
  double mass = 0.0;          // kg
  double z_cg = 0.0;          // m from the left face
  double I_polar = 0.0;       // kg m^2
  double I_transverse = 0.0;  // kg m^2 about the CG
  // Journal midplanes relative to the CG; present when both journals are set.
  std::optional<double> z1;
  std::optional<double> z2;
};

class MaterialRegistry {
 public:
  /// steel 7800, titanium 4500, ceramic 3200 kg/m^3.
  static MaterialRegistry defaults();

  void add(std::string name, double density);
  double density(std::string_view name) const;
  bool contains(std::string_view name) const;

 private:
  std::map<std::string, double, std::less<>> densities_;
};

inline constexpr int kRotorFormatVersion = 1;

Rotor parse_rotor(std::string_view text, const MaterialRegistry& materials = MaterialRegistry::defaults());
std::string serialize_rotor(const Rotor& rotor);

/// Throws Error{invalid_rotor} naming the first offending field.
void validate(const Rotor& rotor);

MassProperties mass_properties(const Rotor& rotor);

/// Editable per-element fields: "L_m", "layers[k].d_m", "layers[k].D_m",
/// "layers[k].rho_kg_m3". Returns the edited copy; the input is never touched.
Rotor update_element(const Rotor& rotor, std::size_t index, std::string_view field, double value);

enum class BearingSlot { journal_a, journal_b, thrust };

/// Assigns (or clears, with nullopt) a bearing slot and re-validates.
Rotor assign_bearing(const Rotor& rotor, BearingSlot slot, std::optional<std::size_t> index);

/// Axial position of an element's midplane from the left face.
double element_midplane(const Rotor& rotor, std::size_t index);

}  // namespace gasrotor
