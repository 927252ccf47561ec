#include "gasrotor/rotor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "gasrotor/error.hpp"

namespace gasrotor {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string element_path(std::size_t i) { return "elements[" + std::to_string(i) + "]"; }

std::string layer_path(std::size_t i, std::size_t k) {
  return element_path(i) + ".layers[" + std::to_string(k) + "]";
}

[[noreturn]] void reject(const std::string& path, const std::string& what) {
  throw Error(errc::invalid_rotor, path + ": " + what, path);
}

double require_number(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) throw Error(errc::invalid_rotor, path + ": missing field '" + key + "'", path + "." + key);
  if (!it->is_number()) throw Error(errc::invalid_rotor, path + "." + key + ": expected a number", path + "." + key);
  return it->get<double>();
}

std::optional<std::size_t> optional_index(const json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) return std::nullopt;
  if (!it->is_number_integer() || it->get<long long>() < 0)
    throw Error(errc::invalid_rotor, std::string(key) + ": expected a non-negative integer element index", key);
  return static_cast<std::size_t>(it->get<long long>());
}

}  // namespace

double Rotor::length() const noexcept {
  double total = 0.0;
  for (const auto& e : elements) total += e.L;
  return total;
}

MaterialRegistry MaterialRegistry::defaults() {
  MaterialRegistry r;
  r.add("steel", 7800.0);
  r.add("titanium", 4500.0);
  r.add("ceramic", 3200.0);
  return r;
}

void MaterialRegistry::add(std::string name, double density) {
  if (!(density > 0.0)) throw Error(errc::invalid_argument, "material '" + name + "': density must be positive");
  densities_[std::move(name)] = density;
}

double MaterialRegistry::density(std::string_view name) const {
  auto it = densities_.find(name);
  if (it == densities_.end()) throw Error(errc::unknown_material, "unknown material '" + std::string(name) + "'");
  return it->second;
}

bool MaterialRegistry::contains(std::string_view name) const { return densities_.find(name) != densities_.end(); }

void validate(const Rotor& rotor) {
  if (rotor.elements.empty()) reject("elements", "rotor has no elements");
  for (std::size_t i = 0; i < rotor.elements.size(); ++i) {
    const auto& e = rotor.elements[i];
    if (!(e.L > 0.0) || !std::isfinite(e.L)) reject(element_path(i) + ".L_m", "length must be positive");
    if (e.layers.empty() || e.layers.size() > 3) reject(element_path(i) + ".layers", "an element carries 1 to 3 layers");
    for (std::size_t k = 0; k < e.layers.size(); ++k) {
      const auto& l = e.layers[k];
      const auto p = layer_path(i, k);
      if (!std::isfinite(l.d_inner) || l.d_inner < 0.0) reject(p + ".d_m", "inner diameter must be >= 0");
      if (!std::isfinite(l.D_outer) || !(l.D_outer > l.d_inner))
        reject(p + ".D_m", "outer diameter must exceed inner diameter");
      if (!(l.density > 0.0) || !std::isfinite(l.density)) reject(p + ".rho_kg_m3", "density must be positive");
      if (k > 0 && l.d_inner != e.layers[k - 1].D_outer)
        reject(p + ".d_m", "layer must start at the previous layer's outer diameter");
    }
  }
  const auto n = rotor.elements.size();
  auto check_index = [n](const std::optional<std::size_t>& idx, const char* name) {
    if (idx && *idx >= n) reject(name, "element index " + std::to_string(*idx) + " out of range");
  };
  check_index(rotor.journal_a, "journal_a");
  check_index(rotor.journal_b, "journal_b");
  check_index(rotor.thrust, "thrust");
  if (rotor.has_journals()) {
    if (*rotor.journal_a == *rotor.journal_b) reject("journal_b", "journal_b must differ from journal_a");
    if (*rotor.journal_a > *rotor.journal_b) reject("journal_b", "journal_a must lie left of journal_b");
  }
  if (rotor.thrust && ((rotor.journal_a && *rotor.thrust == *rotor.journal_a) ||
                       (rotor.journal_b && *rotor.thrust == *rotor.journal_b)))
    reject("thrust", "thrust element must differ from the journals");
}

Rotor parse_rotor(std::string_view text, const MaterialRegistry& materials) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(errc::parse_error, std::string("rotor document syntax error at byte ") + std::to_string(e.byte) + ": " +
                                       e.what());
  }
  if (!doc.is_object()) throw Error(errc::parse_error, "rotor document must be an object");

  auto ver = doc.find("format_version");
  if (ver == doc.end() || !ver->is_number_integer())
    throw Error(errc::invalid_rotor, "missing integer format_version", "format_version");
  if (ver->get<int>() != kRotorFormatVersion)
    throw Error(errc::invalid_rotor, "unsupported format_version " + std::to_string(ver->get<int>()),
                "format_version");

  auto els = doc.find("elements");
  if (els == doc.end() || !els->is_array()) throw Error(errc::invalid_rotor, "missing elements array", "elements");

  Rotor rotor;
  for (std::size_t i = 0; i < els->size(); ++i) {
    const auto& je = (*els)[i];
    const auto ep = element_path(i);
    if (!je.is_object()) throw Error(errc::invalid_rotor, ep + ": expected an object", ep);
    RotorElement e;
    e.L = require_number(je, "L_m", ep);
    auto jl = je.find("layers");
    if (jl == je.end() || !jl->is_array()) throw Error(errc::invalid_rotor, ep + ": missing layers", ep + ".layers");
    for (std::size_t k = 0; k < jl->size(); ++k) {
      const auto& jlay = (*jl)[k];
      const auto lp = layer_path(i, k);
      Layer l;
      l.d_inner = require_number(jlay, "d_m", lp);
      l.D_outer = require_number(jlay, "D_m", lp);
      auto mat = jlay.find("material");
      auto rho = jlay.find("rho_kg_m3");
      if (rho != jlay.end()) {
        if (!rho->is_number()) throw Error(errc::invalid_rotor, lp + ".rho_kg_m3: expected a number", lp + ".rho_kg_m3");
        l.density = rho->get<double>();
      } else if (mat != jlay.end()) {
        if (!mat->is_string()) throw Error(errc::invalid_rotor, lp + ".material: expected a string", lp + ".material");
        const auto name = mat->get<std::string>();
        if (!materials.contains(name))
          throw Error(errc::unknown_material, lp + ".material: unknown material '" + name + "'", lp + ".material");
        l.density = materials.density(name);
        l.material = name;
      } else {
        throw Error(errc::invalid_rotor, lp + ": needs 'material' or 'rho_kg_m3'", lp);
      }
      e.layers.push_back(std::move(l));
    }
    rotor.elements.push_back(std::move(e));
  }
  rotor.journal_a = optional_index(doc, "journal_a");
  rotor.journal_b = optional_index(doc, "journal_b");
  rotor.thrust = optional_index(doc, "thrust");
  validate(rotor);
  return rotor;
}

std::string serialize_rotor(const Rotor& rotor) {
  ordered_json doc;
  doc["format_version"] = kRotorFormatVersion;
  ordered_json els = ordered_json::array();
  for (const auto& e : rotor.elements) {
    ordered_json je;
    je["L_m"] = e.L;
    ordered_json layers = ordered_json::array();
    for (const auto& l : e.layers) {
      ordered_json jl;
      jl["d_m"] = l.d_inner;
      jl["D_m"] = l.D_outer;
      if (l.material)
        jl["material"] = *l.material;
      else
        jl["rho_kg_m3"] = l.density;
      layers.push_back(std::move(jl));
    }
    je["layers"] = std::move(layers);
    els.push_back(std::move(je));
  }
  doc["elements"] = std::move(els);
  if (rotor.journal_a) doc["journal_a"] = *rotor.journal_a;
  if (rotor.journal_b) doc["journal_b"] = *rotor.journal_b;
  if (rotor.thrust) doc["thrust"] = *rotor.thrust;
  return doc.dump(2) + "\n";
}

double element_midplane(const Rotor& rotor, std::size_t index) {
  double z = 0.0;
  for (std::size_t i = 0; i < index; ++i) z += rotor.elements[i].L;
  return z + 0.5 * rotor.elements.at(index).L;
}

MassProperties mass_properties(const Rotor& rotor) {
  validate(rotor);
  constexpr double quarter_pi = std::numbers::pi / 4.0;

  struct Piece {
    double mass, z_mid, I_own;
  };
  std::vector<Piece> pieces;
  MassProperties mp;
  double first_moment = 0.0;
  double z_left = 0.0;
  for (const auto& e : rotor.elements) {
    const double z_mid = z_left + 0.5 * e.L;
    double m_el = 0.0, I_own = 0.0;
    for (const auto& l : e.layers) {
      const double D2 = l.D_outer * l.D_outer;
      const double d2 = l.d_inner * l.d_inner;
      const double m = l.density * quarter_pi * (D2 - d2) * e.L;
      m_el += m;
      mp.I_polar += m * (D2 + d2) / 8.0;
      I_own += m * ((D2 + d2) / 16.0 + e.L * e.L / 12.0);
    }
    mp.mass += m_el;
    first_moment += m_el * z_mid;
    pieces.push_back({m_el, z_mid, I_own});
    z_left += e.L;
  }
  mp.z_cg = first_moment / mp.mass;
  for (const auto& p : pieces) {
    const double dz = p.z_mid - mp.z_cg;
    mp.I_transverse += p.I_own + p.mass * dz * dz;
  }
  if (rotor.has_journals()) {
    mp.z1 = element_midplane(rotor, *rotor.journal_a) - mp.z_cg;
    mp.z2 = element_midplane(rotor, *rotor.journal_b) - mp.z_cg;
  }
  return mp;
}

Rotor update_element(const Rotor& rotor, std::size_t index, std::string_view field, double value) {
  if (index >= rotor.elements.size())
    throw Error(errc::out_of_range, "element index " + std::to_string(index) + " out of range", element_path(index));
  Rotor edited = rotor;
  auto& e = edited.elements[index];
  const auto ep = element_path(index);
  if (field == "L_m") {
    e.L = value;
  } else if (field.starts_with("layers[")) {
    const auto close = field.find(']');
    std::size_t k = 0;
    try {
      k = std::stoul(std::string(field.substr(7, close - 7)));
    } catch (const std::exception&) {
      throw Error(errc::invalid_argument, "malformed field '" + std::string(field) + "'", ep);
    }
    if (close == std::string_view::npos || k >= e.layers.size())
      throw Error(errc::out_of_range, "layer index out of range in '" + std::string(field) + "'", ep);
    auto& l = e.layers[k];
    const auto leaf = field.substr(close + 1);
    if (leaf == ".d_m") {
      l.d_inner = value;
    } else if (leaf == ".D_m") {
      l.D_outer = value;
    } else if (leaf == ".rho_kg_m3") {
      l.density = value;
      l.material.reset();
    } else {
      throw Error(errc::invalid_argument, "unknown field '" + std::string(field) + "'", ep);
    }
  } else {
    throw Error(errc::invalid_argument, "unknown field '" + std::string(field) + "'", ep);
  }
  validate(edited);
  return edited;
}

Rotor assign_bearing(const Rotor& rotor, BearingSlot slot, std::optional<std::size_t> index) {
  Rotor edited = rotor;
  switch (slot) {
    case BearingSlot::journal_a: edited.journal_a = index; break;
    case BearingSlot::journal_b: edited.journal_b = index; break;
    case BearingSlot::thrust: edited.thrust = index; break;
  }
  validate(edited);
  return edited;
}

}  // namespace gasrotor
