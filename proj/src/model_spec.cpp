#include "ipgp/model_spec.hpp"

namespace ipgp {

Variant parse_variant(const std::string& name) {
  if (name == "IPGP") return Variant::IPGP;
  if (name == "IPGP-NOM") return Variant::NOM;
  if (name == "IPGP-IND") return Variant::IND;
  if (name == "IPGP-LOW") return Variant::LOW;
  if (name == "IPGP-NP") return Variant::NP;
  throw ConfigError("unknown model variant '" + name +
                    "' (expected IPGP, IPGP-NOM, IPGP-IND, IPGP-LOW or IPGP-NP)");
}

std::string variant_name(Variant variant) {
  switch (variant) {
    case Variant::IPGP: return "IPGP";
    case Variant::NOM: return "IPGP-NOM";
    case Variant::IND: return "IPGP-IND";
    case Variant::LOW: return "IPGP-LOW";
    case Variant::NP: return "IPGP-NP";
  }
  throw StructuralError("unreachable variant");
}

void ModelSpec::validate() const {
  if (num_levels < 2) {
    throw StructuralError("model spec: need at least 2 ordinal levels");
  }
  if (idiographic_rank != 0 && idiographic_rank != 1) {
    throw StructuralError("model spec: idiographic rank must be 0 or 1");
  }
  if (include_pop() && num_factors < 1) {
    throw StructuralError("model spec: population term requires at least 1 factor");
  }
  if (variant == Variant::NOM && idiographic_rank != 0) {
    throw StructuralError("IPGP-NOM must not carry an idiographic term");
  }
  if (variant != Variant::NOM && idiographic_rank != 1) {
    throw StructuralError(variant_name(variant) + " requires the idiographic term");
  }
  if ((variant == Variant::IPGP || variant == Variant::LOW) &&
      w_pop_mode != WPopMode::FrozenFromPrior) {
    throw StructuralError(variant_name(variant) +
                          " requires population loadings frozen from the prior stage");
  }
  if ((variant == Variant::NP || variant == Variant::NOM) && w_pop_mode != WPopMode::Free) {
    throw StructuralError(variant_name(variant) + " trains population loadings freely");
  }
}

ModelSpec make_model_spec(Variant variant, int num_factors, int num_levels) {
  ModelSpec spec;
  spec.variant = variant;
  spec.num_factors = num_factors;
  spec.num_levels = num_levels;
  switch (variant) {
    case Variant::IPGP:
    case Variant::LOW:
      spec.idiographic_rank = 1;
      spec.w_pop_mode = WPopMode::FrozenFromPrior;
      break;
    case Variant::NOM:
      spec.idiographic_rank = 0;
      spec.w_pop_mode = WPopMode::Free;
      break;
    case Variant::IND:
      spec.idiographic_rank = 1;
      spec.w_pop_mode = WPopMode::Free;
      break;
    case Variant::NP:
      spec.idiographic_rank = 1;
      spec.w_pop_mode = WPopMode::Free;
      break;
  }
  spec.validate();
  return spec;
}

}  // namespace ipgp
