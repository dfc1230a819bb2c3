#pragma once

#include <string>

#include "ipgp/common.hpp"

namespace ipgp {

// Model variants: the full two-stage model, the population-only baseline,
// and the three ablations (no population term, low-rank population term,
// population term trained from scratch instead of frozen to the prior).
enum class Variant { IPGP, NOM, IND, LOW, NP };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant variant);

enum class WPopMode { FrozenFromPrior, Free };

struct ModelSpec {
  Variant variant = Variant::IPGP;
  int num_factors = 5;
  int idiographic_rank = 1;  // 0 or 1
  WPopMode w_pop_mode = WPopMode::FrozenFromPrior;
  int num_levels = 5;

  bool include_pop() const { return variant != Variant::IND; }
  bool include_idio() const { return idiographic_rank > 0; }
  bool w_pop_frozen() const {
    return include_pop() && w_pop_mode == WPopMode::FrozenFromPrior;
  }

  void validate() const;
};

/// Wires the per-variant invariants (NOM has no idiographic term, IND no
/// population term, IPGP/LOW freeze the population loadings to a prior
/// estimate, NP trains them from scratch).
ModelSpec make_model_spec(Variant variant, int num_factors, int num_levels);

}  // namespace ipgp
