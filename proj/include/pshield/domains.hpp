#pragma once

#include <map>
#include <string>
#include <vector>

#include "pshield/model.hpp"

namespace pshield {

struct UnsupportedParameter : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct VariantMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class RewardVariant { Sparse, DenseShaped };

struct DomainConfig {
    std::string name;  // refuel|obstacle|avoid|evade|intercept|rocks
    int grid_size = 6;
    int radius = 2;       // evade/avoid/intercept
    int energy = 8;       // refuel
    int episode_cap = 0;  // 0 = domain default
    RewardVariant reward_variant = RewardVariant::Sparse;

    /// Appendix-default parameters for a domain name.
    static DomainConfig defaults(const std::string& name);
    void validate() const;
};

struct GeneratedDomain {
    std::string name;
    Pomdp pomdp;
    Specification spec;
    double norm_offset = 0.0;
    double norm_scale = 1.0;
    int episode_cap = 100;
    RewardVariant reward_variant = RewardVariant::Sparse;
    // Negated Manhattan distance to the domain's shaped target, per state;
    // zero on terminal states.
    std::vector<double> dense_potential;
};

/// Deterministic in (name, parameters): identical configs produce identical
/// models.
GeneratedDomain generate(const DomainConfig& cfg);

/// (raw + offset) / scale; maps the known optimal return into (0, 1].
double normalize_return(const GeneratedDomain& d, double raw_return);

/// Expected shaped reward R(s,a) + E[phi(s')] - phi(s). The learning harness
/// applies the realized-successor form via the simulator's potential hook;
/// evaluation always uses the sparse reward.
double dense_reward(const GeneratedDomain& d, int s, int a);

const std::vector<std::string>& domain_names();

}  // namespace pshield
