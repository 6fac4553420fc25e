#pragma once

#include <vector>

#include "pshield/model.hpp"

namespace pshield {

struct EmptySupport : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnavailableAction : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ZeroProbabilityObservation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Sorted, duplicate-free set of state ids with positive belief probability.
using BeliefSupport = std::vector<int>;

/// Sparse belief distribution, sorted by state id, entries > 0, sums to 1.
using Belief = std::vector<std::pair<int, double>>;

/// { s : I(s) > 0 and O(z0|s) > 0 }. Throws EmptySupport when z0 is
/// inconsistent with the initial distribution.
BeliefSupport initial_support(const Pomdp& m, int z0);

/// All distinct initial supports, one per observation consistent with I,
/// ordered by observation id.
std::vector<BeliefSupport> all_initial_supports(const Pomdp& m);

/// The unique successor support (B' | B, a, z): possible successors of B
/// under a that emit z. Probability-free.
BeliefSupport update_support(const Pomdp& m, const BeliefSupport& b, int a, int z);

/// Actions offered at a support: available at every member state.
std::vector<int> offered_actions(const Pomdp& m, const BeliefSupport& b);

/// Exact Bayesian filter step: b'(s') ∝ O(z|s') Σ_s P(s'|s,a) b(s).
Belief bayes_update(const Pomdp& m, const Belief& b, int a, int z);

Belief initial_belief(const Pomdp& m, int z0);

BeliefSupport belief_support_of(const Belief& b);

/// Bit vector encoding of a support, for RL input representations.
std::vector<int> support_feature_vector(const BeliefSupport& b, int n_states);

/// Belief-support state estimator: tracks the current support along an
/// observation-action trace. One instance per rollout; resets per episode.
class Estimator {
  public:
    explicit Estimator(const Pomdp& m, bool track_belief = false)
        : model_(&m), track_belief_(track_belief) {}

    void reset(int z0);
    void step(int a, int z);

    const BeliefSupport& support() const { return support_; }
    const Belief& belief() const { return belief_; }
    int history_length() const { return history_length_; }

  private:
    const Pomdp* model_;
    bool track_belief_;
    BeliefSupport support_;
    Belief belief_;
    int history_length_ = 0;
};

}  // namespace pshield
