#pragma once

#include <random>
#include <string>
#include <vector>

#include "pshield/estimator.hpp"
#include "pshield/synth.hpp"

namespace pshield {

struct SupportNotWinning : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EmptyMask : std::logic_error {
    using std::logic_error::logic_error;
};

/// When (with what probability) the shield is applied, per episode index.
struct ShieldSchedule {
    enum class Kind { AlwaysOn, SuddenOff, SmoothOff, FixedProbability };
    Kind kind = Kind::AlwaysOn;
    int k0 = 0;          // sudden-off / smooth-off switch episode
    double alpha = 0.0;  // smooth-off per-episode decay
    double p = 1.0;      // fixed-probability

    double probability(int episode) const;

    static ShieldSchedule always_on() { return {}; }
    static ShieldSchedule off() { return fixed(0.0); }
    static ShieldSchedule sudden_off(int k0);
    static ShieldSchedule smooth_off(int k0, double alpha);
    static ShieldSchedule fixed(double p);

    /// Parses "always-on" | "off" | "sudden:K" | "smooth:K:ALPHA" | "prob:P".
    static ShieldSchedule parse(const std::string& text);
    std::string describe() const;
};

/// Per-episode violation flags, tallied separately for the training phase and
/// the post-training evaluation phase. At most one violation per episode.
struct ViolationLedger {
    long during_training = 0;
    long after_training = 0;
    long episodes_during = 0;
    long episodes_after = 0;

    enum class Phase { During, After };
    void record_episode(bool violated, Phase phase);
};

/// offered ∩ ν(b) when the shield is active, offered otherwise.
/// Throws SupportNotWinning when b has no table entry while active, and
/// EmptyMask if the intersection is empty (shield-closure breach).
std::vector<int> mask_actions(const Shield& sh, const BeliefSupport& b,
                              const std::vector<int>& offered, bool active);

struct EpisodeTrace {
    std::vector<int> states;
    std::vector<int> observations;
    std::vector<int> actions;
    double sparse_return = 0.0;
    bool violated = false;   // visited an AVOID state
    bool reached = false;    // visited a REACH state
    bool left_region = false;  // support fell outside the shield table
    int steps = 0;
};

/// Per-step decision context handed to a policy.
struct StepContext {
    const Pomdp* model;
    const BeliefSupport* support;
    int observation;
    const std::vector<int>* offered;  // at the support
    const std::vector<int>* allowed;  // after masking
    bool shield_active;
    int step;
};

class Policy {
  public:
    virtual ~Policy() = default;
    virtual int act(const StepContext& ctx, std::mt19937_64& rng) = 0;
    virtual void begin_episode() {}
    /// Called after the environment advanced; learn_reward includes any
    /// potential-based shaping term.
    virtual void on_step(const StepContext& ctx, int action, double learn_reward) {
        (void)ctx;
        (void)action;
        (void)learn_reward;
    }
    virtual void end_episode() {}
};

/// Fair admissible baseline: uniform over the allowed set.
class UniformRandomPolicy final : public Policy {
  public:
    int act(const StepContext& ctx, std::mt19937_64& rng) override;
};

struct SimulatorConfig {
    const Shield* shield = nullptr;  // nullptr = never shielded
    double shield_probability = 1.0;  // per-step coin when a shield is present
    int episode_cap = 100;
    bool record_states = false;
    bool stop_on_absorbing = true;  // end the episode in absorbing zero-reward states
    const std::vector<double>* potential = nullptr;  // per-state shaping potential
    // Track supports against this model instead of the world model (same
    // vocabularies required). Lets a shield built for an overapproximation
    // run against the true dynamics.
    const Pomdp* estimator_model = nullptr;
};

/// Samples one episode of the POMDP. The estimator tracks the support; the
/// shield (if any and if the per-step coin lands active) masks the offered
/// actions. Leaving the winning region while unshielded makes the shield
/// abstain for the rest of the episode.
EpisodeTrace run_episode(const Pomdp& m, const Specification& spec, Policy& policy,
                         const SimulatorConfig& cfg, std::mt19937_64& rng);

/// Shielded uniform-random rollouts (fair and admissible).
EpisodeTrace shielded_random_episode(const Pomdp& m, const Specification& spec,
                                     const Shield& sh, int episode_cap,
                                     std::mt19937_64& rng);

int sample_categorical(const std::vector<std::pair<int, double>>& row,
                       std::mt19937_64& rng);

}  // namespace pshield
