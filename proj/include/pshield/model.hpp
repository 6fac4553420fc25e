#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pshield {

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kProbTolerance = 1e-9;

/// Explicit POMDP: dense integer ids for states/actions/observations,
/// sparse rows for the transition and observation functions.
class Pomdp {
  public:
    std::vector<std::string> state_names;
    std::vector<std::string> action_names;
    std::vector<std::string> obs_names;

    // initial distribution, sorted by state id, probabilities > 0
    std::vector<std::pair<int, double>> initial;

    // trans_row(s, a): sparse successor distribution, sorted by state id.
    // Rows for unavailable actions are empty.
    std::vector<std::vector<std::pair<int, double>>> trans;

    // obs[s]: distribution over observations emitted in state s (after the
    // transition lands there), sorted by observation id.
    std::vector<std::vector<std::pair<int, double>>> obs;

    // avail[s]: sorted, nonempty action ids
    std::vector<std::vector<int>> avail;

    // reward[s * num_actions + a]
    std::vector<double> reward;

    // named state subsets, sorted; at least "reach" and/or "avoid" for specs
    std::map<std::string, std::vector<int>> labels;

    int num_states() const { return static_cast<int>(state_names.size()); }
    int num_actions() const { return static_cast<int>(action_names.size()); }
    int num_obs() const { return static_cast<int>(obs_names.size()); }

    const std::vector<std::pair<int, double>>& trans_row(int s, int a) const {
        return trans[static_cast<size_t>(s) * num_actions() + a];
    }
    std::vector<std::pair<int, double>>& trans_row(int s, int a) {
        return trans[static_cast<size_t>(s) * num_actions() + a];
    }

    double reward_at(int s, int a) const {
        return reward[static_cast<size_t>(s) * num_actions() + a];
    }

    double obs_prob(int s, int z) const;
    bool emits(int s, int z) const { return obs_prob(s, z) > 0.0; }
    bool action_available(int s, int a) const;

    const std::vector<int>& label(const std::string& name) const;
    bool has_label(const std::string& name, int s) const;

    /// True for states every available action self-loops on with probability 1
    /// and zero reward; simulation ends there. Computed by validate().
    bool absorbing_zero(int s) const { return absorbing_zero_[s] != 0; }

    /// Checks all model invariants; throws ModelError naming the violated
    /// invariant. Distribution sums are normalized if within tolerance.
    void validate();

    /// Hash over the graph structure only: supports of P and O, availability,
    /// labels, vocabularies. Probability values do not contribute.
    uint64_t graph_fingerprint() const;

    void resize_tables();

  private:
    std::vector<char> absorbing_zero_;
};

struct Specification {
    enum class Kind { ReachAvoid, AvoidOnly };
    Kind kind = Kind::ReachAvoid;
    std::vector<int> reach;  // sorted
    std::vector<int> avoid;  // sorted

    bool is_reach_avoid() const { return kind == Kind::ReachAvoid; }
    void validate() const;
};

/// Builds a Specification from the model's "reach"/"avoid" labels.
Specification spec_from_labels(const Pomdp& m, Specification::Kind kind);

/// Parses the line-oriented model text format. Throws ParseError with a line
/// number on syntax errors, ModelError on invariant violations.
Pomdp parse_model(const std::string& text);
Pomdp load_model(const std::string& path);

/// Canonical text form; parse_model(serialize_model(m)) reproduces m.
std::string serialize_model(const Pomdp& m);

/// True iff m and m_prime have identical transition and observation supports
/// (same graph, arbitrary probabilities). Throws ModelError on vocabulary
/// mismatch.
bool is_graph_preserving(const Pomdp& m, const Pomdp& m_prime);

/// True iff every positive-probability transition (and observation) of m is
/// also positive in m_prime.
bool overapproximates(const Pomdp& m_prime, const Pomdp& m);

}  // namespace pshield
