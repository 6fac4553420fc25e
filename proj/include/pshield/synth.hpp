#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pshield/estimator.hpp"
#include "pshield/model.hpp"

namespace pshield {

struct SizeLimitExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PolicyIncomplete : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The belief-support MDP: all supports reachable from the initial supports,
/// with one successor per (action, observation) pair that has a nonempty
/// update. Bad and target nodes are terminal for synthesis and carry no edges.
struct SupportMdp {
    const Pomdp* model = nullptr;
    Specification spec;

    std::vector<BeliefSupport> nodes;   // index = node id
    std::vector<int> initial_nodes;     // sorted node ids
    std::vector<char> bad;              // B ∩ AVOID ≠ ∅
    std::vector<char> target;           // B ⊆ REACH (reach-avoid only)

    // edges[n]: per offered action, the sorted distinct successor node ids
    std::vector<std::vector<std::pair<int, std::vector<int>>>> edges;

    int find(const BeliefSupport& b) const;
    size_t size() const { return nodes.size(); }
};

inline constexpr size_t kDefaultNodeCap = size_t{1} << 22;

SupportMdp build_support_mdp(const Pomdp& m, const Specification& spec,
                             size_t max_nodes = kDefaultNodeCap);

/// Greatest winning region of a support MDP: the surviving nodes and, per
/// node, the maximal set of actions whose every successor stays winning.
struct WinningRegion {
    std::vector<char> winning;               // per node of the owning SupportMdp
    std::vector<std::vector<int>> allowed;   // per node, sorted action ids
    int rounds = 0;                          // fixpoint iterations until stable

    size_t count() const;
};

/// Nested fixpoint for reach-avoid: prune actions leading outside the region,
/// drop action-less non-targets, and prune actions that can step, for some
/// member state of the support, onto a (support, state) product node from
/// which no target support is reachable; repeat to stability. The product
/// step is what makes the region exact: a target path in the support graph
/// alone may hinge on an observation that one member state never produces.
/// Fair play of the resulting permissive table (every allowed action taken
/// with positive probability) then avoids AVOID surely and hits a target
/// support almost surely from every winning node.
WinningRegion compute_winning_reach_avoid(const SupportMdp& g);

/// Safety-only fixpoint (no reachability step); target flags are ignored.
WinningRegion compute_winning_avoid(const SupportMdp& g);

/// Permissive policy over winning supports, keyed by sorted support.
struct Shield {
    Specification spec;
    uint64_t fingerprint = 0;
    std::map<BeliefSupport, std::vector<int>> table;

    // extraction metadata
    size_t explored_nodes = 0;
    std::vector<BeliefSupport> initial_supports;
    std::vector<BeliefSupport> initial_not_winning;

    bool contains(const BeliefSupport& b) const { return table.count(b) > 0; }
    const std::vector<int>* allowed(const BeliefSupport& b) const;
    bool initial_winning() const { return initial_not_winning.empty(); }
};

Shield extract_shield(const WinningRegion& w, const SupportMdp& g);

/// Convenience: build support MDP, run the fixpoint matching spec.kind,
/// extract the shield.
Shield synthesize_shield(const Pomdp& m, const Specification& spec,
                         size_t max_nodes = kDefaultNodeCap);

using SupportPolicy = std::map<BeliefSupport, int>;

/// Independent graph oracle: builds the product Markov chain of
/// (state, support) under the deterministic support policy and checks, by
/// reachability and BSCC analysis only, that no AVOID state is reachable and
/// (for reach-avoid) that a support contained in REACH is hit almost surely
/// (the same certainty-of-arrival criterion the synthesis targets use).
/// When `start` is
/// given the check runs from that support; otherwise from all initial
/// supports. Throws PolicyIncomplete if the policy misses a reachable support.
bool verify_winning_policy(const Pomdp& m, const SupportPolicy& policy,
                           const Specification& spec,
                           const std::optional<BeliefSupport>& start = std::nullopt);

/// Batched form of the same product analysis: for every listed support,
/// whether the policy (choice[i] = action for nodes[i], -1 = undefined) wins
/// from it. Used by the brute-force maximal-region oracle in tests.
std::vector<char> winning_nodes_under_policy(const Pomdp& m, const Specification& spec,
                                             const std::vector<BeliefSupport>& nodes,
                                             const std::vector<int>& choice);

/// Longest finite shortest-path distance between winning nodes along allowed
/// edges; a conservative measure of how long admissible runs can take.
int winning_graph_diameter(const SupportMdp& g, const WinningRegion& w);

std::string write_shield(const Shield& sh);
Shield read_shield(const std::string& text, const Pomdp& m);
void save_shield(const Shield& sh, const std::string& path);
Shield load_shield(const std::string& path, const Pomdp& m);

}  // namespace pshield
