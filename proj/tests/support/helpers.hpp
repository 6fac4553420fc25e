#pragma once

// Shared fixtures and independent oracles for the test suite. The oracles are
// deliberately naive: plain enumeration and filtering, no reuse of the code
// under test.

#include <algorithm>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "pshield/estimator.hpp"
#include "pshield/model.hpp"
#include "pshield/synth.hpp"

namespace testsupport {

using namespace pshield;

inline const char* kT1 = R"(pomdp
states: 4
actions: a b
observations: u v w
start: 0:0.5 1:0.5
T: 0 a 1 1
T: 0 b 2 1
T: 1 a 3 1
T: 1 b 0 1
T: 2 a 2 1
T: 2 b 2 1
T: 3 a 3 1
T: 3 b 3 1
O: 0 u 1
O: 1 u 1
O: 2 v 1
O: 3 w 1
label reach: 3
label avoid: 2
)";

inline const char* kT2 = R"(pomdp
states: 4
actions: a b
observations: u v w
start: 0:0.5 1:0.5
T: 0 a 1 0.5
T: 0 a 2 0.5
T: 0 b 2 1
T: 1 a 3 1
T: 1 b 0 1
T: 2 a 2 1
T: 2 b 2 1
T: 3 a 3 1
T: 3 b 3 1
O: 0 u 1
O: 1 u 1
O: 2 v 1
O: 3 w 1
label reach: 3
label avoid: 2
)";

inline Pomdp t1() { return parse_model(kT1); }
inline Pomdp t2() { return parse_model(kT2); }

inline Specification t1_spec() { return spec_from_labels(t1(), Specification::Kind::ReachAvoid); }

// Random valid POMDP with reach/avoid labels. Observations are mostly
// deterministic so the support closure stays small.
inline Pomdp random_pomdp(std::mt19937_64& rng, int max_states = 8, int max_actions = 3,
                          int max_obs = 4) {
    std::uniform_int_distribution<int> ns(3, max_states), na(1, max_actions),
        nz(2, max_obs);
    int S = ns(rng), A = na(rng), Z = nz(rng);

    Pomdp m;
    for (int s = 0; s < S; ++s) m.state_names.push_back("s" + std::to_string(s));
    for (int a = 0; a < A; ++a) m.action_names.push_back("a" + std::to_string(a));
    for (int z = 0; z < Z; ++z) m.obs_names.push_back("z" + std::to_string(z));
    m.resize_tables();

    std::uniform_real_distribution<double> unit(0.05, 1.0);
    std::uniform_int_distribution<int> pick_s(0, S - 1), pick_z(0, Z - 1);
    std::uniform_int_distribution<int> fanout(1, 3);
    std::bernoulli_distribution coin(0.5), rare(0.15);

    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            if (a > 0 && rare(rng)) continue;  // action unavailable here
            m.avail[s].push_back(a);
            int k = fanout(rng);
            std::vector<int> succ;
            while (static_cast<int>(succ.size()) < k) {
                int t = pick_s(rng);
                if (std::find(succ.begin(), succ.end(), t) == succ.end()) succ.push_back(t);
            }
            std::sort(succ.begin(), succ.end());
            double total = 0.0;
            std::vector<double> w(succ.size());
            for (auto& x : w) total += (x = unit(rng));
            for (size_t i = 0; i < succ.size(); ++i)
                m.trans_row(s, a).emplace_back(succ[i], w[i] / total);
        }
        int z0 = pick_z(rng);
        if (rare(rng) && Z > 1) {
            int z1 = (z0 + 1) % Z;
            m.obs[s] = {{std::min(z0, z1), 0.5}, {std::max(z0, z1), 0.5}};
        } else {
            m.obs[s] = {{z0, 1.0}};
        }
    }

    // initial distribution over 1-2 states
    int i0 = pick_s(rng);
    if (coin(rng)) {
        int i1 = pick_s(rng);
        if (i1 != i0)
            m.initial = {{std::min(i0, i1), 0.5}, {std::max(i0, i1), 0.5}};
        else
            m.initial = {{i0, 1.0}};
    } else {
        m.initial = {{i0, 1.0}};
    }

    // disjoint nonempty reach/avoid, excluding initial states
    std::vector<int> rest;
    for (int s = 0; s < S; ++s) {
        bool init = false;
        for (auto& [i, p] : m.initial) init |= i == s;
        if (!init) rest.push_back(s);
    }
    std::shuffle(rest.begin(), rest.end(), rng);
    if (rest.size() < 2) return random_pomdp(rng, max_states, max_actions, max_obs);
    std::vector<int> reach = {rest[0]}, avoid = {rest[1]};
    std::sort(reach.begin(), reach.end());
    std::sort(avoid.begin(), avoid.end());
    m.labels["reach"] = reach;
    m.labels["avoid"] = avoid;
    m.validate();
    return m;
}

// Same graph, fresh probabilities on every stochastic row.
inline Pomdp perturb_probabilities(const Pomdp& m, std::mt19937_64& rng) {
    Pomdp out = m;
    std::uniform_real_distribution<double> unit(0.1, 1.0);
    auto rejitter = [&](std::vector<std::pair<int, double>>& row) {
        if (row.size() < 2) return;
        double total = 0.0;
        for (auto& [i, p] : row) total += (p = unit(rng));
        for (auto& [i, p] : row) p /= total;
    };
    for (auto& row : out.trans) rejitter(row);
    for (auto& row : out.obs) rejitter(row);
    rejitter(out.initial);
    return out;
}

// Adds a few extra transition edges (support superset, probabilities shifted).
inline Pomdp widen_transitions(const Pomdp& m, std::mt19937_64& rng) {
    Pomdp out = m;
    std::uniform_int_distribution<int> pick_s(0, m.num_states() - 1);
    std::bernoulli_distribution add(0.3);
    for (int s = 0; s < m.num_states(); ++s) {
        for (int a : m.avail[s]) {
            auto& row = out.trans_row(s, a);
            if (!add(rng)) continue;
            int extra = pick_s(rng);
            bool present = false;
            for (auto& [t, p] : row) present |= t == extra;
            if (present) continue;
            for (auto& [t, p] : row) p *= 0.9;
            row.emplace_back(extra, 0.1);
            std::sort(row.begin(), row.end());
        }
    }
    out.validate();
    return out;
}

// Brute-force one-step support update: scan every state of the model.
inline BeliefSupport oracle_update(const Pomdp& m, const BeliefSupport& b, int a, int z) {
    BeliefSupport out;
    for (int t = 0; t < m.num_states(); ++t) {
        if (!m.emits(t, z)) continue;
        bool reachable = false;
        for (int s : b) {
            if (!m.action_available(s, a)) continue;
            for (const auto& [succ, p] : m.trans_row(s, a)) reachable |= succ == t;
        }
        if (reachable) out.push_back(t);
    }
    return out;
}

// Exhaustive permissive-table enumeration over the support MDP: a table maps
// every node to a nonempty subset of its offered actions and is played fair,
// so the induced product chain over (node, member state) follows every chosen
// action with positive probability. A node is in the maximal winning region
// iff some table wins from all of its member states: no AVOID state and no
// stuck node is reachable, and (reach-avoid) every reachable product node can
// still reach a target support -- in a finite chain that is exactly
// "reached almost surely". Deterministic choices are not enough: two actions
// played alternately can win where either one alone loops forever.
// Returns false when the table space is too large to enumerate.
inline bool brute_force_region(const Pomdp& m, const Specification& spec,
                               const SupportMdp& g, std::vector<char>& out,
                               double table_cap = 1e5) {
    const size_t N = g.size();
    double count = 1.0;
    for (const auto& actions : g.edges) {
        if (!actions.empty())
            count *= static_cast<double>((1u << actions.size()) - 1u);
        if (count > table_cap) return false;
    }

    // product chain nodes (node, member state), indexed contiguously
    std::vector<int> base(N + 1, 0);
    for (size_t i = 0; i < N; ++i)
        base[i + 1] = base[i] + static_cast<int>(g.nodes[i].size());
    const int P = base[N];
    auto pid = [&](int node, int state) {
        const auto& b = g.nodes[node];
        return base[node] +
               static_cast<int>(std::lower_bound(b.begin(), b.end(), state) - b.begin());
    };

    std::vector<char> p_avoid(P, 0), p_target(P, 0), p_stuck(P, 0);
    std::vector<std::vector<std::vector<int>>> slot_succ(P);  // pid -> slot -> pids
    for (size_t i = 0; i < N; ++i) {
        for (int s : g.nodes[i]) {
            int v = pid(static_cast<int>(i), s);
            p_avoid[v] = std::binary_search(spec.avoid.begin(), spec.avoid.end(), s);
            p_target[v] = g.target[i];
            p_stuck[v] = g.edges[i].empty() && !g.target[i] && !p_avoid[v];
            slot_succ[v].resize(g.edges[i].size());
        }
        for (size_t e = 0; e < g.edges[i].size(); ++e) {
            int a = g.edges[i][e].first;
            for (int z = 0; z < m.num_obs(); ++z) {
                BeliefSupport b2 = oracle_update(m, g.nodes[i], a, z);
                if (b2.empty()) continue;
                int n2 = g.find(b2);
                for (int s : g.nodes[i]) {
                    auto& succs = slot_succ[pid(static_cast<int>(i), s)][e];
                    for (const auto& [t, p] : m.trans_row(s, a))
                        if (m.emits(t, z)) succs.push_back(pid(n2, t));
                }
            }
        }
    }

    out.assign(N, 0);
    std::vector<unsigned> mask(N, 1);  // chosen-subset bitmask per node
    std::vector<std::vector<int>> rev(P);
    std::vector<char> reach_ok(P), lose(P);
    std::deque<int> q;
    while (true) {
        for (auto& r : rev) r.clear();
        for (size_t i = 0; i < N; ++i)
            for (size_t e = 0; e < g.edges[i].size(); ++e)
                if (mask[i] >> e & 1u)
                    for (int v = base[i]; v < base[i + 1]; ++v)
                        for (int u : slot_succ[v][e]) rev[u].push_back(v);

        if (spec.kind == Specification::Kind::ReachAvoid) {
            std::fill(reach_ok.begin(), reach_ok.end(), 0);
            for (int v = 0; v < P; ++v)
                if (p_target[v]) {
                    reach_ok[v] = 1;
                    q.push_back(v);
                }
            while (!q.empty()) {
                int v = q.front();
                q.pop_front();
                for (int u : rev[v])
                    if (!reach_ok[u]) {
                        reach_ok[u] = 1;
                        q.push_back(u);
                    }
            }
        }
        for (int v = 0; v < P; ++v) {
            lose[v] = p_avoid[v] || p_stuck[v] ||
                      (spec.kind == Specification::Kind::ReachAvoid && !reach_ok[v]);
            if (lose[v]) q.push_back(v);
        }
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            for (int u : rev[v])
                if (!lose[u]) {
                    lose[u] = 1;
                    q.push_back(u);
                }
        }
        for (size_t i = 0; i < N; ++i) {
            if (out[i]) continue;
            bool win = true;
            for (int v = base[i]; v < base[i + 1]; ++v) win &= !lose[v];
            if (win) out[i] = 1;
        }

        // next table: mixed radix over the nonempty subsets of each node
        size_t i = 0;
        for (; i < N; ++i) {
            if (g.edges[i].empty()) continue;
            unsigned top = (1u << g.edges[i].size()) - 1u;
            if (mask[i] < top) {
                ++mask[i];
                break;
            }
            mask[i] = 1;
        }
        if (i == N) break;
    }
    return true;
}

}  // namespace testsupport
