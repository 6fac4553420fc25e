#include "pshield/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>

namespace pshield {

namespace {

bool intersects(const BeliefSupport& b, const std::vector<int>& sorted_set) {
    size_t j = 0;
    for (int s : b) {
        while (j < sorted_set.size() && sorted_set[j] < s) ++j;
        if (j < sorted_set.size() && sorted_set[j] == s) return true;
    }
    return false;
}

bool subset_of(const BeliefSupport& b, const std::vector<int>& sorted_set) {
    return std::includes(sorted_set.begin(), sorted_set.end(), b.begin(), b.end());
}

}  // namespace

int SupportMdp::find(const BeliefSupport& b) const {
    for (size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i] == b) return static_cast<int>(i);
    return -1;
}

SupportMdp build_support_mdp(const Pomdp& m, const Specification& spec, size_t max_nodes) {
    spec.validate();
    SupportMdp g;
    g.model = &m;
    g.spec = spec;

    std::map<BeliefSupport, int> index;
    std::deque<int> frontier;

    auto intern = [&](const BeliefSupport& b) {
        auto [it, inserted] = index.emplace(b, static_cast<int>(g.nodes.size()));
        if (inserted) {
            if (g.nodes.size() >= max_nodes)
                throw SizeLimitExceeded("support MDP exceeds node cap of " +
                                        std::to_string(max_nodes));
            g.nodes.push_back(b);
            g.bad.push_back(intersects(b, spec.avoid));
            g.target.push_back(spec.is_reach_avoid() && subset_of(b, spec.reach));
            g.edges.emplace_back();
            frontier.push_back(it->second);
        }
        return it->second;
    };

    for (const auto& b0 : all_initial_supports(m)) g.initial_nodes.push_back(intern(b0));
    std::sort(g.initial_nodes.begin(), g.initial_nodes.end());
    g.initial_nodes.erase(std::unique(g.initial_nodes.begin(), g.initial_nodes.end()),
                          g.initial_nodes.end());

    while (!frontier.empty()) {
        int n = frontier.front();
        frontier.pop_front();
        if (g.bad[n] || g.target[n]) continue;  // terminal for synthesis

        const BeliefSupport b = g.nodes[n];  // copy: g.nodes may reallocate
        for (int a : offered_actions(m, b)) {
            // group successor states by the observation they emit
            std::map<int, BeliefSupport> by_obs;
            for (int s : b)
                for (const auto& [t, p] : m.trans_row(s, a))
                    for (const auto& [z, q] : m.obs[t]) by_obs[z].push_back(t);

            std::vector<int> succs;
            for (auto& [z, states] : by_obs) {
                std::sort(states.begin(), states.end());
                states.erase(std::unique(states.begin(), states.end()), states.end());
                succs.push_back(intern(states));
            }
            std::sort(succs.begin(), succs.end());
            succs.erase(std::unique(succs.begin(), succs.end()), succs.end());
            g.edges[n].emplace_back(a, std::move(succs));
        }
    }
    return g;
}

size_t WinningRegion::count() const {
    size_t c = 0;
    for (char w : winning) c += w != 0;
    return c;
}

namespace {

WinningRegion run_fixpoint(const SupportMdp& g, bool with_reachability) {
    const size_t n = g.size();
    WinningRegion w;
    w.winning.assign(n, 1);
    w.allowed.assign(n, {});

    for (size_t i = 0; i < n; ++i) {
        if (g.bad[i]) {
            w.winning[i] = 0;
        } else if (with_reachability && g.target[i]) {
            w.allowed[i] = offered_actions(*g.model, g.nodes[i]);
        } else {
            for (const auto& [a, succs] : g.edges[i]) w.allowed[i].push_back(a);
        }
    }

    // Product graph of (node, member state) for the reachability step, built
    // once. Certifying reachability on the support graph alone is not enough:
    // a path there may hinge on an observation that one particular member
    // state can never produce, leaving that state stranded forever. The step
    // below therefore checks, per member state, that a target support stays
    // reachable, and prunes actions that can step onto a stranded product node.
    std::vector<int> base;                          // node -> first product id
    std::vector<std::vector<std::vector<int>>> psucc;  // pid -> edge slot -> pids
    std::vector<char> ptarget;
    if (with_reachability) {
        const Pomdp& m = *g.model;
        base.assign(n + 1, 0);
        for (size_t i = 0; i < n; ++i)
            base[i + 1] = base[i] + static_cast<int>(g.nodes[i].size());
        auto pid = [&](int node, int state) {
            const auto& b = g.nodes[node];
            return base[node] + static_cast<int>(std::lower_bound(b.begin(), b.end(),
                                                                  state) -
                                                 b.begin());
        };
        psucc.resize(base[n]);
        ptarget.assign(base[n], 0);
        for (size_t i = 0; i < n; ++i) {
            if (g.target[i])
                for (int v = base[i]; v < base[i + 1]; ++v) ptarget[v] = 1;
            for (int v = base[i]; v < base[i + 1]; ++v) psucc[v].resize(g.edges[i].size());
            for (size_t e = 0; e < g.edges[i].size(); ++e) {
                int a = g.edges[i][e].first;
                std::map<int, int> by_obs;  // observation -> successor node
                for (int z = 0; z < m.num_obs(); ++z) {
                    try {
                        by_obs.emplace(z, g.find(update_support(m, g.nodes[i], a, z)));
                    } catch (const EmptySupport&) {
                    }
                }
                for (int s : g.nodes[i]) {
                    auto& out = psucc[pid(i, s)][e];
                    for (const auto& [t, p] : m.trans_row(s, a))
                        for (const auto& [z, q] : m.obs[t])
                            out.push_back(pid(by_obs.at(z), t));
                    std::sort(out.begin(), out.end());
                    out.erase(std::unique(out.begin(), out.end()), out.end());
                }
            }
        }
    }

    bool changed = true;
    while (changed) {
        changed = false;
        ++w.rounds;

        // (1) prune actions with a successor outside the region
        for (size_t i = 0; i < n; ++i) {
            if (!w.winning[i] || (with_reachability && g.target[i])) continue;
            auto& acts = w.allowed[i];
            for (size_t k = 0; k < acts.size();) {
                bool leaves = false;
                for (const auto& [a, succs] : g.edges[i]) {
                    if (a != acts[k]) continue;
                    for (int s : succs)
                        if (!w.winning[s]) {
                            leaves = true;
                            break;
                        }
                    break;
                }
                if (leaves) {
                    acts.erase(acts.begin() + k);
                    changed = true;
                } else {
                    ++k;
                }
            }
        }

        // (2) drop action-less non-targets
        for (size_t i = 0; i < n; ++i) {
            if (!w.winning[i]) continue;
            if (with_reachability && g.target[i]) continue;
            if (w.allowed[i].empty()) {
                w.winning[i] = 0;
                changed = true;
            }
        }

        // (3) prune actions that can step, for some member state, onto a
        // product node from which no target support is reachable anymore
        if (with_reachability) {
            const int np = base[n];
            std::vector<char> active(np, 0);
            for (size_t i = 0; i < n; ++i)
                if (w.winning[i])
                    for (int v = base[i]; v < base[i + 1]; ++v) active[v] = 1;

            // backward reachability of target product nodes via allowed edges
            std::vector<std::vector<int>> rev(np);
            for (size_t i = 0; i < n; ++i) {
                if (!w.winning[i] || g.target[i]) continue;
                for (size_t e = 0; e < g.edges[i].size(); ++e) {
                    if (!std::binary_search(w.allowed[i].begin(), w.allowed[i].end(),
                                            g.edges[i][e].first))
                        continue;
                    for (int v = base[i]; v < base[i + 1]; ++v)
                        for (int u : psucc[v][e])
                            if (active[u]) rev[u].push_back(v);
                }
            }
            std::vector<char> reaches(np, 0);
            std::deque<int> q;
            for (int v = 0; v < np; ++v)
                if (active[v] && ptarget[v]) {
                    reaches[v] = 1;
                    q.push_back(v);
                }
            while (!q.empty()) {
                int v = q.front();
                q.pop_front();
                for (int u : rev[v])
                    if (!reaches[u]) {
                        reaches[u] = 1;
                        q.push_back(u);
                    }
            }

            for (size_t i = 0; i < n; ++i) {
                if (!w.winning[i] || g.target[i]) continue;
                auto& acts = w.allowed[i];
                for (size_t k = 0; k < acts.size();) {
                    size_t e = 0;
                    while (g.edges[i][e].first != acts[k]) ++e;
                    bool stranded = false;
                    for (int v = base[i]; v < base[i + 1] && !stranded; ++v)
                        for (int u : psucc[v][e])
                            if (!active[u] || !reaches[u]) {
                                stranded = true;
                                break;
                            }
                    if (stranded) {
                        acts.erase(acts.begin() + k);
                        changed = true;
                    } else {
                        ++k;
                    }
                }
            }
        }
    }

    for (size_t i = 0; i < n; ++i)
        if (!w.winning[i]) w.allowed[i].clear();
    return w;
}

}  // namespace

WinningRegion compute_winning_reach_avoid(const SupportMdp& g) {
    if (!g.spec.is_reach_avoid())
        throw ModelError("compute_winning_reach_avoid on an avoid-only support MDP");
    return run_fixpoint(g, true);
}

WinningRegion compute_winning_avoid(const SupportMdp& g) {
    return run_fixpoint(g, false);
}

const std::vector<int>* Shield::allowed(const BeliefSupport& b) const {
    auto it = table.find(b);
    return it == table.end() ? nullptr : &it->second;
}

Shield extract_shield(const WinningRegion& w, const SupportMdp& g) {
    Shield sh;
    sh.spec = g.spec;
    sh.fingerprint = g.model->graph_fingerprint();
    sh.explored_nodes = g.size();
    for (size_t i = 0; i < g.size(); ++i)
        if (w.winning[i]) sh.table.emplace(g.nodes[i], w.allowed[i]);
    for (int n : g.initial_nodes) {
        sh.initial_supports.push_back(g.nodes[n]);
        if (!w.winning[n]) sh.initial_not_winning.push_back(g.nodes[n]);
    }
    return sh;
}

Shield synthesize_shield(const Pomdp& m, const Specification& spec, size_t max_nodes) {
    SupportMdp g = build_support_mdp(m, spec, max_nodes);
    WinningRegion w = spec.is_reach_avoid() ? compute_winning_reach_avoid(g)
                                            : compute_winning_avoid(g);
    return extract_shield(w, g);
}

// ---------------------------------------------------------------------------
// Product-chain analysis: the graph oracle behind verify_winning_policy.
// ---------------------------------------------------------------------------

namespace {

struct ProductAnalysis {
    const Pomdp& m;
    const Specification& spec;
    std::function<int(const BeliefSupport&)> choose;  // -2 = missing
    bool missing_is_error;

    std::map<BeliefSupport, int> support_ids;
    std::vector<BeliefSupport> supports;
    std::unordered_map<int64_t, int> node_ids;  // (support_id, state) -> product id
    std::vector<std::pair<int, int>> prod;      // (support_id, state)
    std::vector<std::vector<int>> succ;
    std::vector<char> is_avoid, is_reach, is_stuck;

    explicit ProductAnalysis(const Pomdp& model, const Specification& s,
                             std::function<int(const BeliefSupport&)> ch, bool strict)
        : m(model), spec(s), choose(std::move(ch)), missing_is_error(strict) {}

    std::vector<char> sup_target;  // support ⊆ REACH (certainty of arrival)

    int intern_support(const BeliefSupport& b) {
        auto [it, ins] = support_ids.emplace(b, static_cast<int>(supports.size()));
        if (ins) {
            supports.push_back(b);
            sup_target.push_back(std::includes(spec.reach.begin(), spec.reach.end(),
                                               b.begin(), b.end()));
        }
        return it->second;
    }

    int intern(int sup, int state, std::deque<int>* frontier) {
        int64_t key = static_cast<int64_t>(sup) * m.num_states() + state;
        auto [it, ins] = node_ids.emplace(key, static_cast<int>(prod.size()));
        if (ins) {
            prod.emplace_back(sup, state);
            succ.emplace_back();
            is_avoid.push_back(std::binary_search(spec.avoid.begin(), spec.avoid.end(), state));
            // reach is certified at support level: the run counts as having
            // reached only once the support is contained in REACH, matching
            // the target criterion of the synthesis fixpoint
            is_reach.push_back(sup_target[sup]);
            is_stuck.push_back(0);
            frontier->push_back(it->second);
        }
        return it->second;
    }

    void build(const std::vector<BeliefSupport>& starts) {
        std::deque<int> frontier;
        for (const auto& b : starts) {
            int sup = intern_support(b);
            for (int s : b) intern(sup, s, &frontier);
        }
        while (!frontier.empty()) {
            int v = frontier.front();
            frontier.pop_front();
            if (is_avoid[v] || is_reach[v]) continue;  // terminal
            auto [sup, s] = prod[v];
            const BeliefSupport& b = supports[sup];
            int a = choose(b);
            if (a < 0) {
                if (missing_is_error)
                    throw PolicyIncomplete("policy undefined at a reachable support");
                is_stuck[v] = 1;
                continue;
            }
            bool offered = true;
            for (int mem : b)
                if (!m.action_available(mem, a)) offered = false;
            if (!offered) {
                is_stuck[v] = 1;
                continue;
            }
            // cache updates per observation for this (support, action)
            std::map<int, int> upd;  // z -> support id
            for (const auto& [t, p] : m.trans_row(s, a)) {
                for (const auto& [z, q] : m.obs[t]) {
                    auto it = upd.find(z);
                    int sup2;
                    if (it == upd.end()) {
                        sup2 = intern_support(update_support(m, b, a, z));
                        upd.emplace(z, sup2);
                    } else {
                        sup2 = it->second;
                    }
                    int u = intern(sup2, t, &frontier);  // may reallocate succ
                    succ[v].push_back(u);
                }
            }
            std::sort(succ[v].begin(), succ[v].end());
            succ[v].erase(std::unique(succ[v].begin(), succ[v].end()), succ[v].end());
        }
    }

    // Losing product nodes: those that can reach an AVOID state, a stuck
    // node, or (reach-avoid) a bottom SCC without a REACH state.
    std::vector<char> losing() const {
        const size_t n = prod.size();
        std::vector<char> seed(n, 0);
        for (size_t i = 0; i < n; ++i)
            if (is_avoid[i] || is_stuck[i]) seed[i] = 1;

        if (spec.kind == Specification::Kind::ReachAvoid) {
            // iterative Tarjan
            std::vector<int> low(n, -1), idx(n, -1), comp(n, -1);
            std::vector<int> stack, call_node, call_edge;
            std::vector<char> on_stack(n, 0);
            int counter = 0, ncomp = 0;
            for (size_t root = 0; root < n; ++root) {
                if (idx[root] != -1) continue;
                call_node.push_back(static_cast<int>(root));
                call_edge.push_back(0);
                while (!call_node.empty()) {
                    int v = call_node.back();
                    int& e = call_edge.back();
                    if (e == 0) {
                        idx[v] = low[v] = counter++;
                        stack.push_back(v);
                        on_stack[v] = 1;
                    }
                    if (e < static_cast<int>(succ[v].size())) {
                        int u = succ[v][e++];
                        if (idx[u] == -1) {
                            call_node.push_back(u);
                            call_edge.push_back(0);
                        } else if (on_stack[u]) {
                            low[v] = std::min(low[v], idx[u]);
                        }
                    } else {
                        if (low[v] == idx[v]) {
                            while (true) {
                                int u = stack.back();
                                stack.pop_back();
                                on_stack[u] = 0;
                                comp[u] = ncomp;
                                if (u == v) break;
                            }
                            ++ncomp;
                        }
                        call_node.pop_back();
                        call_edge.pop_back();
                        if (!call_node.empty())
                            low[call_node.back()] = std::min(low[call_node.back()], low[v]);
                    }
                }
            }
            // a component is bottom iff no edge leaves it
            std::vector<char> bottom(ncomp, 1), has_reach(ncomp, 0);
            for (size_t v = 0; v < n; ++v) {
                for (int u : succ[v])
                    if (comp[u] != comp[v]) bottom[comp[v]] = 0;
                if (is_reach[v]) has_reach[comp[v]] = 1;
            }
            for (size_t v = 0; v < n; ++v)
                if (bottom[comp[v]] && !has_reach[comp[v]]) seed[v] = 1;
        }

        // backward closure of the seed
        std::vector<std::vector<int>> rev(n);
        for (size_t v = 0; v < n; ++v)
            for (int u : succ[v]) rev[u].push_back(static_cast<int>(v));
        std::deque<int> q;
        std::vector<char> lose = seed;
        for (size_t i = 0; i < n; ++i)
            if (lose[i]) q.push_back(static_cast<int>(i));
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            for (int u : rev[v])
                if (!lose[u]) {
                    lose[u] = 1;
                    q.push_back(u);
                }
        }
        return lose;
    }

    bool wins_from(const BeliefSupport& b, const std::vector<char>& lose) {
        auto it = support_ids.find(b);
        if (it == support_ids.end()) return false;
        for (int s : b) {
            int64_t key = static_cast<int64_t>(it->second) * m.num_states() + s;
            auto nit = node_ids.find(key);
            if (nit == node_ids.end() || lose[nit->second]) return false;
        }
        return true;
    }
};

}  // namespace

bool verify_winning_policy(const Pomdp& m, const SupportPolicy& policy,
                           const Specification& spec,
                           const std::optional<BeliefSupport>& start) {
    spec.validate();
    auto choose = [&policy](const BeliefSupport& b) {
        auto it = policy.find(b);
        return it == policy.end() ? -2 : it->second;
    };
    ProductAnalysis pa(m, spec, choose, /*strict=*/true);
    std::vector<BeliefSupport> starts =
        start ? std::vector<BeliefSupport>{*start} : all_initial_supports(m);
    pa.build(starts);
    auto lose = pa.losing();
    for (const auto& b : starts)
        if (!pa.wins_from(b, lose)) return false;
    return true;
}

std::vector<char> winning_nodes_under_policy(const Pomdp& m, const Specification& spec,
                                             const std::vector<BeliefSupport>& nodes,
                                             const std::vector<int>& choice) {
    std::map<BeliefSupport, int> idx;
    for (size_t i = 0; i < nodes.size(); ++i) idx.emplace(nodes[i], static_cast<int>(i));
    auto choose = [&](const BeliefSupport& b) {
        auto it = idx.find(b);
        return it == idx.end() ? -2 : choice[it->second];
    };
    ProductAnalysis pa(m, spec, choose, /*strict=*/false);
    pa.build(nodes);
    auto lose = pa.losing();
    std::vector<char> out(nodes.size(), 0);
    for (size_t i = 0; i < nodes.size(); ++i) out[i] = pa.wins_from(nodes[i], lose);
    return out;
}

int winning_graph_diameter(const SupportMdp& g, const WinningRegion& w) {
    const size_t n = g.size();
    int diameter = 0;
    std::vector<int> dist(n);
    for (size_t src = 0; src < n; ++src) {
        if (!w.winning[src]) continue;
        std::fill(dist.begin(), dist.end(), -1);
        dist[src] = 0;
        std::deque<int> q{static_cast<int>(src)};
        while (!q.empty()) {
            int v = q.front();
            q.pop_front();
            diameter = std::max(diameter, dist[v]);
            for (const auto& [a, succs] : g.edges[v]) {
                if (!std::binary_search(w.allowed[v].begin(), w.allowed[v].end(), a)) continue;
                for (int u : succs)
                    if (w.winning[u] && dist[u] == -1) {
                        dist[u] = dist[v] + 1;
                        q.push_back(u);
                    }
            }
        }
    }
    return diameter;
}

// ---------------------------------------------------------------------------
// Shield file format
// ---------------------------------------------------------------------------

std::string write_shield(const Shield& sh) {
    std::ostringstream out;
    out << "shield\n";
    out << "spec: " << (sh.spec.is_reach_avoid() ? "reach-avoid" : "avoid") << '\n';
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(sh.fingerprint));
    out << "fingerprint: " << buf << '\n';
    out << "explored: " << sh.explored_nodes << '\n';
    out << "winning: " << sh.table.size() << '\n';
    for (const auto& [b, acts] : sh.table) {
        out << "nu:";
        for (int s : b) out << ' ' << s;
        out << " :";
        for (int a : acts) out << ' ' << a;
        out << '\n';
    }
    return out.str();
}

Shield read_shield(const std::string& text, const Pomdp& m) {
    Shield sh;
    sh.spec.kind = Specification::Kind::ReachAvoid;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head)) continue;
        if (!saw_header) {
            if (head != "shield")
                throw ParseError("shield file: missing 'shield' header");
            saw_header = true;
            continue;
        }
        if (head == "spec:") {
            std::string kind;
            ls >> kind;
            if (kind == "reach-avoid")
                sh.spec = spec_from_labels(m, Specification::Kind::ReachAvoid);
            else if (kind == "avoid")
                sh.spec = spec_from_labels(m, Specification::Kind::AvoidOnly);
            else
                throw ParseError("shield file line " + std::to_string(lineno) +
                                 ": unknown spec kind '" + kind + "'");
        } else if (head == "fingerprint:") {
            std::string hex;
            ls >> hex;
            sh.fingerprint = std::stoull(hex, nullptr, 16);
        } else if (head == "explored:") {
            ls >> sh.explored_nodes;
        } else if (head == "winning:") {
            // entry count; entries follow
        } else if (head == "nu:") {
            BeliefSupport b;
            std::string tok;
            bool after_sep = false;
            std::vector<int> acts;
            while (ls >> tok) {
                if (tok == ":") {
                    after_sep = true;
                    continue;
                }
                (after_sep ? acts : b).push_back(std::stoi(tok));
            }
            if (b.empty())
                throw ParseError("shield file line " + std::to_string(lineno) + ": empty support");
            sh.table.emplace(std::move(b), std::move(acts));
        } else {
            throw ParseError("shield file line " + std::to_string(lineno) +
                             ": unknown section '" + head + "'");
        }
    }
    if (!saw_header) throw ParseError("shield file: missing 'shield' header");
    if (sh.fingerprint != m.graph_fingerprint())
        throw ModelError("shield fingerprint does not match the model graph");
    return sh;
}

void save_shield(const Shield& sh, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open shield file for writing: " + path);
    f << write_shield(sh);
}

Shield load_shield(const std::string& path, const Pomdp& m) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open shield file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return read_shield(ss.str(), m);
}

}  // namespace pshield
