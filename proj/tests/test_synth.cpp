#include <doctest.h>

#include <cstdio>
#include <random>

#include "pshield/synth.hpp"
#include "support/helpers.hpp"

using namespace pshield;
using testsupport::brute_force_region;
using testsupport::random_pomdp;

namespace {

Specification reach_avoid(const Pomdp& m) {
    return spec_from_labels(m, Specification::Kind::ReachAvoid);
}

const std::vector<int>* allowed_at(const SupportMdp& g, const WinningRegion& w,
                                   const BeliefSupport& b) {
    int n = g.find(b);
    REQUIRE(n >= 0);
    REQUIRE(w.winning[n]);
    return &w.allowed[n];
}

}  // namespace

TEST_CASE("support MDP of the chain fixture: exhaustive hand closure") {
    Pomdp t1 = testsupport::t1();
    SupportMdp g = build_support_mdp(t1, reach_avoid(t1));

    REQUIRE(g.size() == 5);
    std::vector<BeliefSupport> expect = {{0}, {1}, {2}, {3}, {0, 1}};
    for (const auto& b : expect) CHECK(g.find(b) >= 0);

    CHECK(g.bad[g.find({2})]);
    CHECK(g.target[g.find({3})]);
    CHECK_FALSE(g.bad[g.find({0, 1})]);
    CHECK_FALSE(g.target[g.find({0, 1})]);

    // bad and target nodes are terminal for synthesis
    CHECK(g.edges[g.find({2})].empty());
    CHECK(g.edges[g.find({3})].empty());

    REQUIRE(g.initial_nodes.size() == 1);
    CHECK(g.nodes[g.initial_nodes[0]] == BeliefSupport{0, 1});
}

TEST_CASE("support MDP: a stochastic branch splits by observation") {
    Pomdp t2 = testsupport::t2();
    SupportMdp g = build_support_mdp(t2, reach_avoid(t2));
    int n0 = g.find({0});
    REQUIRE(n0 >= 0);
    bool found = false;
    for (const auto& [a, succs] : g.edges[n0]) {
        if (a != 0) continue;  // action "a"
        found = true;
        std::vector<int> expect = {g.find({1}), g.find({2})};
        std::sort(expect.begin(), expect.end());
        CHECK(succs == expect);
    }
    CHECK(found);
}

TEST_CASE("support MDP: single-state all-target model") {
    Pomdp one = parse_model(R"(pomdp
states: 2 home trap
actions: go
observations: o p
start: home:1
T: home go home 1
T: trap go trap 1
O: home o 1
O: trap p 1
label reach: home
label avoid: trap
)");
    SupportMdp g = build_support_mdp(one, reach_avoid(one));
    REQUIRE(g.size() == 1);
    CHECK(g.target[0]);
    CHECK(g.edges[0].empty());
}

TEST_CASE("node cap raises a size-limit error") {
    Pomdp t1 = testsupport::t1();
    CHECK_THROWS_AS(build_support_mdp(t1, reach_avoid(t1), 2), SizeLimitExceeded);
}

TEST_CASE("winning region of the chain fixture") {
    Pomdp t1 = testsupport::t1();
    SupportMdp g = build_support_mdp(t1, reach_avoid(t1));
    WinningRegion w = compute_winning_reach_avoid(g);

    CHECK(w.count() == 4);
    CHECK(*allowed_at(g, w, {0}) == std::vector<int>{0});
    CHECK(*allowed_at(g, w, {1}) == std::vector<int>{0, 1});
    CHECK(*allowed_at(g, w, {0, 1}) == std::vector<int>{0});
    CHECK(w.winning[g.find({3})]);
    CHECK_FALSE(w.winning[g.find({2})]);
}

TEST_CASE("unreachable goal empties the reach-avoid region") {
    // reroute the winning edge 1 -> 3 back to 0: the goal support never forms
    Pomdp m = testsupport::t1();
    m.trans_row(1, 0) = {{0, 1.0}};
    m.validate();
    SupportMdp g = build_support_mdp(m, reach_avoid(m));
    WinningRegion w = compute_winning_reach_avoid(g);
    CHECK(w.count() == 0);

    Shield sh = extract_shield(w, g);
    CHECK(sh.table.empty());
    CHECK_FALSE(sh.initial_winning());
    CHECK_FALSE(sh.initial_not_winning.empty());
}

TEST_CASE("avoid-only region keeps dead ends that reach-avoid drops") {
    // state 1 is a safe dead end: the goal 3 is unreachable from it
    Pomdp m = parse_model(R"(pomdp
states: 4
actions: a b
observations: u v w
start: 0:1
T: 0 a 3 1
T: 0 b 1 1
T: 1 a 1 1
T: 1 b 1 1
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
)");
    Specification av = spec_from_labels(m, Specification::Kind::AvoidOnly);
    SupportMdp ga = build_support_mdp(m, av);
    WinningRegion wa = compute_winning_avoid(ga);
    int dead_end = ga.find({1});
    REQUIRE(dead_end >= 0);
    CHECK(wa.winning[dead_end]);

    SupportMdp gr = build_support_mdp(m, reach_avoid(m));
    WinningRegion wr = compute_winning_reach_avoid(gr);
    int dr = gr.find({1});
    REQUIRE(dr >= 0);
    CHECK_FALSE(wr.winning[dr]);
}

TEST_CASE("avoid-only region of the chain fixture") {
    Pomdp t1 = testsupport::t1();
    Specification av = spec_from_labels(t1, Specification::Kind::AvoidOnly);
    SupportMdp g = build_support_mdp(t1, av);
    WinningRegion w = compute_winning_avoid(g);
    for (const BeliefSupport& b : {BeliefSupport{0, 1}, {0}, {1}, {3}})
        CHECK(w.winning[g.find(b)]);
    CHECK(*allowed_at(g, w, {1}) == std::vector<int>{0, 1});
}

TEST_CASE("unavoidable trap empties the avoid-only region") {
    Pomdp m = parse_model(R"(pomdp
states: 2
actions: a
observations: u v
start: 0:1
T: 0 a 1 1
T: 1 a 1 1
O: 0 u 1
O: 1 v 1
label avoid: 1
)");
    Specification av = spec_from_labels(m, Specification::Kind::AvoidOnly);
    SupportMdp g = build_support_mdp(m, av);
    WinningRegion w = compute_winning_avoid(g);
    CHECK_FALSE(w.winning[g.find({0})]);
}

TEST_CASE("shield extraction on the chain fixture") {
    Pomdp t1 = testsupport::t1();
    Shield sh = synthesize_shield(t1, reach_avoid(t1));
    CHECK(sh.table.size() == 4);
    CHECK(sh.initial_winning());
    CHECK(sh.fingerprint == t1.graph_fingerprint());
    REQUIRE(sh.contains({0, 1}));
    CHECK(*sh.allowed({0, 1}) == std::vector<int>{0});
    CHECK_FALSE(sh.contains({2}));
}

TEST_CASE("all-target model: shield allows every offered action") {
    Pomdp m = parse_model(R"(pomdp
states: 2 home trap
actions: go stay
observations: o p
start: home:1
T: home go home 1
T: home stay home 1
T: trap go trap 1
T: trap stay trap 1
O: home o 1
O: trap p 1
label reach: home
label avoid: trap
)");
    Shield sh = synthesize_shield(m, reach_avoid(m));
    REQUIRE(sh.contains({0}));
    CHECK(*sh.allowed({0}) == std::vector<int>{0, 1});
    CHECK(sh.initial_winning());
}

TEST_CASE("winning policies verify; losing policies do not") {
    Pomdp t1 = testsupport::t1();
    Specification spec = reach_avoid(t1);
    SupportPolicy always_a = {{{0, 1}, 0}, {{0}, 0}, {{1}, 0}, {{2}, 0}, {{3}, 0}};
    SupportPolicy always_b = {{{0, 1}, 1}, {{0}, 1}, {{1}, 1}, {{2}, 1}, {{3}, 1}};
    CHECK(verify_winning_policy(t1, always_a, spec));
    CHECK_FALSE(verify_winning_policy(t1, always_b, spec));

    SupportPolicy partial = {{{0, 1}, 0}};
    CHECK_THROWS_AS(verify_winning_policy(t1, partial, spec), PolicyIncomplete);

    // alternate policy from a chosen start support
    CHECK(verify_winning_policy(t1, always_a, spec, BeliefSupport{1}));
    CHECK_FALSE(verify_winning_policy(t1, always_b, spec, BeliefSupport{0}));
}

TEST_CASE("every admissible deterministic policy of the synthesized shield wins") {
    std::mt19937_64 rng(31);
    int checked = 0;
    for (int i = 0; i < 60 && checked < 25; ++i) {
        Pomdp m = random_pomdp(rng);
        Specification spec = reach_avoid(m);
        SupportMdp g = build_support_mdp(m, spec);
        WinningRegion w = compute_winning_reach_avoid(g);

        // fair admissible policy = uniform over allowed: model as the batched
        // product check with every allowed action kept (choice = -2 sentinel is
        // not supported, so check each winning node under uniform via the
        // region's own closure plus per-policy spot checks below)
        bool any_winning = false;
        for (size_t n = 0; n < g.size(); ++n) any_winning |= w.winning[n] != 0;
        if (!any_winning) continue;
        ++checked;

        // closure: allowed actions never leave the region
        for (size_t n = 0; n < g.size(); ++n) {
            if (!w.winning[n]) continue;
            for (const auto& [a, succs] : g.edges[n]) {
                bool allowed = std::binary_search(w.allowed[n].begin(),
                                                  w.allowed[n].end(), a);
                if (!allowed) continue;
                for (int t : succs) CHECK(w.winning[t]);
            }
        }

        // a handful of admissible deterministic policies (for avoid-only,
        // every one must win from every winning node)
        Specification av = spec_from_labels(m, Specification::Kind::AvoidOnly);
        SupportMdp ga = build_support_mdp(m, av);
        WinningRegion wa = compute_winning_avoid(ga);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<int> choice(ga.size(), -1);
            for (size_t n = 0; n < ga.size(); ++n) {
                if (!wa.winning[n] || wa.allowed[n].empty()) continue;
                std::uniform_int_distribution<size_t> pick(0, wa.allowed[n].size() - 1);
                choice[n] = wa.allowed[n][pick(rng)];
            }
            auto wins = winning_nodes_under_policy(m, av, ga.nodes, choice);
            for (size_t n = 0; n < ga.size(); ++n)
                if (wa.winning[n] && choice[n] >= 0) CHECK(wins[n]);
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("fixpoint equals the brute-force maximal region on random models") {
    std::mt19937_64 rng(37);
    int compared = 0;
    for (int i = 0; i < 60 && compared < 30; ++i) {
        Pomdp m = random_pomdp(rng, 6, 2, 3);
        Specification spec = reach_avoid(m);
        SupportMdp g = build_support_mdp(m, spec);
        WinningRegion w = compute_winning_reach_avoid(g);

        std::vector<char> oracle;
        if (!brute_force_region(m, spec, g, oracle)) continue;
        ++compared;
        for (size_t n = 0; n < g.size(); ++n)
            CHECK(static_cast<bool>(w.winning[n]) == static_cast<bool>(oracle[n]));
    }
    CHECK(compared >= 10);
}

TEST_CASE("fixpoint shrinks weakly and terminates quickly") {
    std::mt19937_64 rng(41);
    for (int i = 0; i < 40; ++i) {
        Pomdp m = random_pomdp(rng);
        SupportMdp g = build_support_mdp(m, reach_avoid(m));
        WinningRegion w = compute_winning_reach_avoid(g);
        CHECK(w.rounds <= static_cast<int>(g.size()) * m.num_actions() + 1);
        CHECK(w.count() <= g.size());
    }
}

TEST_CASE("probability perturbations leave the shield bit-identical") {
    std::mt19937_64 rng(43);
    Pomdp t2 = testsupport::t2();
    std::string base = write_shield(synthesize_shield(t2, reach_avoid(t2)));
    for (int i = 0; i < 20; ++i) {
        Pomdp t2p = testsupport::perturb_probabilities(t2, rng);
        t2p.validate();
        REQUIRE(is_graph_preserving(t2, t2p));
        CHECK(write_shield(synthesize_shield(t2p, reach_avoid(t2p))) == base);
    }
    for (int i = 0; i < 10; ++i) {
        Pomdp m = random_pomdp(rng);
        Specification spec = reach_avoid(m);
        std::string ref = write_shield(synthesize_shield(m, spec));
        Pomdp mp = testsupport::perturb_probabilities(m, rng);
        mp.validate();
        CHECK(write_shield(synthesize_shield(mp, spec)) == ref);
    }
}

TEST_CASE("winning-graph diameter of the chain fixture") {
    Pomdp t1 = testsupport::t1();
    SupportMdp g = build_support_mdp(t1, reach_avoid(t1));
    WinningRegion w = compute_winning_reach_avoid(g);
    CHECK(winning_graph_diameter(g, w) == 2);  // {0,1} -> {1} -> {3}
}

TEST_CASE("shield file round-trips and rejects mismatched models") {
    Pomdp t1 = testsupport::t1();
    Shield sh = synthesize_shield(t1, reach_avoid(t1));
    std::string path = "roundtrip_shield.txt";
    save_shield(sh, path);
    Shield back = load_shield(path, t1);
    std::remove(path.c_str());

    CHECK(back.table == sh.table);
    CHECK(back.fingerprint == sh.fingerprint);
    CHECK(back.spec.kind == sh.spec.kind);
    CHECK(back.spec.reach == sh.spec.reach);
    CHECK(back.spec.avoid == sh.spec.avoid);

    Pomdp t2 = testsupport::t2();
    CHECK_THROWS_AS(read_shield(write_shield(sh), t2), ModelError);
    CHECK_THROWS_AS(read_shield("garbage", t1), ParseError);
}
