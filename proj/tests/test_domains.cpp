#include <doctest.h>

#include "pshield/domains.hpp"
#include "pshield/synth.hpp"

using namespace pshield;

TEST_CASE("config defaults and validation") {
    for (const auto& name : domain_names()) {
        DomainConfig cfg = DomainConfig::defaults(name);
        CHECK_NOTHROW(cfg.validate());
    }
    CHECK_THROWS_AS(DomainConfig::defaults("nosuch"), UnsupportedParameter);

    DomainConfig bad = DomainConfig::defaults("evade");
    bad.radius = bad.grid_size;  // sensing radius must fit inside the grid
    CHECK_THROWS_AS(generate(bad), UnsupportedParameter);

    DomainConfig tiny = DomainConfig::defaults("obstacle");
    tiny.grid_size = 1;
    CHECK_THROWS_AS(generate(tiny), UnsupportedParameter);
}

TEST_CASE("trap gridworld has exactly 37 states at the default size") {
    GeneratedDomain d = generate(DomainConfig::defaults("obstacle"));
    CHECK(d.pomdp.num_states() == 37);  // 36 cells + 1 absorbing sink
}

TEST_CASE("pursuit domain uses the long episode cap") {
    GeneratedDomain d = generate(DomainConfig::defaults("evade"));
    CHECK(d.episode_cap == 350);
}

TEST_CASE("rock-collection reward constants") {
    GeneratedDomain d = generate(DomainConfig::defaults("rocks"));
    const Pomdp& m = d.pomdp;
    double best_collect = -1e18, worst_collect = 1e18, best_deliver = -1e18;
    for (int s = 0; s < m.num_states(); ++s) {
        for (int a : m.avail[s]) {
            double r = m.reward_at(s, a);
            if (r > 0) {
                best_collect = std::max(best_collect, r);
                best_deliver = std::max(best_deliver, r);
            }
            if (r < 0) worst_collect = std::min(worst_collect, r);
        }
    }
    CHECK(best_collect == 10.0);   // good rock pickup and delivery
    CHECK(worst_collect == -10.0); // bad rock pickup
}

TEST_CASE("normalization formulas") {
    CHECK(normalize_return(generate(DomainConfig::defaults("refuel")), 10.0) ==
          doctest::Approx(1.0));
    CHECK(normalize_return(generate(DomainConfig::defaults("rocks")), 20.0) ==
          doctest::Approx(1.0));
    CHECK(normalize_return(generate(DomainConfig::defaults("avoid")), -1000.0) ==
          doctest::Approx(0.0));
    CHECK(normalize_return(generate(DomainConfig::defaults("obstacle")), 1000.0) ==
          doctest::Approx(1.0));
    CHECK(normalize_return(generate(DomainConfig::defaults("intercept")), 0.0) ==
          doctest::Approx(0.5));
    CHECK(normalize_return(generate(DomainConfig::defaults("evade")), 10.0) ==
          doctest::Approx(1.0));
}

TEST_CASE("generators are deterministic and hash-stable") {
    for (const auto& name : domain_names()) {
        GeneratedDomain a = generate(DomainConfig::defaults(name));
        GeneratedDomain b = generate(DomainConfig::defaults(name));
        CHECK(serialize_model(a.pomdp) == serialize_model(b.pomdp));
        CHECK(a.pomdp.graph_fingerprint() == b.pomdp.graph_fingerprint());
    }
}

TEST_CASE("every generated domain validates and admits a shield") {
    for (const auto& name : domain_names()) {
        CAPTURE(name);
        GeneratedDomain d = generate(DomainConfig::defaults(name));
        CHECK_NOTHROW(d.pomdp.validate());
        CHECK_NOTHROW(d.spec.validate());
        Shield sh = synthesize_shield(d.pomdp, d.spec);
        CHECK(sh.initial_winning());
        CHECK_FALSE(sh.table.empty());
    }
}

TEST_CASE("dense shaping: adjacent-cell step toward the target gains +1") {
    DomainConfig cfg = DomainConfig::defaults("rocks");
    cfg.reward_variant = RewardVariant::DenseShaped;
    GeneratedDomain d = generate(cfg);

    // find a state one step from the shaped target with a deterministic move
    // that decreases the potential gap by exactly 1
    bool found = false;
    for (int s = 0; s < d.pomdp.num_states() && !found; ++s) {
        for (int a : d.pomdp.avail[s]) {
            const auto& row = d.pomdp.trans_row(s, a);
            if (row.size() != 1) continue;
            int succ = row[0].first;
            double gap = d.dense_potential[succ] - d.dense_potential[s];
            if (gap == 1.0) {
                CHECK(dense_reward(d, s, a) ==
                      doctest::Approx(d.pomdp.reward_at(s, a) + 1.0));
                found = true;
                break;
            }
        }
    }
    CHECK(found);
}

TEST_CASE("dense shaping telescopes along any trace") {
    DomainConfig cfg = DomainConfig::defaults("obstacle");
    cfg.reward_variant = RewardVariant::DenseShaped;
    GeneratedDomain d = generate(cfg);

    // walk an arbitrary realized path and compare the summed shaping terms to
    // the potential difference of the endpoints
    int s = d.pomdp.initial.front().first;
    double sum = 0.0;
    int start = s;
    int moved = 0;
    for (int step = 0; step < 25; ++step) {
        int a = d.pomdp.avail[s][step % d.pomdp.avail[s].size()];
        const auto& row = d.pomdp.trans_row(s, a);
        int succ = row[step % row.size()].first;
        sum += d.dense_potential[succ] - d.dense_potential[s];
        s = succ;
        ++moved;
    }
    CHECK(moved == 25);
    CHECK(sum == doctest::Approx(d.dense_potential[s] - d.dense_potential[start]));
}

TEST_CASE("dense reward on a sparse-configured domain is a variant mismatch") {
    GeneratedDomain d = generate(DomainConfig::defaults("obstacle"));
    CHECK_THROWS_AS(dense_reward(d, 0, 0), VariantMismatch);
}

TEST_CASE("reported state counts stay within the expected scale") {
    // only the trap gridworld's 37 is pinned exactly; the others are logged
    std::map<std::string, int> counts;
    for (const auto& name : domain_names())
        counts[name] = generate(DomainConfig::defaults(name)).pomdp.num_states();
    CHECK(counts["obstacle"] == 37);
    for (const auto& [name, n] : counts) {
        CAPTURE(name);
        CHECK(n >= 2);
        CHECK(n < 100000);
        MESSAGE(name << ": " << n << " states");
    }
}
