#include "pshield/runtime.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pshield {

double ShieldSchedule::probability(int episode) const {
    switch (kind) {
        case Kind::AlwaysOn:
            return 1.0;
        case Kind::SuddenOff:
            return episode < k0 ? 1.0 : 0.0;
        case Kind::SmoothOff:
            return episode < k0 ? 1.0 : std::max(0.0, 1.0 - alpha * (episode - k0));
        case Kind::FixedProbability:
            return p;
    }
    return 1.0;
}

ShieldSchedule ShieldSchedule::sudden_off(int k0) {
    ShieldSchedule s;
    s.kind = Kind::SuddenOff;
    s.k0 = k0;
    if (k0 < 0) throw ModelError("schedule: k0 must be >= 0");
    return s;
}

ShieldSchedule ShieldSchedule::smooth_off(int k0, double alpha) {
    ShieldSchedule s;
    s.kind = Kind::SmoothOff;
    s.k0 = k0;
    s.alpha = alpha;
    if (k0 < 0 || alpha <= 0.0) throw ModelError("schedule: need k0 >= 0 and alpha > 0");
    return s;
}

ShieldSchedule ShieldSchedule::fixed(double p) {
    ShieldSchedule s;
    s.kind = Kind::FixedProbability;
    s.p = p;
    if (p < 0.0 || p > 1.0) throw ModelError("schedule: p must be in [0,1]");
    return s;
}

ShieldSchedule ShieldSchedule::parse(const std::string& text) {
    if (text == "always-on" || text == "on") return always_on();
    if (text == "off" || text == "always-off") return off();
    auto split = [&](const std::string& s) {
        std::vector<std::string> parts;
        std::istringstream in(s);
        std::string tok;
        while (std::getline(in, tok, ':')) parts.push_back(tok);
        return parts;
    };
    auto parts = split(text);
    try {
        if (parts.size() == 2 && parts[0] == "sudden") return sudden_off(std::stoi(parts[1]));
        if (parts.size() == 3 && parts[0] == "smooth")
            return smooth_off(std::stoi(parts[1]), std::stod(parts[2]));
        if (parts.size() == 2 && parts[0] == "prob") return fixed(std::stod(parts[1]));
    } catch (const ModelError&) {
        throw;
    } catch (...) {
    }
    throw ModelError("unrecognized shield schedule '" + text +
                     "' (want always-on|off|sudden:K|smooth:K:ALPHA|prob:P)");
}

std::string ShieldSchedule::describe() const {
    std::ostringstream out;
    switch (kind) {
        case Kind::AlwaysOn:
            return "always-on";
        case Kind::SuddenOff:
            out << "sudden:" << k0;
            break;
        case Kind::SmoothOff:
            out << "smooth:" << k0 << ":" << alpha;
            break;
        case Kind::FixedProbability:
            out << "prob:" << p;
            break;
    }
    return out.str();
}

void ViolationLedger::record_episode(bool violated, Phase phase) {
    if (phase == Phase::During) {
        ++episodes_during;
        during_training += violated ? 1 : 0;
    } else {
        ++episodes_after;
        after_training += violated ? 1 : 0;
    }
}

std::vector<int> mask_actions(const Shield& sh, const BeliefSupport& b,
                              const std::vector<int>& offered, bool active) {
    if (!active) return offered;
    const std::vector<int>* nu = sh.allowed(b);
    if (!nu) throw SupportNotWinning("support outside the shield's winning region");
    std::vector<int> out;
    std::set_intersection(offered.begin(), offered.end(), nu->begin(), nu->end(),
                          std::back_inserter(out));
    if (out.empty()) throw EmptyMask("shield mask emptied the offered action set");
    return out;
}

int UniformRandomPolicy::act(const StepContext& ctx, std::mt19937_64& rng) {
    const auto& acts = *ctx.allowed;
    std::uniform_int_distribution<size_t> d(0, acts.size() - 1);
    return acts[d(rng)];
}

int sample_categorical(const std::vector<std::pair<int, double>>& row,
                       std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    double u = d(rng);
    double acc = 0.0;
    for (const auto& [i, p] : row) {
        acc += p;
        if (u <= acc) return i;
    }
    return row.back().first;
}

EpisodeTrace run_episode(const Pomdp& m, const Specification& spec, Policy& policy,
                         const SimulatorConfig& cfg, std::mt19937_64& rng) {
    EpisodeTrace tr;
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    const Pomdp& em = cfg.estimator_model ? *cfg.estimator_model : m;
    int s = sample_categorical(m.initial, rng);
    int z = sample_categorical(m.obs[s], rng);
    Estimator est(em);
    est.reset(z);

    auto visit = [&](int state, int obs) {
        if (cfg.record_states) {
            tr.states.push_back(state);
            tr.observations.push_back(obs);
        }
        tr.violated |= std::binary_search(spec.avoid.begin(), spec.avoid.end(), state);
        tr.reached |= std::binary_search(spec.reach.begin(), spec.reach.end(), state);
    };
    visit(s, z);

    policy.begin_episode();
    bool abstaining = false;
    for (int step = 0; step < cfg.episode_cap; ++step) {
        if (cfg.stop_on_absorbing && m.absorbing_zero(s)) break;

        const BeliefSupport& b = est.support();
        std::vector<int> offered = offered_actions(em, b);
        if (offered.empty()) break;  // support-level deadlock

        bool active = cfg.shield != nullptr && !abstaining &&
                      (cfg.shield_probability >= 1.0 || coin(rng) < cfg.shield_probability);
        std::vector<int> allowed;
        if (active && !cfg.shield->contains(b)) {
            // left the winning region while unshielded earlier: abstain
            tr.left_region = true;
            abstaining = true;
            active = false;
        }
        allowed = active ? mask_actions(*cfg.shield, b, offered, true) : offered;

        StepContext ctx{&m, &b, z, &offered, &allowed, active, step};
        int a = policy.act(ctx, rng);

        double r = m.reward_at(s, a);
        tr.sparse_return += r;
        ++tr.steps;

        int s_next = sample_categorical(m.trans_row(s, a), rng);
        int z_next = sample_categorical(m.obs[s_next], rng);
        double learn_r = r;
        if (cfg.potential) learn_r += (*cfg.potential)[s_next] - (*cfg.potential)[s];
        policy.on_step(ctx, a, learn_r);
        est.step(a, z_next);

        if (cfg.record_states) tr.actions.push_back(a);
        s = s_next;
        z = z_next;
        visit(s, z);
    }
    policy.end_episode();
    return tr;
}

EpisodeTrace shielded_random_episode(const Pomdp& m, const Specification& spec,
                                     const Shield& sh, int episode_cap,
                                     std::mt19937_64& rng) {
    UniformRandomPolicy policy;
    SimulatorConfig cfg;
    cfg.shield = &sh;
    cfg.episode_cap = episode_cap;
    return run_episode(m, spec, policy, cfg, rng);
}

}  // namespace pshield
