#include "pshield/estimator.hpp"

#include <algorithm>

namespace pshield {

BeliefSupport initial_support(const Pomdp& m, int z0) {
    BeliefSupport b;
    for (const auto& [s, p] : m.initial)
        if (m.emits(s, z0)) b.push_back(s);
    if (b.empty())
        throw EmptySupport("initial observation '" + m.obs_names[z0] +
                           "' inconsistent with the initial distribution");
    return b;
}

std::vector<BeliefSupport> all_initial_supports(const Pomdp& m) {
    std::vector<BeliefSupport> out;
    for (int z = 0; z < m.num_obs(); ++z) {
        BeliefSupport b;
        for (const auto& [s, p] : m.initial)
            if (m.emits(s, z)) b.push_back(s);
        if (!b.empty() && std::find(out.begin(), out.end(), b) == out.end())
            out.push_back(std::move(b));
    }
    return out;
}

BeliefSupport update_support(const Pomdp& m, const BeliefSupport& b, int a, int z) {
    BeliefSupport next;
    for (int s : b) {
        if (!m.action_available(s, a))
            throw UnavailableAction("action '" + m.action_names[a] +
                                    "' unavailable at support state " + m.state_names[s]);
        for (const auto& [t, p] : m.trans_row(s, a))
            if (m.emits(t, z)) next.push_back(t);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    if (next.empty())
        throw EmptySupport("observation '" + m.obs_names[z] +
                           "' impossible from the current support under action '" +
                           m.action_names[a] + "'");
    return next;
}

std::vector<int> offered_actions(const Pomdp& m, const BeliefSupport& b) {
    std::vector<int> acc = m.avail[b.front()];
    for (size_t i = 1; i < b.size() && !acc.empty(); ++i) {
        std::vector<int> tmp;
        const auto& av = m.avail[b[i]];
        std::set_intersection(acc.begin(), acc.end(), av.begin(), av.end(),
                              std::back_inserter(tmp));
        acc = std::move(tmp);
    }
    return acc;
}

Belief bayes_update(const Pomdp& m, const Belief& b, int a, int z) {
    std::vector<double> w(m.num_states(), 0.0);
    for (const auto& [s, ps] : b)
        for (const auto& [t, pt] : m.trans_row(s, a)) w[t] += ps * pt;
    Belief next;
    double norm = 0.0;
    for (int t = 0; t < m.num_states(); ++t) {
        if (w[t] <= 0.0) continue;
        double v = w[t] * m.obs_prob(t, z);
        if (v > 0.0) {
            next.emplace_back(t, v);
            norm += v;
        }
    }
    if (norm <= 0.0)
        throw ZeroProbabilityObservation("observation '" + m.obs_names[z] +
                                         "' has zero probability from the current belief");
    for (auto& [t, v] : next) v /= norm;
    return next;
}

Belief initial_belief(const Pomdp& m, int z0) {
    Belief b;
    double norm = 0.0;
    for (const auto& [s, p] : m.initial) {
        double v = p * m.obs_prob(s, z0);
        if (v > 0.0) {
            b.emplace_back(s, v);
            norm += v;
        }
    }
    if (norm <= 0.0)
        throw ZeroProbabilityObservation("initial observation has zero probability");
    for (auto& [s, v] : b) v /= norm;
    return b;
}

BeliefSupport belief_support_of(const Belief& b) {
    BeliefSupport out;
    out.reserve(b.size());
    for (const auto& [s, p] : b) out.push_back(s);
    return out;
}

std::vector<int> support_feature_vector(const BeliefSupport& b, int n_states) {
    std::vector<int> v(n_states, 0);
    for (int s : b) v.at(s) = 1;
    return v;
}

void Estimator::reset(int z0) {
    support_ = initial_support(*model_, z0);
    if (track_belief_) belief_ = initial_belief(*model_, z0);
    history_length_ = 0;
}

void Estimator::step(int a, int z) {
    support_ = update_support(*model_, support_, a, z);
    if (track_belief_) belief_ = bayes_update(*model_, belief_, a, z);
    ++history_length_;
}

}  // namespace pshield
