#include "pshield/learn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>

namespace pshield {

FeatureRepr parse_repr(const std::string& text) {
    if (text == "obs") return FeatureRepr::ObsOneHot;
    if (text == "support") return FeatureRepr::SupportBits;
    if (text == "stacked") return FeatureRepr::Stacked;
    throw ConfigInvalid("unrecognized representation '" + text + "' (want obs|support|stacked)");
}

std::string repr_name(FeatureRepr r) {
    switch (r) {
        case FeatureRepr::ObsOneHot:
            return "obs";
        case FeatureRepr::SupportBits:
            return "support";
        case FeatureRepr::Stacked:
            return "stacked";
    }
    return "?";
}

AgentKind parse_agent(const std::string& text) {
    if (text == "reinforce") return AgentKind::Reinforce;
    if (text == "qlearning") return AgentKind::QLearning;
    throw ConfigInvalid("unrecognized agent '" + text + "' (want reinforce|qlearning)");
}

std::string agent_name(AgentKind a) {
    return a == AgentKind::Reinforce ? "reinforce" : "qlearning";
}

int feature_dim(const Pomdp& m, FeatureRepr repr) {
    switch (repr) {
        case FeatureRepr::ObsOneHot:
            return m.num_obs();
        case FeatureRepr::SupportBits:
            return m.num_states();
        case FeatureRepr::Stacked:
            return m.num_obs() + m.num_states() + m.num_actions();
    }
    return 0;
}

Features make_features(const Pomdp& m, FeatureRepr repr, int observation,
                       const BeliefSupport& support, const std::vector<int>& allowed) {
    Features f;
    f.dim = feature_dim(m, repr);
    switch (repr) {
        case FeatureRepr::ObsOneHot:
            f.active.push_back(observation);
            break;
        case FeatureRepr::SupportBits:
            f.active = support;
            break;
        case FeatureRepr::Stacked: {
            f.active.push_back(observation);
            int off = m.num_obs();
            for (int s : support) f.active.push_back(off + s);
            off += m.num_states();
            for (int a : allowed) f.active.push_back(off + a);
            break;
        }
    }
    return f;
}

void TrainConfig::validate() const {
    if (episodes < 0) throw ConfigInvalid("episodes must be >= 0");
    if (eval_interval < 1) throw ConfigInvalid("eval_interval must be >= 1");
    if (eval_episodes < 1) throw ConfigInvalid("eval_episodes must be >= 1");
    if (gamma < 0.0 || gamma > 1.0) throw ConfigInvalid("gamma must be in [0,1]");
    if (learning_rate <= 0.0) throw ConfigInvalid("learning rate must be positive");
    if (epsilon < 0.0 || epsilon > 1.0) throw ConfigInvalid("epsilon must be in [0,1]");
    if (episode_cap < 0) throw ConfigInvalid("episode_cap must be >= 0");
}

std::vector<double> smooth_curve(const std::vector<double>& values, int window) {
    if (window < 1) throw ConfigInvalid("smoothing window must be >= 1");
    std::vector<double> out(values.size());
    double acc = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        if (i >= static_cast<size_t>(window)) acc -= values[i - window];
        out[i] = acc / std::min<size_t>(window, i + 1);
    }
    return out;
}

static void append_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    out += buf;
}

std::string curve_csv(const LearningCurve& c) {
    std::string out = "idx,return,norm_return,smooth_norm,viol_during,viol_after,p_shield\n";
    for (const auto& r : c.rows) {
        out += std::to_string(r.idx);
        out += ',';
        append_double(out, r.mean_return);
        out += ',';
        append_double(out, r.norm_return);
        out += ',';
        append_double(out, r.smooth_norm);
        out += ',';
        out += std::to_string(r.viol_during);
        out += ',';
        out += std::to_string(r.viol_after);
        out += ',';
        append_double(out, r.p_shield);
        out += '\n';
    }
    return out;
}

// --- policy gradient -------------------------------------------------------

std::vector<double> masked_softmax(const std::vector<std::vector<double>>& theta,
                                   const Features& x, const std::vector<int>& allowed) {
    std::vector<double> logits(allowed.size());
    for (size_t i = 0; i < allowed.size(); ++i) {
        double dot = 0.0;
        const auto& w = theta[allowed[i]];
        for (int f : x.active) dot += w[f];
        logits[i] = dot;
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double& l : logits) {
        l = std::exp(l - mx);
        z += l;
    }
    for (double& l : logits) l /= z;
    return logits;
}

void reinforce_update(std::vector<std::vector<double>>& theta,
                      const std::vector<ReinforceStep>& episode, double gamma, double lr,
                      double baseline) {
    double g = 0.0;
    std::vector<double> returns(episode.size());
    for (size_t t = episode.size(); t-- > 0;) {
        g = episode[t].reward + gamma * g;
        returns[t] = g;
    }
    for (size_t t = 0; t < episode.size(); ++t) {
        const auto& st = episode[t];
        double adv = returns[t] - baseline;
        if (adv == 0.0) continue;
        auto probs = masked_softmax(theta, st.x, st.allowed);
        for (size_t i = 0; i < st.allowed.size(); ++i) {
            double coef = (st.allowed[i] == st.action ? 1.0 : 0.0) - probs[i];
            double delta = lr * adv * coef;
            if (!std::isfinite(delta))
                throw std::runtime_error("reinforce_update: non-finite gradient (return " +
                                         std::to_string(adv) + ")");
            auto& w = theta[st.allowed[i]];
            for (int f : st.x.active) w[f] += delta;
        }
    }
}

ReinforceAgent::ReinforceAgent(const Pomdp& m, FeatureRepr repr, double lr, double gamma)
    : model_(&m),
      repr_(repr),
      lr_(lr),
      gamma_(gamma),
      theta_(m.num_actions(), std::vector<double>(feature_dim(m, repr), 0.0)) {}

int ReinforceAgent::act(const StepContext& ctx, std::mt19937_64& rng) {
    Features x = make_features(*model_, repr_, ctx.observation, *ctx.support, *ctx.allowed);
    auto probs = masked_softmax(theta_, x, *ctx.allowed);
    size_t pick = 0;
    if (greedy_) {
        pick = std::max_element(probs.begin(), probs.end()) - probs.begin();
    } else {
        std::uniform_real_distribution<double> d(0.0, 1.0);
        double u = d(rng), acc = 0.0;
        for (size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (u <= acc) {
                pick = i;
                break;
            }
            pick = i;
        }
    }
    if (learning_) episode_.push_back({std::move(x), *ctx.allowed, (*ctx.allowed)[pick], 0.0});
    return (*ctx.allowed)[pick];
}

void ReinforceAgent::begin_episode() { episode_.clear(); }

void ReinforceAgent::on_step(const StepContext&, int, double learn_reward) {
    if (learning_ && !episode_.empty()) episode_.back().reward = learn_reward;
}

void ReinforceAgent::end_episode() {
    if (!learning_ || episode_.empty()) return;
    double ret = 0.0;
    for (size_t t = episode_.size(); t-- > 0;) ret = episode_[t].reward + gamma_ * ret;
    reinforce_update(theta_, episode_, gamma_, lr_, baseline_);
    // running-mean baseline over episode returns
    ++baseline_n_;
    baseline_ += (ret - baseline_) / static_cast<double>(baseline_n_);
    episode_.clear();
}

// --- tabular Q --------------------------------------------------------------

std::vector<double>& QTable::row(const QKey& k) {
    auto it = rows.find(k);
    if (it == rows.end()) it = rows.emplace(k, std::vector<double>(num_actions, 0.0)).first;
    return it->second;
}

double QTable::value(const QKey& k, int a) const {
    auto it = rows.find(k);
    return it == rows.end() ? 0.0 : it->second[a];
}

double QTable::max_over(const QKey& k, const std::vector<int>& allowed) const {
    auto it = rows.find(k);
    if (it == rows.end()) return 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (int a : allowed) best = std::max(best, it->second[a]);
    return best;
}

void q_update(QTable& table, const QKey& x, int a, double r, const QKey* next,
              const std::vector<int>* next_allowed, double gamma, double lr) {
    double target = r;
    if (next != nullptr) target += gamma * table.max_over(*next, *next_allowed);
    double& q = table.row(x)[a];
    q += lr * (target - q);
}

QAgent::QAgent(const Pomdp& m, FeatureRepr repr, double lr, double gamma, double epsilon)
    : model_(&m), repr_(repr), lr_(lr), gamma_(gamma), epsilon_(epsilon) {
    table_.num_actions = m.num_actions();
}

void QAgent::flush_pending(const QKey* next, const std::vector<int>* next_allowed) {
    if (!has_pending_) return;
    q_update(table_, pending_key_, pending_action_, pending_reward_, next, next_allowed,
             gamma_, lr_);
    has_pending_ = false;
}

int QAgent::act(const StepContext& ctx, std::mt19937_64& rng) {
    QKey key = make_features(*model_, repr_, ctx.observation, *ctx.support, *ctx.allowed).active;
    if (learning_) flush_pending(&key, ctx.allowed);

    const auto& allowed = *ctx.allowed;
    int choice;
    if (!greedy_ && epsilon_ > 0.0) {
        std::uniform_real_distribution<double> d(0.0, 1.0);
        if (d(rng) < epsilon_) {
            std::uniform_int_distribution<size_t> pick(0, allowed.size() - 1);
            choice = allowed[pick(rng)];
            if (learning_) {
                pending_key_ = std::move(key);
                pending_action_ = choice;
                has_pending_ = true;
            }
            return choice;
        }
    }
    choice = allowed[0];
    double best = table_.value(key, allowed[0]);
    for (size_t i = 1; i < allowed.size(); ++i) {
        double v = table_.value(key, allowed[i]);
        if (v > best) {
            best = v;
            choice = allowed[i];
        }
    }
    if (learning_) {
        pending_key_ = std::move(key);
        pending_action_ = choice;
        has_pending_ = true;
    }
    return choice;
}

void QAgent::begin_episode() { has_pending_ = false; }

void QAgent::on_step(const StepContext&, int, double learn_reward) {
    if (learning_ && has_pending_) pending_reward_ = learn_reward;
}

void QAgent::end_episode() {
    if (learning_) flush_pending(nullptr, nullptr);
}

// --- training loop ----------------------------------------------------------

namespace {

struct AgentHandle {
    std::unique_ptr<Policy> owned;
    Policy* policy = nullptr;
    std::function<void(bool)> set_learning = [](bool) {};
    std::function<void(bool)> set_greedy = [](bool) {};
};

AgentHandle make_agent(const GeneratedDomain& d, const TrainConfig& cfg) {
    AgentHandle h;
    if (cfg.agent == AgentKind::Reinforce) {
        auto a = std::make_unique<ReinforceAgent>(d.pomdp, cfg.repr, cfg.learning_rate,
                                                  cfg.gamma);
        auto* raw = a.get();
        h.set_learning = [raw](bool on) { raw->set_learning(on); };
        h.set_greedy = [raw](bool on) { raw->set_greedy(on); };
        h.owned = std::move(a);
    } else {
        auto a = std::make_unique<QAgent>(d.pomdp, cfg.repr, cfg.learning_rate, cfg.gamma,
                                          cfg.epsilon);
        auto* raw = a.get();
        h.set_learning = [raw](bool on) { raw->set_learning(on); };
        h.set_greedy = [raw](bool on) { raw->set_greedy(on); };
        h.owned = std::move(a);
    }
    h.policy = h.owned.get();
    return h;
}

LearningCurve run_loop(const GeneratedDomain& d, const Shield* sh, const TrainConfig& cfg,
                       AgentHandle& agent) {
    cfg.validate();
    bool ever_shielded = cfg.schedule.kind != ShieldSchedule::Kind::FixedProbability ||
                         cfg.schedule.p > 0.0;
    if (ever_shielded && (sh == nullptr || !sh->initial_winning()))
        throw ConfigInvalid("schedule applies the shield but no usable shield was given");

    std::mt19937_64 rng(cfg.seed);
    int cap = cfg.episode_cap > 0 ? cfg.episode_cap : d.episode_cap;

    SimulatorConfig train_sim;
    train_sim.shield = ever_shielded ? sh : nullptr;
    train_sim.episode_cap = cap;
    if (d.reward_variant == RewardVariant::DenseShaped)
        train_sim.potential = &d.dense_potential;

    SimulatorConfig eval_sim;
    eval_sim.shield = ever_shielded ? sh : nullptr;
    eval_sim.episode_cap = cap;

    LearningCurve curve;
    for (int ep = 0; ep < cfg.episodes; ++ep) {
        double p = cfg.schedule.probability(ep);
        train_sim.shield_probability = p;
        auto tr = run_episode(d.pomdp, d.spec, *agent.policy, train_sim, rng);
        curve.ledger.record_episode(tr.violated, ViolationLedger::Phase::During);

        if ((ep + 1) % cfg.eval_interval != 0) continue;
        bool final_block = ep + 1 == cfg.episodes ||
                           (cfg.episodes - (ep + 1)) < cfg.eval_interval;
        agent.set_learning(false);
        agent.set_greedy(true);
        eval_sim.shield_probability = p;
        double total = 0.0;
        for (int e = 0; e < cfg.eval_episodes; ++e) {
            auto ev = run_episode(d.pomdp, d.spec, *agent.policy, eval_sim, rng);
            total += ev.sparse_return;
            curve.ledger.record_episode(ev.violated, final_block
                                                         ? ViolationLedger::Phase::After
                                                         : ViolationLedger::Phase::During);
        }
        agent.set_learning(true);
        agent.set_greedy(false);

        CurveRow row;
        row.idx = ep + 1;
        row.mean_return = total / cfg.eval_episodes;
        row.norm_return = normalize_return(d, row.mean_return);
        row.viol_during = curve.ledger.during_training;
        row.viol_after = curve.ledger.after_training;
        row.p_shield = p;
        curve.rows.push_back(row);
    }

    std::vector<double> norm;
    norm.reserve(curve.rows.size());
    for (const auto& r : curve.rows) norm.push_back(r.norm_return);
    auto sm = smooth_curve(norm, 5);
    for (size_t i = 0; i < sm.size(); ++i) curve.rows[i].smooth_norm = sm[i];
    return curve;
}

}  // namespace

LearningCurve train(const GeneratedDomain& d, const Shield* sh, const TrainConfig& cfg) {
    AgentHandle agent = make_agent(d, cfg);
    return run_loop(d, sh, cfg, agent);
}

LearningCurve random_baseline(const GeneratedDomain& d, const Shield* sh,
                              const TrainConfig& cfg) {
    AgentHandle agent;
    agent.owned = std::make_unique<UniformRandomPolicy>();
    agent.policy = agent.owned.get();
    return run_loop(d, sh, cfg, agent);
}

// --- experiment matrix ------------------------------------------------------

std::string MatrixCondition::label() const {
    return std::string(shielded ? "shielded" : "unshielded") + "-" + agent_name(agent) + "-" +
           repr_name(repr);
}

MatrixBundle run_matrix(const std::vector<std::string>& domains,
                        const std::vector<MatrixCondition>& conditions,
                        const std::vector<uint64_t>& seeds, const TrainConfig& base) {
    MatrixBundle bundle;
    if (seeds.empty()) return bundle;

    bool want_shielded = false, want_unshielded = false;
    for (const auto& c : conditions) (c.shielded ? want_shielded : want_unshielded) = true;

    for (const auto& name : domains) {
        GeneratedDomain dom;
        Shield sh;
        bool dom_ok = true;
        std::string dom_err;
        try {
            dom = generate(DomainConfig::defaults(name));
            if (want_shielded) sh = synthesize_shield(dom.pomdp, dom.spec);
        } catch (const std::exception& e) {
            dom_ok = false;
            dom_err = e.what();
        }

        auto run_cell = [&](const std::string& cond_label, bool is_baseline, bool shielded,
                            uint64_t seed, const TrainConfig& cfg) {
            MatrixCell cell;
            cell.domain = name;
            cell.condition = cond_label;
            cell.seed = seed;
            cell.is_baseline = is_baseline;
            if (!dom_ok) {
                cell.failed = true;
                cell.error = dom_err;
            } else {
                try {
                    const Shield* shp = shielded ? &sh : nullptr;
                    cell.curve = is_baseline ? random_baseline(dom, shp, cfg)
                                             : train(dom, shp, cfg);
                } catch (const std::exception& e) {
                    cell.failed = true;
                    cell.error = e.what();
                }
            }
            if (cell.failed)
                bundle.failures.push_back(name + "/" + cond_label + "/" +
                                          std::to_string(seed) + ": " + cell.error);
            bundle.cells.push_back(std::move(cell));
        };

        for (const auto& cond : conditions) {
            for (uint64_t seed : seeds) {
                TrainConfig cfg = base;
                cfg.agent = cond.agent;
                cfg.repr = cond.repr;
                cfg.seed = seed;
                cfg.schedule =
                    cond.shielded ? base.schedule : ShieldSchedule::off();
                run_cell(cond.label(), false, cond.shielded, seed, cfg);
            }
        }
        if (want_shielded) {
            TrainConfig cfg = base;
            cfg.seed = seeds[0];
            run_cell("baseline-shielded", true, true, seeds[0], cfg);
        }
        if (want_unshielded) {
            TrainConfig cfg = base;
            cfg.seed = seeds[0];
            cfg.schedule = ShieldSchedule::off();
            run_cell("baseline-unshielded", true, false, seeds[0], cfg);
        }
    }

    for (const auto& cell : bundle.cells) {
        bundle.manifest += cell.domain + "/" + cell.condition + "/" +
                           std::to_string(cell.seed) + " ";
        bundle.manifest +=
            cell.failed ? "FAILED" : std::to_string(bytes_checksum(curve_csv(cell.curve)));
        bundle.manifest += '\n';
    }
    return bundle;
}

std::vector<double> aggregate_normalized(const std::vector<const LearningCurve*>& curves) {
    std::vector<double> out;
    if (curves.empty()) return out;
    size_t n = curves[0]->rows.size();
    out.assign(n, 0.0);
    for (const auto* c : curves) {
        if (c->rows.size() != n)
            throw ConfigInvalid("aggregate_normalized: curves have mismatched lengths");
        for (size_t i = 0; i < n; ++i) out[i] += c->rows[i].norm_return;
    }
    for (double& v : out) v /= static_cast<double>(curves.size());
    return out;
}

// --- statistics -------------------------------------------------------------

namespace {

// regularized incomplete beta I_x(a, b), Lentz continued fraction
double betacf(double a, double b, double x) {
    const double eps = 3e-12, fpmin = 1e-300;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

double inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double lnb = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                 b * std::log(1.0 - x);
    double front = std::exp(lnb);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// P(T <= t) for Student's t with df degrees of freedom
double student_cdf(double t, int df) {
    double x = df / (df + t * t);
    double tail = 0.5 * inc_beta(df / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

}  // namespace

PairedTTest paired_t_test(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw ConfigInvalid("paired_t_test needs two equal-length samples of size >= 2");
    size_t n = x.size();
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += x[i] - y[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double d = x[i] - y[i] - mean;
        var += d * d;
    }
    var /= static_cast<double>(n - 1);

    PairedTTest out;
    out.df = static_cast<int>(n) - 1;
    if (var == 0.0) {
        out.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                : mean < 0.0 ? -std::numeric_limits<double>::infinity()
                             : 0.0;
        out.p_one_sided = mean > 0.0 ? 0.0 : 1.0;
        out.p_two_sided = mean != 0.0 ? 0.0 : 1.0;
        return out;
    }
    out.t = mean / std::sqrt(var / static_cast<double>(n));
    out.p_one_sided = 1.0 - student_cdf(out.t, out.df);
    out.p_two_sided = 2.0 * (1.0 - student_cdf(std::fabs(out.t), out.df));
    return out;
}

uint64_t bytes_checksum(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace pshield
