#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pshield/domains.hpp"
#include "pshield/runtime.hpp"

namespace pshield {

struct ConfigInvalid : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class FeatureRepr { ObsOneHot, SupportBits, Stacked };

FeatureRepr parse_repr(const std::string& text);  // obs|support|stacked
std::string repr_name(FeatureRepr r);

/// Sparse binary feature vector: indices of the active coordinates.
struct Features {
    std::vector<int> active;  // sorted, distinct
    int dim = 0;
};

int feature_dim(const Pomdp& m, FeatureRepr repr);
Features make_features(const Pomdp& m, FeatureRepr repr, int observation,
                       const BeliefSupport& support, const std::vector<int>& allowed);

enum class AgentKind { Reinforce, QLearning };

AgentKind parse_agent(const std::string& text);  // reinforce|qlearning
std::string agent_name(AgentKind a);

struct TrainConfig {
    AgentKind agent = AgentKind::Reinforce;
    int episodes = 5000;
    int eval_interval = 100;
    int eval_episodes = 10;
    double gamma = 1.0;
    double learning_rate = 0.05;
    double epsilon = 0.1;  // q-learning exploration
    uint64_t seed = 1;
    ShieldSchedule schedule = ShieldSchedule::always_on();
    FeatureRepr repr = FeatureRepr::Stacked;
    int episode_cap = 0;  // 0 = domain default

    void validate() const;
};

struct CurveRow {
    int idx = 0;
    double mean_return = 0.0;
    double norm_return = 0.0;
    double smooth_norm = 0.0;
    long viol_during = 0;  // cumulative
    long viol_after = 0;   // cumulative
    double p_shield = 0.0;
};

struct LearningCurve {
    std::vector<CurveRow> rows;
    ViolationLedger ledger;
    double final_smooth() const { return rows.empty() ? 0.0 : rows.back().smooth_norm; }
};

/// header: idx,return,norm_return,smooth_norm,viol_during,viol_after,p_shield
std::string curve_csv(const LearningCurve& c);

/// Trailing mean over min(window, i+1) entries; same length as the input.
std::vector<double> smooth_curve(const std::vector<double>& values, int window = 5);

// --- policy gradient -------------------------------------------------------

/// Probabilities over `allowed` (same order) of the masked softmax with
/// per-action weights theta[a] against sparse features x.
std::vector<double> masked_softmax(const std::vector<std::vector<double>>& theta,
                                   const Features& x, const std::vector<int>& allowed);

struct ReinforceStep {
    Features x;
    std::vector<int> allowed;
    int action = 0;
    double reward = 0.0;
};

/// theta += lr * sum_t G_t grad log pi(a_t | x_t), G_t the discounted
/// return-to-go. Throws on non-finite parameters (NaN guard).
void reinforce_update(std::vector<std::vector<double>>& theta,
                      const std::vector<ReinforceStep>& episode, double gamma, double lr,
                      double baseline = 0.0);

class ReinforceAgent final : public Policy {
  public:
    ReinforceAgent(const Pomdp& m, FeatureRepr repr, double lr, double gamma);

    int act(const StepContext& ctx, std::mt19937_64& rng) override;
    void begin_episode() override;
    void on_step(const StepContext& ctx, int action, double learn_reward) override;
    void end_episode() override;

    void set_learning(bool on) { learning_ = on; }
    void set_greedy(bool on) { greedy_ = on; }

    std::vector<std::vector<double>>& theta() { return theta_; }

  private:
    const Pomdp* model_;
    FeatureRepr repr_;
    double lr_, gamma_;
    bool learning_ = true, greedy_ = false;
    std::vector<std::vector<double>> theta_;  // [action][feature]
    std::vector<ReinforceStep> episode_;
    double baseline_ = 0.0;
    long baseline_n_ = 0;
};

// --- tabular Q --------------------------------------------------------------

using QKey = std::vector<int>;  // active feature indices

struct QTable {
    int num_actions = 0;
    std::map<QKey, std::vector<double>> rows;

    std::vector<double>& row(const QKey& k);
    double value(const QKey& k, int a) const;
    double max_over(const QKey& k, const std::vector<int>& allowed) const;
};

/// Q(x,a) += lr * (r + gamma * max_{a' in allowed'} Q(x',a') - Q(x,a));
/// pass next = nullptr for terminal transitions.
void q_update(QTable& table, const QKey& x, int a, double r, const QKey* next,
              const std::vector<int>* next_allowed, double gamma, double lr);

class QAgent final : public Policy {
  public:
    QAgent(const Pomdp& m, FeatureRepr repr, double lr, double gamma, double epsilon);

    int act(const StepContext& ctx, std::mt19937_64& rng) override;
    void begin_episode() override;
    void on_step(const StepContext& ctx, int action, double learn_reward) override;
    void end_episode() override;

    void set_learning(bool on) { learning_ = on; }
    void set_greedy(bool on) { greedy_ = on; }

    QTable& table() { return table_; }

  private:
    void flush_pending(const QKey* next, const std::vector<int>* next_allowed);

    const Pomdp* model_;
    FeatureRepr repr_;
    double lr_, gamma_, epsilon_;
    bool learning_ = true, greedy_ = false;
    QTable table_;
    bool has_pending_ = false;
    QKey pending_key_;
    int pending_action_ = 0;
    double pending_reward_ = 0.0;
};

// --- training loop ----------------------------------------------------------

/// Runs the configured agent on the domain. Training rewards follow the
/// domain's reward variant; evaluations are greedy on the sparse reward.
/// Mid-run evaluation violations count as during-training; the final
/// evaluation block counts as after-training. Deterministic given the seed.
LearningCurve train(const GeneratedDomain& d, const Shield* sh, const TrainConfig& cfg);

/// Uniform-random agent under the same evaluation protocol (the gray
/// baseline curves).
LearningCurve random_baseline(const GeneratedDomain& d, const Shield* sh,
                              const TrainConfig& cfg);

// --- experiment matrix ------------------------------------------------------

struct MatrixCondition {
    bool shielded = true;
    AgentKind agent = AgentKind::Reinforce;
    FeatureRepr repr = FeatureRepr::Stacked;
    std::string label() const;
};

struct MatrixCell {
    std::string domain;
    std::string condition;  // condition label or "baseline-shielded"/"baseline-unshielded"
    uint64_t seed = 0;
    bool is_baseline = false;
    LearningCurve curve;
    bool failed = false;
    std::string error;
};

struct MatrixBundle {
    std::vector<MatrixCell> cells;
    std::vector<std::string> failures;  // "<domain>/<condition>/<seed>: why"
    std::string manifest;               // one line per cell: path-ish id, seed, checksum
};

/// One curve per (domain, condition, seed) plus one random baseline per
/// domain per shield condition present. Cells that throw are reported, not
/// fatal.
MatrixBundle run_matrix(const std::vector<std::string>& domains,
                        const std::vector<MatrixCondition>& conditions,
                        const std::vector<uint64_t>& seeds, const TrainConfig& base);

/// Pointwise mean of the normalized-return columns.
std::vector<double> aggregate_normalized(const std::vector<const LearningCurve*>& curves);

// --- statistics -------------------------------------------------------------

struct PairedTTest {
    double t = 0.0;
    int df = 0;
    double p_two_sided = 1.0;
    double p_one_sided = 1.0;  // H1: mean(x - y) > 0
};

/// Paired Student t-test of x against y (equal lengths >= 2).
PairedTTest paired_t_test(const std::vector<double>& x, const std::vector<double>& y);

uint64_t bytes_checksum(const std::string& bytes);

}  // namespace pshield
