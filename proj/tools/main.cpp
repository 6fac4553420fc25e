#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "pshield/domains.hpp"
#include "pshield/learn.hpp"

using namespace pshield;

namespace {

// shared --model / --domain source flags
struct SourceArgs {
    std::string model_path;
    std::string domain;
    int n = 0;
    int radius = -1;
    int energy = 0;
    int cap = 0;
    std::string reward = "sparse";
    std::string spec_kind = "reach-avoid";
};

void add_source_flags(CLI::App* cmd, SourceArgs& a) {
    auto* model = cmd->add_option("--model", a.model_path, "model file in the text format");
    auto* domain =
        cmd->add_option("--domain", a.domain, "generated benchmark domain")
            ->check(CLI::IsMember(domain_names()));
    model->excludes(domain);
    cmd->add_option("--n", a.n, "grid size (domains only)");
    cmd->add_option("--radius", a.radius, "vision radius (domains only)");
    cmd->add_option("--energy", a.energy, "energy capacity (refuel only)");
    cmd->add_option("--cap", a.cap, "episode cap override");
    cmd->add_option("--reward", a.reward, "reward variant: sparse|dense")
        ->check(CLI::IsMember({"sparse", "dense"}));
    cmd->add_option("--spec", a.spec_kind, "specification kind")
        ->check(CLI::IsMember({"reach-avoid", "avoid"}));
}

struct Source {
    Pomdp model;
    Specification spec;
    std::optional<GeneratedDomain> domain;
};

Source resolve_source(const SourceArgs& a) {
    Source src;
    auto kind = a.spec_kind == "avoid" ? Specification::Kind::AvoidOnly
                                       : Specification::Kind::ReachAvoid;
    if (!a.domain.empty()) {
        DomainConfig cfg = DomainConfig::defaults(a.domain);
        if (a.n > 0) cfg.grid_size = a.n;
        if (a.radius >= 0) cfg.radius = a.radius;
        if (a.energy > 0) cfg.energy = a.energy;
        if (a.cap > 0) cfg.episode_cap = a.cap;
        cfg.reward_variant =
            a.reward == "dense" ? RewardVariant::DenseShaped : RewardVariant::Sparse;
        src.domain = generate(cfg);
        src.model = src.domain->pomdp;
        src.spec = kind == src.domain->spec.kind ? src.domain->spec
                                                 : spec_from_labels(src.model, kind);
    } else if (!a.model_path.empty()) {
        src.model = load_model(a.model_path);
        src.spec = spec_from_labels(src.model, kind);
    } else {
        throw ConfigInvalid("need either --model or --domain");
    }
    return src;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write file: " + path);
    f << bytes;
}

std::string out_dir_default() {
    const char* env = std::getenv("PSHIELD_OUT_DIR");
    return env ? env : "";
}

// wraps an inner policy and prints one line per decision
class TracingPolicy final : public Policy {
  public:
    TracingPolicy(Policy& inner, const Pomdp& m) : inner_(&inner), model_(&m) {}

    int act(const StepContext& ctx, std::mt19937_64& rng) override {
        int a = inner_->act(ctx, rng);
        std::cout << "  step " << ctx.step << ": obs=" << model_->obs_names[ctx.observation]
                  << " support={";
        for (size_t i = 0; i < ctx.support->size(); ++i)
            std::cout << (i ? "," : "") << model_->state_names[(*ctx.support)[i]];
        std::cout << "} allowed={";
        for (size_t i = 0; i < ctx.allowed->size(); ++i)
            std::cout << (i ? "," : "") << model_->action_names[(*ctx.allowed)[i]];
        std::cout << "}" << (ctx.shield_active ? " [shielded]" : "") << " -> "
                  << model_->action_names[a] << "\n";
        return a;
    }
    void begin_episode() override { inner_->begin_episode(); }
    void on_step(const StepContext& ctx, int a, double r) override {
        inner_->on_step(ctx, a, r);
    }
    void end_episode() override { inner_->end_episode(); }

  private:
    Policy* inner_;
    const Pomdp* model_;
};

int cmd_synth(const SourceArgs& sa, const std::string& out, size_t max_nodes,
              const std::string& emit_model) {
    Source src = resolve_source(sa);
    if (!emit_model.empty()) write_file(emit_model, serialize_model(src.model));

    auto t0 = std::chrono::steady_clock::now();
    SupportMdp g = build_support_mdp(src.model, src.spec, max_nodes);
    WinningRegion w = src.spec.is_reach_avoid() ? compute_winning_reach_avoid(g)
                                                : compute_winning_avoid(g);
    Shield sh = extract_shield(w, g);
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::cout << "nodes: " << g.size() << "\n"
              << "winning: " << w.count() << "\n"
              << "table: " << sh.table.size() << "\n"
              << "diameter: " << winning_graph_diameter(g, w) << "\n"
              << "fingerprint: " << std::hex << sh.fingerprint << std::dec << "\n"
              << "time: " << secs << "s\n";
    if (!sh.initial_winning()) {
        std::cerr << "error: " << sh.initial_not_winning.size()
                  << " initial support(s) are not winning; no shield written\n";
        return 1;
    }
    if (!out.empty()) save_shield(sh, out);
    return 0;
}

int cmd_inspect(const SourceArgs& sa, const std::string& shield_path,
                const std::string& emit_model) {
    Source src = resolve_source(sa);
    if (!emit_model.empty()) write_file(emit_model, serialize_model(src.model));

    std::cout << "states: " << src.model.num_states() << "\n"
              << "actions: " << src.model.num_actions() << "\n"
              << "observations: " << src.model.num_obs() << "\n";
    for (const auto& [name, set] : src.model.labels)
        std::cout << "label " << name << ": " << set.size() << "\n";
    std::cout << "fingerprint: " << std::hex << src.model.graph_fingerprint() << std::dec
              << "\n";
    if (src.domain) {
        std::cout << "episode-cap: " << src.domain->episode_cap << "\n"
                  << "normalization: (r + " << src.domain->norm_offset << ") / "
                  << src.domain->norm_scale << "\n";
    }
    if (!shield_path.empty()) {
        Shield sh = load_shield(shield_path, src.model);
        std::cout << "shield-table: " << sh.table.size() << "\n"
                  << "shield-explored: " << sh.explored_nodes << "\n"
                  << "shield-initial-winning: " << (sh.initial_winning() ? "yes" : "no")
                  << "\n";
    }
    return 0;
}

int cmd_simulate(const SourceArgs& sa, const std::string& policy_name, int episodes,
                 uint64_t seed, int cap, bool trace) {
    Source src = resolve_source(sa);
    Shield sh;
    bool shielded = policy_name == "shielded-random";
    if (shielded) {
        sh = synthesize_shield(src.model, src.spec);
        if (!sh.initial_winning())
            throw std::runtime_error("no shield: an initial support is not winning");
    }

    SimulatorConfig cfg;
    cfg.shield = shielded ? &sh : nullptr;
    cfg.episode_cap = cap > 0 ? cap : (src.domain ? src.domain->episode_cap : 100);
    cfg.record_states = true;

    std::mt19937_64 rng(seed);
    UniformRandomPolicy base;
    TracingPolicy tracing(base, src.model);
    Policy& policy = trace ? static_cast<Policy&>(tracing) : base;

    int reached = 0, violated = 0;
    for (int e = 0; e < episodes; ++e) {
        if (trace) std::cout << "episode " << e << ":\n";
        EpisodeTrace tr = run_episode(src.model, src.spec, policy, cfg, rng);
        reached += tr.reached;
        violated += tr.violated;
        std::cout << "episode " << e << ": steps=" << tr.steps
                  << " return=" << tr.sparse_return
                  << " reached=" << (tr.reached ? 1 : 0)
                  << " violated=" << (tr.violated ? 1 : 0)
                  << " final=" << src.model.state_names[tr.states.back()] << "\n";
    }
    std::cout << "total: episodes=" << episodes << " reached=" << reached
              << " violated=" << violated << "\n";
    return 0;
}

TrainConfig build_train_config(const std::string& agent, const std::string& schedule,
                               const std::string& repr, int episodes, int eval_interval,
                               int eval_episodes, double lr, double gamma, double epsilon,
                               uint64_t seed, int cap) {
    TrainConfig cfg;
    cfg.agent = parse_agent(agent);
    cfg.schedule = ShieldSchedule::parse(schedule);
    cfg.repr = parse_repr(repr);
    cfg.episodes = episodes;
    cfg.eval_interval = eval_interval;
    cfg.eval_episodes = eval_episodes;
    cfg.learning_rate = lr;
    cfg.gamma = gamma;
    cfg.epsilon = epsilon;
    cfg.seed = seed;
    cfg.episode_cap = cap;
    cfg.validate();
    return cfg;
}

int cmd_train(const SourceArgs& sa, const TrainConfig& cfg, std::string out) {
    if (sa.domain.empty()) throw ConfigInvalid("train needs --domain");
    Source src = resolve_source(sa);

    bool needs_shield = cfg.schedule.kind != ShieldSchedule::Kind::FixedProbability ||
                        cfg.schedule.p > 0.0;
    Shield sh;
    if (needs_shield) {
        sh = synthesize_shield(src.model, src.spec);
        if (!sh.initial_winning())
            throw std::runtime_error("no shield: an initial support is not winning");
    }

    LearningCurve curve = train(*src.domain, needs_shield ? &sh : nullptr, cfg);
    std::string csv = curve_csv(curve);
    if (out.empty() && !out_dir_default().empty()) out = out_dir_default() + "/curve.csv";
    if (out.empty())
        std::cout << csv;
    else
        write_file(out, csv);
    std::cout << "final-smooth: " << curve.final_smooth() << "\n"
              << "violations-during: " << curve.ledger.during_training << "\n"
              << "violations-after: " << curve.ledger.after_training << "\n";
    return 0;
}

int cmd_matrix(std::vector<std::string> domains, const std::vector<std::string>& agents,
               const std::vector<std::string>& reprs,
               const std::vector<std::string>& shield_flags, int num_seeds,
               const TrainConfig& base, std::string outdir) {
    if (outdir.empty()) outdir = out_dir_default();
    if (outdir.empty()) throw ConfigInvalid("matrix needs --outdir (or PSHIELD_OUT_DIR)");
    std::filesystem::create_directories(outdir);
    if (domains.empty()) domains = domain_names();

    std::vector<MatrixCondition> conditions;
    for (const auto& sf : shield_flags)
        for (const auto& ag : agents)
            for (const auto& rp : reprs) {
                MatrixCondition c;
                if (sf == "shielded")
                    c.shielded = true;
                else if (sf == "unshielded")
                    c.shielded = false;
                else
                    throw ConfigInvalid("conditions must be shielded|unshielded");
                c.agent = parse_agent(ag);
                c.repr = parse_repr(rp);
                conditions.push_back(c);
            }
    std::vector<uint64_t> seeds;
    for (int s = 1; s <= num_seeds; ++s) seeds.push_back(static_cast<uint64_t>(s));

    MatrixBundle bundle = run_matrix(domains, conditions, seeds, base);
    for (const auto& cell : bundle.cells) {
        if (cell.failed) continue;
        std::string path = outdir + "/" + cell.domain + "_" + cell.condition + "_s" +
                           std::to_string(cell.seed) + ".csv";
        write_file(path, curve_csv(cell.curve));
    }
    write_file(outdir + "/manifest.txt", bundle.manifest);
    std::cout << "cells: " << bundle.cells.size() << "\n"
              << "failed: " << bundle.failures.size() << "\n";
    for (const auto& f : bundle.failures) std::cout << "failed-cell: " << f << "\n";
    if (!bundle.cells.empty() && bundle.failures.size() == bundle.cells.size()) return 1;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"belief-support shield synthesis and shielded learning toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize a shield");
    SourceArgs synth_src;
    add_source_flags(synth, synth_src);
    std::string synth_out, synth_emit;
    size_t max_nodes = kDefaultNodeCap;
    synth->add_option("--out", synth_out, "shield output file");
    synth->add_option("--max-nodes", max_nodes, "support-MDP node cap");
    synth->add_option("--emit-model", synth_emit, "also write the model text");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "print model/shield statistics");
    SourceArgs ins_src;
    add_source_flags(inspect, ins_src);
    std::string ins_shield, ins_emit;
    inspect->add_option("--shield", ins_shield, "shield file to inspect");
    inspect->add_option("--emit-model", ins_emit, "also write the model text");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "roll a policy and print traces");
    SourceArgs sim_src;
    add_source_flags(simulate, sim_src);
    std::string sim_policy = "shielded-random";
    int sim_episodes = 1, sim_cap = 0;
    uint64_t sim_seed = 1;
    bool sim_trace = false;
    simulate->add_option("--policy", sim_policy, "random|shielded-random")
        ->check(CLI::IsMember({"random", "shielded-random"}));
    simulate->add_option("--episodes", sim_episodes, "episodes to roll");
    simulate->add_option("--seed", sim_seed, "rng seed");
    simulate->add_flag("--trace", sim_trace, "print each step");

    // shared training flags
    std::string tr_agent = "reinforce", tr_schedule = "always-on", tr_repr = "stacked";
    int tr_episodes = 5000, tr_eval_interval = 100, tr_eval_episodes = 10;
    double tr_lr = 0.05, tr_gamma = 1.0, tr_epsilon = 0.1;
    uint64_t tr_seed = 1;

    auto add_train_flags = [&](CLI::App* cmd) {
        cmd->add_option("--agent", tr_agent, "reinforce|qlearning");
        cmd->add_option("--shield", tr_schedule,
                        "always-on|off|sudden:K|smooth:K:ALPHA|prob:P");
        cmd->add_option("--repr", tr_repr, "obs|support|stacked");
        cmd->add_option("--episodes", tr_episodes, "training episodes");
        cmd->add_option("--eval-interval", tr_eval_interval, "episodes between evaluations");
        cmd->add_option("--eval-episodes", tr_eval_episodes, "episodes per evaluation");
        cmd->add_option("--lr", tr_lr, "learning rate");
        cmd->add_option("--gamma", tr_gamma, "discount");
        cmd->add_option("--epsilon", tr_epsilon, "q-learning exploration rate");
        cmd->add_option("--seed", tr_seed, "rng seed");
    };

    // train
    auto* train_cmd = app.add_subcommand("train", "train one agent, emit a curve CSV");
    SourceArgs tr_src;
    add_source_flags(train_cmd, tr_src);
    add_train_flags(train_cmd);
    std::string tr_out;
    train_cmd->add_option("--out", tr_out, "curve CSV path (default stdout)");

    // matrix
    auto* matrix = app.add_subcommand("matrix", "run the experiment grid");
    std::vector<std::string> mx_domains, mx_agents = {"reinforce"},
                             mx_reprs = {"stacked"},
                             mx_conditions = {"shielded", "unshielded"};
    int mx_seeds = 1;
    std::string mx_outdir;
    matrix->add_option("--domains", mx_domains, "domains (default: all)")->delimiter(',');
    matrix->add_option("--agents", mx_agents, "agents")->delimiter(',');
    matrix->add_option("--reprs", mx_reprs, "representations")->delimiter(',');
    matrix->add_option("--conditions", mx_conditions, "shielded,unshielded")->delimiter(',');
    matrix->add_option("--seeds", mx_seeds, "number of seeds (1..N)");
    matrix->add_option("--outdir", mx_outdir, "output directory");
    add_train_flags(matrix);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_src, synth_out, max_nodes, synth_emit);
        if (inspect->parsed()) return cmd_inspect(ins_src, ins_shield, ins_emit);
        if (simulate->parsed())
            return cmd_simulate(sim_src, sim_policy, sim_episodes, sim_seed, sim_cap,
                                sim_trace);
        TrainConfig cfg = build_train_config(tr_agent, tr_schedule, tr_repr, tr_episodes,
                                             tr_eval_interval, tr_eval_episodes, tr_lr,
                                             tr_gamma, tr_epsilon, tr_seed,
                                             train_cmd->parsed() ? tr_src.cap : 0);
        if (train_cmd->parsed()) return cmd_train(tr_src, cfg, tr_out);
        return cmd_matrix(mx_domains, mx_agents, mx_reprs, mx_conditions, mx_seeds, cfg,
                          mx_outdir);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigInvalid& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const UnsupportedParameter& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
