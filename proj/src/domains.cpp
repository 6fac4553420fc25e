#include "pshield/domains.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace pshield {

namespace {

// Incremental model assembly with name interning; finish() validates.
class Builder {
  public:
    int state(const std::string& name) { return intern(state_ids_, m_.state_names, name); }
    int action(const std::string& name) { return intern(action_ids_, m_.action_names, name); }
    int obs(const std::string& name) { return intern(obs_ids_, m_.obs_names, name); }

    void start(int s, double p) { initial_[s] += p; }
    void t(int s, int a, int to, double p) { trans_[{s, a}][to] += p; }
    void o(int s, int z, double p) { obs_[s][z] += p; }
    void r(int s, int a, double v) { reward_[{s, a}] = v; }
    void restrict_avail(int s, std::vector<int> acts) { avail_[s] = std::move(acts); }
    void lab(const std::string& name, int s) { labels_[name].insert(s); }

    bool has_state(const std::string& name) const { return state_ids_.count(name) > 0; }

    Pomdp finish() {
        m_.resize_tables();
        for (const auto& [s, p] : initial_) m_.initial.emplace_back(s, p);
        for (const auto& [sa, row] : trans_)
            for (const auto& [to, p] : row) m_.trans_row(sa.first, sa.second).emplace_back(to, p);
        for (const auto& [s, row] : obs_)
            for (const auto& [z, p] : row) m_.obs[s].emplace_back(z, p);
        for (const auto& [sa, v] : reward_)
            m_.reward[static_cast<size_t>(sa.first) * m_.num_actions() + sa.second] = v;
        for (const auto& [s, acts] : avail_) m_.avail[s] = acts;
        for (const auto& [name, set] : labels_)
            m_.labels[name] = std::vector<int>(set.begin(), set.end());
        m_.validate();
        return std::move(m_);
    }

  private:
    static int intern(std::map<std::string, int>& ids, std::vector<std::string>& names,
                      const std::string& name) {
        auto [it, ins] = ids.emplace(name, static_cast<int>(names.size()));
        if (ins) names.push_back(name);
        return it->second;
    }

    Pomdp m_;
    std::map<std::string, int> state_ids_, action_ids_, obs_ids_;
    std::map<int, double> initial_;
    std::map<std::pair<int, int>, std::map<int, double>> trans_;
    std::map<int, std::map<int, double>> obs_;
    std::map<std::pair<int, int>, double> reward_;
    std::map<int, std::vector<int>> avail_;
    std::map<std::string, std::set<int>> labels_;
};

struct Cell {
    int x = 0, y = 0;
    bool operator==(const Cell&) const = default;
    bool operator<(const Cell& o) const { return std::tie(x, y) < std::tie(o.x, o.y); }
};

int manhattan(Cell a, Cell b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

std::string cell_name(Cell c) { return std::to_string(c.x) + "_" + std::to_string(c.y); }

// up/down/left/right deltas
constexpr int kDx[4] = {0, 0, -1, 1};
constexpr int kDy[4] = {1, -1, 0, 0};
const char* kMoveNames[4] = {"up", "down", "left", "right"};

struct Grid {
    int n;
    bool inside(Cell c) const { return c.x >= 0 && c.x < n && c.y >= 0 && c.y < n; }
    // one step in direction d; off-grid moves stay put
    Cell step(Cell c, int d) const {
        Cell t{c.x + kDx[d], c.y + kDy[d]};
        return inside(t) ? t : c;
    }
    std::vector<Cell> cells() const {
        std::vector<Cell> out;
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) out.push_back({x, y});
        return out;
    }
};

// battery reading e-1/e/e+1 with weights .25/.5/.25; out-of-range levels are
// dropped and the rest renormalized
std::vector<std::pair<int, double>> battery_reading(int e, int emax) {
    std::vector<std::pair<int, double>> out;
    double total = 0.0;
    for (int lvl = e - 1; lvl <= e + 1; ++lvl) {
        if (lvl < 0 || lvl > emax) continue;
        double w = lvl == e ? 0.5 : 0.25;
        out.emplace_back(lvl, w);
        total += w;
    }
    for (auto& [lvl, w] : out) w /= total;
    return out;
}

// ---------------------------------------------------------------------------
// Obstacle: noisy advance through static traps, position never observed.
// ---------------------------------------------------------------------------

std::vector<Cell> obstacle_traps(int n) {
    // fixed pseudo-random trap set seeded by the grid size; traps stay off
    // the western column and the northern row so a safe route always exists
    std::vector<Cell> candidates;
    for (int y = 0; y <= n - 2; ++y)
        for (int x = 1; x < n; ++x)
            if (!(x == n - 1 && y == n - 1)) candidates.push_back({x, y});
    uint64_t lcg = 0x9e3779b97f4a7c15ull ^ (static_cast<uint64_t>(n) * 0x2545f4914f6cdd1dull);
    std::vector<Cell> traps;
    int want = std::max(1, n * n / 6);
    while (static_cast<int>(traps.size()) < want && !candidates.empty()) {
        lcg = lcg * 6364136223846793005ull + 1442695040888963407ull;
        size_t idx = (lcg >> 33) % candidates.size();
        traps.push_back(candidates[idx]);
        candidates.erase(candidates.begin() + idx);
    }
    std::sort(traps.begin(), traps.end());
    return traps;
}

GeneratedDomain gen_obstacle(const DomainConfig& cfg) {
    const int n = cfg.grid_size;
    Grid g{n};
    Cell exit{n - 1, n - 1};
    auto traps = obstacle_traps(n);
    auto is_trap = [&](Cell c) { return std::binary_search(traps.begin(), traps.end(), c); };

    Builder b;
    // conveyor-style rover: it can only head toward the exit corner
    const int dirs[2] = {0, 3};  // up, right
    std::vector<int> moves;
    for (int d : dirs) moves.push_back(b.action(kMoveNames[d]));
    int z_none = b.obs("none"), z_trap = b.obs("trap"), z_exit = b.obs("exit"),
        z_done = b.obs("done");

    std::map<Cell, int> sid;
    for (Cell c : g.cells()) sid[c] = b.state("c" + cell_name(c));
    int sink = b.state("sink");

    for (Cell c : g.cells()) {
        int s = sid[c];
        if (c == exit) {
            b.o(s, z_exit, 1.0);
            b.lab("reach", s);
            for (int m : moves) {
                b.t(s, m, sink, 1.0);
                b.r(s, m, 1000.0);
            }
            continue;
        }
        if (is_trap(c)) {
            b.o(s, z_trap, 1.0);
            b.lab("avoid", s);
            for (int m : moves) {
                b.t(s, m, sink, 1.0);
                b.r(s, m, -1000.0);
            }
            continue;
        }
        b.o(s, z_none, 1.0);
        for (size_t i = 0; i < moves.size(); ++i) {
            // advance 1 or 2 cells with equal probability, clamped at walls
            Cell one = g.step(c, dirs[i]);
            Cell two = g.step(one, dirs[i]);
            b.t(s, moves[i], sid[one], 0.5);
            b.t(s, moves[i], sid[two], 0.5);
            b.r(s, moves[i], -1.0);
        }
    }
    b.o(sink, z_done, 1.0);
    for (int m : moves) b.t(sink, m, sink, 1.0);

    b.start(sid[{0, 0}], 0.5);
    b.start(sid[{0, 1}], 0.5);

    GeneratedDomain out;
    out.name = "obstacle";
    out.pomdp = b.finish();
    out.spec = spec_from_labels(out.pomdp, Specification::Kind::ReachAvoid);
    out.norm_offset = 1000.0;
    out.norm_scale = 2000.0;
    out.episode_cap = cfg.episode_cap > 0 ? cfg.episode_cap : 100;
    out.dense_potential.assign(out.pomdp.num_states(), 0.0);
    for (Cell c : g.cells())
        if (!is_trap(c)) out.dense_potential[sid[c]] = -manhattan(c, exit);
    return out;
}

// ---------------------------------------------------------------------------
// Refuel: battery-limited rover, diagonal obstacles, recharge stations.
// ---------------------------------------------------------------------------

GeneratedDomain gen_refuel(const DomainConfig& cfg) {
    const int n = cfg.grid_size;
    const int emax = cfg.energy;
    if (n < 4) throw UnsupportedParameter("refuel needs grid_size >= 4");
    Grid g{n};
    Cell goal{n - 1, n - 1};
    std::vector<Cell> stations = {{0, 0}, {n / 2, 1}};
    auto is_station = [&](Cell c) {
        return std::find(stations.begin(), stations.end(), c) != stations.end();
    };
    auto is_obstacle = [&](Cell c) { return c.x == c.y && c.x >= 1 && c.x <= n - 2; };

    Builder b;
    // the rover only drives toward the goal corner; wall bumps may still
    // waste energy (the success branch spends it in place)
    const int dirs[2] = {0, 3};  // up, right
    std::vector<int> moves;
    for (int d : dirs) moves.push_back(b.action(kMoveNames[d]));
    int recharge = b.action("recharge");

    int atgoal = b.state("atgoal"), crashed = b.state("crashed"),
        stranded = b.state("stranded"), sink = b.state("sink");
    auto sid = [&](Cell c, int e) { return b.state("c" + cell_name(c) + "e" + std::to_string(e)); };

    // observations: exact position, battery reading within +/- 1 level
    auto zid = [&](Cell c, int lvl) { return b.obs("c" + cell_name(c) + "b" + std::to_string(lvl)); };
    int z_goal = b.obs("goal"), z_crash = b.obs("crash"), z_empty = b.obs("empty"),
        z_done = b.obs("done");

    for (Cell c : g.cells()) {
        if (is_obstacle(c) || c == goal) continue;
        int elo = is_station(c) ? 0 : 1;
        for (int e = elo; e <= emax; ++e) {
            int s = sid(c, e);
            for (auto [lvl, w] : battery_reading(e, emax)) b.o(s, zid(c, lvl), w);
            std::vector<int> acts;
            if (e >= 1) {
                for (size_t i = 0; i < moves.size(); ++i) {
                    acts.push_back(moves[i]);
                    Cell c2 = g.step(c, dirs[i]);
                    // move succeeds (energy spent) or wheels slip in place
                    int succ;
                    if (is_obstacle(c2))
                        succ = crashed;
                    else if (c2 == goal)
                        succ = atgoal;
                    else if (e - 1 == 0)
                        succ = is_station(c2) ? sid(c2, 0) : stranded;
                    else
                        succ = sid(c2, e - 1);
                    b.t(s, moves[i], succ, 0.8);
                    b.t(s, moves[i], s, 0.2);
                }
            }
            if (is_station(c)) {
                acts.push_back(recharge);
                b.t(s, recharge, sid(c, emax), 1.0);
            }
            b.restrict_avail(s, acts);
        }
    }
    b.o(atgoal, z_goal, 1.0);
    b.lab("reach", atgoal);
    for (int a = 0; a < 3; ++a) {
        b.t(atgoal, a, sink, 1.0);
        b.r(atgoal, a, 10.0);
        b.t(crashed, a, crashed, 1.0);
        b.t(stranded, a, stranded, 1.0);
        b.t(sink, a, sink, 1.0);
    }
    b.o(crashed, z_crash, 1.0);
    b.lab("avoid", crashed);
    b.o(stranded, z_empty, 1.0);
    b.lab("avoid", stranded);
    b.o(sink, z_done, 1.0);

    b.start(sid({0, 0}, emax), 1.0);

    GeneratedDomain out;
    out.name = "refuel";
    out.pomdp = b.finish();
    out.spec = spec_from_labels(out.pomdp, Specification::Kind::ReachAvoid);
    out.norm_offset = 0.0;
    out.norm_scale = 10.0;
    out.episode_cap = cfg.episode_cap > 0 ? cfg.episode_cap : 100;
    out.dense_potential.assign(out.pomdp.num_states(), 0.0);
    for (Cell c : g.cells()) {
        if (is_obstacle(c) || c == goal) continue;
        int elo = is_station(c) ? 0 : 1;
        for (int e = elo; e <= emax; ++e)
            out.dense_potential[sid(c, e)] = -manhattan(c, goal);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Rocks: two rocks of latent quality, sampling from adjacent cells.
// ---------------------------------------------------------------------------

GeneratedDomain gen_rocks(const DomainConfig& cfg) {
    const int n = cfg.grid_size;
    if (n < 4) throw UnsupportedParameter("rocks needs grid_size >= 4");
    Grid g{n};
    Cell dropoff{0, 0};
    Cell rocks[2] = {{1, 0}, {3, 0}};

    // quality combos; at least one rock is always valuable
    const char* kCombo[3] = {"GG", "GB", "BG"};
    auto good = [&](int q, int rock) { return kCombo[q][rock] == 'G'; };
    const char* kLs[3] = {"n", "g", "b"};  // last sample: none/good/bad

    Builder b;
    std::vector<int> moves;
    for (int d = 0; d < 4; ++d) moves.push_back(b.action(kMoveNames[d]));
    int sample = b.action("sample"), collect = b.action("collect");

    auto search_sid = [&](Cell c, int q, int ls) {
        return b.state("c" + cell_name(c) + kCombo[q] + kLs[ls]);
    };
    auto carry_sid = [&](Cell c) { return b.state("k" + cell_name(c)); };
    int atdrop = b.state("atdrop"), badcollect = b.state("badcollect"), sink = b.state("sink");

    auto search_zid = [&](Cell c, int ls) { return b.obs("c" + cell_name(c) + kLs[ls]); };
    auto carry_zid = [&](Cell c) { return b.obs("k" + cell_name(c)); };
    int z_drop = b.obs("drop"), z_bad = b.obs("bad"), z_done = b.obs("done");

    auto nearest_rock = [&](Cell c) {
        int d0 = manhattan(c, rocks[0]), d1 = manhattan(c, rocks[1]);
        return d1 < d0 ? 1 : 0;
    };
    auto rock_at = [&](Cell c) {
        if (c == rocks[0]) return 0;
        if (c == rocks[1]) return 1;
        return -1;
    };
    auto can_sample = [&](Cell c) {
        return manhattan(c, rocks[0]) <= 1 || manhattan(c, rocks[1]) <= 1;
    };

    for (Cell c : g.cells()) {
        for (int q = 0; q < 3; ++q) {
            for (int ls = 0; ls < 3; ++ls) {
                int s = search_sid(c, q, ls);
                b.o(s, search_zid(c, ls), 1.0);
                std::vector<int> acts;
                // outbound leg: the rover drives away from the drop-off
                for (int d : {0, 3}) {
                    acts.push_back(moves[d]);
                    b.t(s, moves[d], search_sid(g.step(c, d), q, 0), 1.0);
                }
                if (can_sample(c)) {
                    acts.push_back(sample);
                    int target = nearest_rock(c);
                    b.t(s, sample, search_sid(c, q, good(q, target) ? 1 : 2), 1.0);
                }
                if (int rk = rock_at(c); rk >= 0) {
                    acts.push_back(collect);
                    if (good(q, rk)) {
                        b.t(s, collect, carry_sid(c), 1.0);
                        b.r(s, collect, 10.0);
                    } else {
                        b.t(s, collect, badcollect, 1.0);
                        b.r(s, collect, -10.0);
                    }
                }
                b.restrict_avail(s, acts);
            }
        }
        // carrying a valuable rock: movement only, deliver at the drop-off
        int s = carry_sid(c);
        b.o(s, carry_zid(c), 1.0);
        std::vector<int> acts;
        // return leg: only homebound moves are available while carrying
        for (int d : {1, 2}) {
            acts.push_back(moves[d]);
            Cell c2 = g.step(c, d);
            b.t(s, moves[d], c2 == dropoff ? atdrop : carry_sid(c2), 1.0);
        }
        b.restrict_avail(s, acts);
    }
    b.o(atdrop, z_drop, 1.0);
    b.lab("reach", atdrop);
    b.o(badcollect, z_bad, 1.0);
    b.lab("avoid", badcollect);
    b.o(sink, z_done, 1.0);
    for (int d = 0; d < 4; ++d) {
        b.t(atdrop, moves[d], sink, 1.0);
        b.r(atdrop, moves[d], 10.0);
        b.t(badcollect, moves[d], badcollect, 1.0);
        b.t(sink, moves[d], sink, 1.0);
    }
    b.restrict_avail(atdrop, moves);
    b.restrict_avail(badcollect, moves);
    b.restrict_avail(sink, moves);

    for (int q = 0; q < 3; ++q) b.start(search_sid(dropoff, q, 0), 1.0 / 3.0);

    GeneratedDomain out;
    out.name = "rocks";
    out.pomdp = b.finish();
    out.spec = spec_from_labels(out.pomdp, Specification::Kind::ReachAvoid);
    out.norm_offset = 10.0;
    out.norm_scale = 30.0;
    out.episode_cap = cfg.episode_cap > 0 ? cfg.episode_cap : 100;
    out.dense_potential.assign(out.pomdp.num_states(), 0.0);
    for (Cell c : g.cells()) {
        int near = std::min(manhattan(c, rocks[0]), manhattan(c, rocks[1]));
        for (int q = 0; q < 3; ++q)
            for (int ls = 0; ls < 3; ++ls) out.dense_potential[search_sid(c, q, ls)] = -near;
        out.dense_potential[carry_sid(c)] = -manhattan(c, dropoff);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evade: deterministic pursuer (speed 2) that cannot enter the door column;
// scanning reveals its position for one step.
// ---------------------------------------------------------------------------

GeneratedDomain gen_evade(const DomainConfig& cfg) {
    const int n = cfg.grid_size;
    const int radius = cfg.radius;
    if (n < 4) throw UnsupportedParameter("evade needs grid_size >= 4");
    Grid g{n};
    Cell door{0, n - 1};

    // one pursuit substep toward the agent, larger axis first (ties go to x)
    auto chase_step = [&](Cell v, Cell a) {
        int dx = a.x - v.x, dy = a.y - v.y;
        if (dx != 0 && std::abs(dx) >= std::abs(dy))
            return Cell{v.x + (dx > 0 ? 1 : -1), v.y};
        if (dy != 0) return Cell{v.x, v.y + (dy > 0 ? 1 : -1)};
        return v;
    };

    Builder b;
    std::vector<int> moves;
    for (int d = 0; d < 4; ++d) moves.push_back(b.action(kMoveNames[d]));
    b.action("scan");

    auto sid = [&](Cell a, Cell v, int f) {
        return b.state("a" + cell_name(a) + "v" + cell_name(v) + (f ? "s" : "n"));
    };
    int atdoor = b.state("atdoor"), caught = b.state("caught"), sink = b.state("sink");

    auto zid = [&](Cell a, Cell v, bool seen) {
        return b.obs("a" + cell_name(a) + (seen ? "v" + cell_name(v) : std::string("u")));
    };
    int z_door = b.obs("door"), z_caught = b.obs("caught"), z_done = b.obs("done");

    std::vector<std::pair<Cell, Cell>> configs;  // (agent, adversary)
    for (Cell a : g.cells()) {
        if (a == door) continue;
        for (Cell v : g.cells()) {
            if (v == a) continue;
            configs.emplace_back(a, v);
        }
    }

    for (auto [a, v] : configs) {
        for (int f = 0; f < 2; ++f) {
            int s = sid(a, v, f);
            bool seen = f == 1 || manhattan(a, v) <= radius;
            b.o(s, zid(a, v, seen), 1.0);
            for (int act = 0; act < 5; ++act) {
                Cell a2 = act < 4 ? g.step(a, act) : a;
                int f2 = act == 4 ? 1 : 0;
                if (a2 == door) {
                    b.t(s, act, atdoor, 1.0);
                    continue;
                }
                Cell v2 = chase_step(v, a2);
                if (v2 == a2) {
                    b.t(s, act, caught, 1.0);
                    continue;
                }
                v2 = chase_step(v2, a2);
                if (v2 == a2) {
                    b.t(s, act, caught, 1.0);
                    continue;
                }
                b.t(s, act, sid(a2, v2, f2), 1.0);
            }
        }
    }
    b.o(atdoor, z_door, 1.0);
    b.lab("reach", atdoor);
    b.o(caught, z_caught, 1.0);
    b.lab("avoid", caught);
    b.o(sink, z_done, 1.0);
    for (int act = 0; act < 5; ++act) {
        b.t(atdoor, act, sink, 1.0);
        b.r(atdoor, act, 10.0);
        b.t(caught, act, caught, 1.0);
        b.t(sink, act, sink, 1.0);
    }

    // the agent starts near the door with the pursuer in the far corner; the
    // closing pursuer is what eventually forces the agent through the door
    b.start(sid({0, n - 3}, {n - 1, 0}, 0), 0.5);
    b.start(sid({0, n - 3}, {n - 1, 1}, 0), 0.5);

    GeneratedDomain out;
    out.name = "evade";
    out.pomdp = b.finish();
    out.spec = spec_from_labels(out.pomdp, Specification::Kind::ReachAvoid);
    out.norm_offset = 0.0;
    out.norm_scale = 10.0;
    out.episode_cap = cfg.episode_cap > 0 ? cfg.episode_cap : 350;
    out.dense_potential.assign(out.pomdp.num_states(), 0.0);
    for (auto [a, v] : configs)
        for (int f = 0; f < 2; ++f) out.dense_potential[sid(a, v, f)] = -manhattan(a, door);
    return out;
}

// ---------------------------------------------------------------------------
// Avoid: two patrollers on rectangular routes with uncertain speed.
// ---------------------------------------------------------------------------

std::vector<Cell> rect_route(int x0, int y0, int x1, int y1) {
    std::vector<Cell> r;
    for (int x = x0; x < x1; ++x) r.push_back({x, y0});
    for (int y = y0; y < y1; ++y) r.push_back({x1, y});
    for (int x = x1; x > x0; --x) r.push_back({x, y1});
    for (int y = y1; y > y0; --y) r.push_back({x0, y});
    return r;
}

GeneratedDomain gen_avoid(const DomainConfig& cfg) {
    const int n = cfg.grid_size;
    const int radius = cfg.radius;
    if (n < 6) throw UnsupportedParameter("avoid needs grid_size >= 6");
    Grid g{n};
    Cell goal{n - 1, n - 1};
    std::vector<Cell> routes[2] = {rect_route(1, 1, 3, 3), rect_route(2, 2, 4, 4)};
    const int len[2] = {static_cast<int>(routes[0].size()), static_cast<int>(routes[1].size())};

    Builder b;
    // the agent only advances toward the goal corner; timing against the
    // patroller phases is the whole game
    const int dirs[2] = {0, 3};  // up, right
    std::vector<int> moves;
    for (int d : dirs) moves.push_back(b.action(kMoveNames[d]));

    auto sid = [&](Cell a, int i1, int i2) {
        return b.state("a" + cell_name(a) + "p" + std::to_string(i1) + "q" + std::to_string(i2));
    };
    int atgoal = b.state("atgoal"), caught = b.state("caught"), sink = b.state("sink");

    auto vis = [&](Cell a, int route, int i) { return manhattan(a, routes[route][i]) <= radius; };
    auto zid = [&](Cell a, int i1, int i2) {
        std::string z = "a" + cell_name(a);
        z += vis(a, 0, i1) ? "p" + std::to_string(i1) : std::string("pu");
        z += vis(a, 1, i2) ? "q" + std::to_string(i2) : std::string("qu");
        return b.obs(z);
    };
    int z_goal = b.obs("goal"), z_caught = b.obs("caught"), z_done = b.obs("done");

    for (Cell a : g.cells()) {
        if (a == goal) continue;
        for (int i1 = 0; i1 < len[0]; ++i1) {
            if (routes[0][i1] == a) continue;
            for (int i2 = 0; i2 < len[1]; ++i2) {
                if (routes[1][i2] == a) continue;
                int s = sid(a, i1, i2);
                b.o(s, zid(a, i1, i2), 1.0);
                for (size_t d = 0; d < moves.size(); ++d) {
                    b.r(s, moves[d], -1.0);
                    Cell a2 = g.step(a, dirs[d]);
                    if (a2 == goal) {
                        b.t(s, moves[d], atgoal, 1.0);
                        continue;
                    }
                    for (int s1 = 1; s1 <= 2; ++s1) {
                        for (int s2 = 1; s2 <= 2; ++s2) {
                            int j1 = (i1 + s1) % len[0], j2 = (i2 + s2) % len[1];
                            bool hit = routes[0][j1] == a2 || routes[1][j2] == a2;
                            b.t(s, moves[d], hit ? caught : sid(a2, j1, j2), 0.25);
                        }
                    }
                }
            }
        }
    }
    b.o(atgoal, z_goal, 1.0);
    b.lab("reach", atgoal);
    b.o(caught, z_caught, 1.0);
    b.lab("avoid", caught);
    b.o(sink, z_done, 1.0);
    for (int m : moves) {
        b.t(atgoal, m, sink, 1.0);
        b.r(atgoal, m, 1000.0);
        b.t(caught, m, sink, 1.0);
        b.r(caught, m, -1000.0);
        b.t(sink, m, sink, 1.0);
    }

    for (int i1 = 0; i1 < len[0]; ++i1)
        for (int i2 = 0; i2 < len[1]; ++i2)
            b.start(sid({0, 0}, i1, i2), 1.0 / (len[0] * len[1]));

    GeneratedDomain out;
    out.name = "avoid";
    out.pomdp = b.finish();
    out.spec = spec_from_labels(out.pomdp, Specification::Kind::ReachAvoid);
    out.norm_offset = 1000.0;
    out.norm_scale = 2000.0;
    out.episode_cap = cfg.episode_cap > 0 ? cfg.episode_cap : 100;
    out.dense_potential.assign(out.pomdp.num_states(), 0.0);
    for (Cell a : g.cells()) {
        if (a == goal) continue;
        for (int i1 = 0; i1 < len[0]; ++i1) {
            if (routes[0][i1] == a) continue;
            for (int i2 = 0; i2 < len[1]; ++i2) {
                if (routes[1][i2] == a) continue;
                out.dense_potential[sid(a, i1, i2)] = -manhattan(a, goal);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Intercept: meet a robot fleeing toward the nearer of two exits; the center
// corridor column is always observed.
// ---------------------------------------------------------------------------

GeneratedDomain gen_intercept(const DomainConfig& cfg) {
    const int n = cfg.grid_size;
    const int radius = cfg.radius;
    if (n < 5) throw UnsupportedParameter("intercept needs grid_size >= 5");
    Grid g{n};
    Cell exits[2] = {{0, 0}, {0, n - 1}};
    const int corridor_x = n / 2;

    auto robot_step = [&](Cell r) {
        int d0 = r.x + r.y, d1 = r.x + (n - 1 - r.y);
        Cell e = d1 < d0 ? exits[1] : exits[0];
        if (r.x > 0) return Cell{r.x - 1, r.y};
        return Cell{r.x, r.y + (e.y > r.y ? 1 : e.y < r.y ? -1 : 0)};
    };
    auto is_exit = [&](Cell c) { return c == exits[0] || c == exits[1]; };

    Builder b;
    std::vector<int> acts;
    for (int d = 0; d < 4; ++d) acts.push_back(b.action(kMoveNames[d]));
    acts.push_back(b.action("stay"));

    auto sid = [&](Cell a, Cell r, int ph) {
        return b.state("a" + cell_name(a) + "r" + cell_name(r) + (ph ? "m" : "w"));
    };
    int caught = b.state("caught"), escaped = b.state("escaped"), sink = b.state("sink");

    auto zid = [&](Cell a, Cell r, int ph) {
        bool seen = manhattan(a, r) <= radius || r.x == corridor_x;
        std::string z = "a" + cell_name(a);
        z += seen ? "r" + cell_name(r) : std::string("u");
        z += ph ? "m" : "w";
        return b.obs(z);
    };
    int z_caught = b.obs("caught"), z_escaped = b.obs("escaped"), z_done = b.obs("done");

    for (Cell a : g.cells()) {
        for (Cell r : g.cells()) {
            if (is_exit(r) || r == a) continue;
            for (int ph = 0; ph < 2; ++ph) {
                int s = sid(a, r, ph);
                b.o(s, zid(a, r, ph), 1.0);
                for (size_t ai = 0; ai < acts.size(); ++ai) {
                    b.r(s, acts[ai], -1.0);
                    Cell a2 = ai < 4 ? g.step(a, static_cast<int>(ai)) : a;
                    if (a2 == r) {
                        b.t(s, acts[ai], caught, 1.0);
                        continue;
                    }
                    Cell r2 = r;
                    if (ph == 1) {
                        r2 = robot_step(r);
                        if (r2 == a2) {
                            b.t(s, acts[ai], caught, 1.0);
                            continue;
                        }
                        if (is_exit(r2)) {
                            b.t(s, acts[ai], escaped, 1.0);
                            continue;
                        }
                    }
                    b.t(s, acts[ai], sid(a2, r2, 1 - ph), 1.0);
                }
            }
        }
    }
    b.o(caught, z_caught, 1.0);
    b.lab("reach", caught);
    b.o(escaped, z_escaped, 1.0);
    b.lab("avoid", escaped);
    b.o(sink, z_done, 1.0);
    for (int a : acts) {
        b.t(caught, a, sink, 1.0);
        b.r(caught, a, 1000.0);
        b.t(escaped, a, sink, 1.0);
        b.r(escaped, a, -1000.0);
        b.t(sink, a, sink, 1.0);
    }

    Cell agent0{1, n / 2};
    std::vector<Cell> robot0 = {{n - 1, 1}, {n - 1, n / 2}, {n - 1, n - 2}};
    for (Cell r : robot0) b.start(sid(agent0, r, 0), 1.0 / robot0.size());

    GeneratedDomain out;
    out.name = "intercept";
    out.pomdp = b.finish();
    out.spec = spec_from_labels(out.pomdp, Specification::Kind::ReachAvoid);
    out.norm_offset = 1000.0;
    out.norm_scale = 2000.0;
    out.episode_cap = cfg.episode_cap > 0 ? cfg.episode_cap : 100;
    out.dense_potential.assign(out.pomdp.num_states(), 0.0);
    for (Cell a : g.cells())
        for (Cell r : g.cells()) {
            if (is_exit(r) || r == a) continue;
            for (int ph = 0; ph < 2; ++ph)
                out.dense_potential[sid(a, r, ph)] = -manhattan(a, r);
        }
    return out;
}

}  // namespace

const std::vector<std::string>& domain_names() {
    static const std::vector<std::string> names = {"refuel", "obstacle", "avoid",
                                                   "evade",  "intercept", "rocks"};
    return names;
}

DomainConfig DomainConfig::defaults(const std::string& name) {
    DomainConfig c;
    c.name = name;
    if (name == "refuel") {
        c.grid_size = 6;
        c.energy = 8;
    } else if (name == "obstacle") {
        c.grid_size = 6;
    } else if (name == "avoid") {
        c.grid_size = 6;
        c.radius = 3;
    } else if (name == "evade") {
        c.grid_size = 6;
        c.radius = 2;
    } else if (name == "intercept") {
        c.grid_size = 7;
        c.radius = 1;
    } else if (name == "rocks") {
        c.grid_size = 6;
    } else {
        throw UnsupportedParameter("unknown domain '" + name + "'");
    }
    return c;
}

void DomainConfig::validate() const {
    if (grid_size < 2) throw UnsupportedParameter("grid_size must be >= 2");
    if (radius < 0 || radius >= grid_size)
        throw UnsupportedParameter("radius must be in [0, grid_size)");
    if (energy < 1) throw UnsupportedParameter("energy must be >= 1");
    if (episode_cap < 0) throw UnsupportedParameter("episode_cap must be >= 1");
}

GeneratedDomain generate(const DomainConfig& cfg) {
    cfg.validate();
    GeneratedDomain out;
    if (cfg.name == "obstacle")
        out = gen_obstacle(cfg);
    else if (cfg.name == "refuel")
        out = gen_refuel(cfg);
    else if (cfg.name == "rocks")
        out = gen_rocks(cfg);
    else if (cfg.name == "evade")
        out = gen_evade(cfg);
    else if (cfg.name == "avoid")
        out = gen_avoid(cfg);
    else if (cfg.name == "intercept")
        out = gen_intercept(cfg);
    else
        throw UnsupportedParameter("unknown domain '" + cfg.name + "'");
    out.reward_variant = cfg.reward_variant;
    return out;
}

double normalize_return(const GeneratedDomain& d, double raw_return) {
    return (raw_return + d.norm_offset) / d.norm_scale;
}

double dense_reward(const GeneratedDomain& d, int s, int a) {
    if (d.reward_variant != RewardVariant::DenseShaped)
        throw VariantMismatch("dense_reward on a sparse-variant domain");
    const Pomdp& m = d.pomdp;
    if (!m.action_available(s, a))
        throw ModelError("dense_reward: action unavailable at state");
    double exp_pot = 0.0;
    for (const auto& [t, p] : m.trans_row(s, a)) exp_pot += p * d.dense_potential[t];
    return m.reward_at(s, a) + exp_pot - d.dense_potential[s];
}

}  // namespace pshield
