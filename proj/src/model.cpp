#include "pshield/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pshield {

namespace {

int find_name(const std::vector<std::string>& names, const std::string& tok) {
    for (size_t i = 0; i < names.size(); ++i)
        if (names[i] == tok) return static_cast<int>(i);
    return -1;
}

// A state/action/observation token is either a declared name or a numeric id.
int resolve(const std::vector<std::string>& names, const std::string& tok,
            const char* what, int line) {
    int idx = find_name(names, tok);
    if (idx >= 0) return idx;
    try {
        size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos == tok.size() && v >= 0 && v < static_cast<int>(names.size())) return v;
    } catch (...) {
    }
    throw ParseError("line " + std::to_string(line) + ": unknown " + what + " '" + tok + "'");
}

double parse_prob(const std::string& tok, int line) {
    try {
        size_t pos = 0;
        double v = std::stod(tok, &pos);
        if (pos == tok.size()) return v;
    } catch (...) {
    }
    throw ParseError("line " + std::to_string(line) + ": bad number '" + tok + "'");
}

void normalize_row(std::vector<std::pair<int, double>>& row, const char* what) {
    double sum = 0.0;
    for (auto& [i, p] : row) {
        if (p < 0.0 || p > 1.0 + kProbTolerance)
            throw ModelError(std::string(what) + ": probability outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kProbTolerance)
        throw ModelError(std::string(what) + " distribution does not sum to 1 (sum=" +
                         std::to_string(sum) + ")");
    if (sum != 1.0)
        for (auto& [i, p] : row) p /= sum;
    std::erase_if(row, [](const auto& e) { return e.second <= 0.0; });
}

uint64_t fnv_mix(uint64_t h, uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return h;
}

uint64_t fnv_str(uint64_t h, const std::string& s) {
    for (unsigned char c : s) h = fnv_mix(h, c);
    return fnv_mix(h, 0xffull);
}

}  // namespace

double Pomdp::obs_prob(int s, int z) const {
    for (const auto& [zz, p] : obs[s])
        if (zz == z) return p;
    return 0.0;
}

bool Pomdp::action_available(int s, int a) const {
    return std::binary_search(avail[s].begin(), avail[s].end(), a);
}

const std::vector<int>& Pomdp::label(const std::string& name) const {
    static const std::vector<int> empty;
    auto it = labels.find(name);
    return it == labels.end() ? empty : it->second;
}

bool Pomdp::has_label(const std::string& name, int s) const {
    const auto& v = label(name);
    return std::binary_search(v.begin(), v.end(), s);
}

void Pomdp::resize_tables() {
    trans.assign(static_cast<size_t>(num_states()) * num_actions(), {});
    obs.assign(num_states(), {});
    avail.assign(num_states(), {});
    reward.assign(static_cast<size_t>(num_states()) * num_actions(), 0.0);
}

void Pomdp::validate() {
    const int S = num_states(), A = num_actions(), Z = num_obs();
    if (S == 0) throw ModelError("model has no states");
    if (A == 0) throw ModelError("model has no actions");
    if (Z == 0) throw ModelError("model has no observations");

    for (auto& v : avail) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    }
    for (int s = 0; s < S; ++s)
        if (avail[s].empty()) {
            // default: all actions available
            for (int a = 0; a < A; ++a) avail[s].push_back(a);
        }

    std::sort(initial.begin(), initial.end());
    normalize_row(initial, "initial");
    if (initial.empty()) throw ModelError("initial distribution is empty");

    for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
            auto& row = trans_row(s, a);
            bool av = action_available(s, a);
            if (!av) {
                if (!row.empty())
                    throw ModelError("transition row for unavailable action " +
                                     action_names[a] + " at state " + state_names[s]);
                continue;
            }
            std::sort(row.begin(), row.end());
            normalize_row(row, ("transition (state " + state_names[s] + ", action " +
                                action_names[a] + ")")
                                   .c_str());
            if (row.empty())
                throw ModelError("transition distribution missing for state " +
                                 state_names[s] + ", action " + action_names[a]);
        }
        auto& orow = obs[s];
        std::sort(orow.begin(), orow.end());
        normalize_row(orow, ("observation (state " + state_names[s] + ")").c_str());
        if (orow.empty())
            throw ModelError("observation distribution missing for state " + state_names[s]);
    }

    for (auto& [name, v] : labels) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
        for (int s : v)
            if (s < 0 || s >= S) throw ModelError("label '" + name + "' names state out of range");
    }
    {
        const auto& r = label("reach");
        const auto& av = label("avoid");
        std::vector<int> inter;
        std::set_intersection(r.begin(), r.end(), av.begin(), av.end(),
                              std::back_inserter(inter));
        if (!inter.empty()) throw ModelError("labels reach and avoid overlap");
    }

    absorbing_zero_.assign(S, 1);
    for (int s = 0; s < S; ++s)
        for (int a : avail[s]) {
            const auto& row = trans_row(s, a);
            if (row.size() != 1 || row[0].first != s || reward_at(s, a) != 0.0) {
                absorbing_zero_[s] = 0;
                break;
            }
        }
}

uint64_t Pomdp::graph_fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    h = fnv_mix(h, num_states());
    h = fnv_mix(h, num_actions());
    h = fnv_mix(h, num_obs());
    for (const auto& n : action_names) h = fnv_str(h, n);
    for (const auto& n : obs_names) h = fnv_str(h, n);
    for (const auto& [s, p] : initial) h = fnv_mix(h, s);
    for (int s = 0; s < num_states(); ++s) {
        for (int a : avail[s]) {
            h = fnv_mix(h, 0x10000u + a);
            for (const auto& [t, p] : trans_row(s, a)) h = fnv_mix(h, t);
        }
        h = fnv_mix(h, 0x20000u);
        for (const auto& [z, p] : obs[s]) h = fnv_mix(h, z);
    }
    for (const auto& [name, v] : labels) {
        h = fnv_str(h, name);
        for (int s : v) h = fnv_mix(h, s);
    }
    return h;
}

void Specification::validate() const {
    if (avoid.empty()) throw ModelError("specification: avoid set is empty");
    if (kind == Kind::ReachAvoid && reach.empty())
        throw ModelError("specification: reach-avoid with empty reach set");
    if (kind == Kind::AvoidOnly && !reach.empty())
        throw ModelError("specification: avoid-only with nonempty reach set");
    std::vector<int> inter;
    std::set_intersection(reach.begin(), reach.end(), avoid.begin(), avoid.end(),
                          std::back_inserter(inter));
    if (!inter.empty()) throw ModelError("specification: reach and avoid overlap");
}

Specification spec_from_labels(const Pomdp& m, Specification::Kind kind) {
    Specification spec;
    spec.kind = kind;
    if (kind == Specification::Kind::ReachAvoid) spec.reach = m.label("reach");
    spec.avoid = m.label("avoid");
    spec.validate();
    return spec;
}

Pomdp parse_model(const std::string& text) {
    Pomdp m;
    std::istringstream in(text);
    std::string raw;
    int lineno = 0;
    bool saw_header = false;

    struct PendingT {
        int line;
        std::string s, a, t;
        double p;
    };
    // T/O/R/avail/start/label lines may reference names declared later only in
    // principle; we require states/actions/observations declared first, so we
    // resolve eagerly but check the section headers exist.
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        std::istringstream ls(line);
        std::string head;
        if (!(ls >> head)) continue;

        if (!saw_header) {
            if (head != "pomdp")
                throw ParseError("line " + std::to_string(lineno) + ": expected 'pomdp' header");
            saw_header = true;
            continue;
        }

        auto rest_tokens = [&]() {
            std::vector<std::string> toks;
            std::string t;
            while (ls >> t) toks.push_back(t);
            return toks;
        };

        if (head == "states:") {
            auto toks = rest_tokens();
            if (toks.empty())
                throw ParseError("line " + std::to_string(lineno) + ": states: needs a count");
            int n = 0;
            try {
                n = std::stoi(toks[0]);
            } catch (...) {
                throw ParseError("line " + std::to_string(lineno) + ": bad state count");
            }
            if (n <= 0) throw ParseError("line " + std::to_string(lineno) + ": state count must be positive");
            m.state_names.clear();
            if (static_cast<int>(toks.size()) - 1 == n) {
                m.state_names.assign(toks.begin() + 1, toks.end());
            } else if (toks.size() == 1) {
                for (int i = 0; i < n; ++i) m.state_names.push_back("s" + std::to_string(i));
            } else {
                throw ParseError("line " + std::to_string(lineno) +
                                 ": states: name count does not match declared count");
            }
        } else if (head == "actions:") {
            m.action_names = rest_tokens();
            if (m.action_names.empty())
                throw ParseError("line " + std::to_string(lineno) + ": actions: needs names");
        } else if (head == "observations:") {
            m.obs_names = rest_tokens();
            if (m.obs_names.empty())
                throw ParseError("line " + std::to_string(lineno) + ": observations: needs names");
        } else if (head == "start:") {
            for (const auto& tok : rest_tokens()) {
                auto colon = tok.rfind(':');
                if (colon == std::string::npos)
                    throw ParseError("line " + std::to_string(lineno) +
                                     ": start entries are <state>:<prob>");
                int s = resolve(m.state_names, tok.substr(0, colon), "state", lineno);
                double p = parse_prob(tok.substr(colon + 1), lineno);
                m.initial.emplace_back(s, p);
            }
        } else if (head == "T:") {
            if (m.trans.empty()) m.resize_tables();
            std::string ss, aa, tt, pp;
            if (!(ls >> ss >> aa >> tt >> pp))
                throw ParseError("line " + std::to_string(lineno) + ": T: needs <s> <a> <s'> <p>");
            int s = resolve(m.state_names, ss, "state", lineno);
            int a = resolve(m.action_names, aa, "action", lineno);
            int t = resolve(m.state_names, tt, "state", lineno);
            m.trans_row(s, a).emplace_back(t, parse_prob(pp, lineno));
        } else if (head == "O:") {
            if (m.obs.empty()) m.resize_tables();
            std::string ss, zz, pp;
            if (!(ls >> ss >> zz >> pp))
                throw ParseError("line " + std::to_string(lineno) + ": O: needs <s> <z> <p>");
            int s = resolve(m.state_names, ss, "state", lineno);
            int z = resolve(m.obs_names, zz, "observation", lineno);
            m.obs[s].emplace_back(z, parse_prob(pp, lineno));
        } else if (head == "R:") {
            if (m.reward.empty()) m.resize_tables();
            std::string ss, aa, rr;
            if (!(ls >> ss >> aa >> rr))
                throw ParseError("line " + std::to_string(lineno) + ": R: needs <s> <a> <r>");
            int s = resolve(m.state_names, ss, "state", lineno);
            int a = resolve(m.action_names, aa, "action", lineno);
            m.reward[static_cast<size_t>(s) * m.num_actions() + a] = parse_prob(rr, lineno);
        } else if (head == "avail:") {
            if (m.avail.empty()) m.resize_tables();
            auto toks = rest_tokens();
            if (toks.size() < 2)
                throw ParseError("line " + std::to_string(lineno) + ": avail: needs <s> <a...>");
            int s = resolve(m.state_names, toks[0], "state", lineno);
            for (size_t i = 1; i < toks.size(); ++i)
                m.avail[s].push_back(resolve(m.action_names, toks[i], "action", lineno));
        } else if (head == "label") {
            std::string name;
            if (!(ls >> name) || name.empty() || name.back() != ':')
                throw ParseError("line " + std::to_string(lineno) + ": label needs '<name>: <s...>'");
            name.pop_back();
            auto& v = m.labels[name];
            std::string tok;
            while (ls >> tok) v.push_back(resolve(m.state_names, tok, "state", lineno));
        } else {
            throw ParseError("line " + std::to_string(lineno) + ": unknown section '" + head + "'");
        }
    }
    if (!saw_header) throw ParseError("empty document: missing 'pomdp' header");
    if (m.state_names.empty()) throw ParseError("missing states: section");
    if (m.action_names.empty()) throw ParseError("missing actions: section");
    if (m.obs_names.empty()) throw ParseError("missing observations: section");
    if (m.trans.empty()) m.resize_tables();
    m.validate();
    return m;
}

Pomdp load_model(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open model file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_model(ss.str());
}

std::string serialize_model(const Pomdp& m) {
    std::ostringstream out;
    out.precision(17);
    out << "pomdp\n";
    out << "states: " << m.num_states();
    for (const auto& n : m.state_names) out << ' ' << n;
    out << "\nactions:";
    for (const auto& n : m.action_names) out << ' ' << n;
    out << "\nobservations:";
    for (const auto& n : m.obs_names) out << ' ' << n;
    out << "\nstart:";
    for (const auto& [s, p] : m.initial) out << ' ' << m.state_names[s] << ':' << p;
    out << '\n';
    for (int s = 0; s < m.num_states(); ++s) {
        if (static_cast<int>(m.avail[s].size()) != m.num_actions()) {
            out << "avail: " << m.state_names[s];
            for (int a : m.avail[s]) out << ' ' << m.action_names[a];
            out << '\n';
        }
    }
    for (int s = 0; s < m.num_states(); ++s)
        for (int a : m.avail[s])
            for (const auto& [t, p] : m.trans_row(s, a))
                out << "T: " << m.state_names[s] << ' ' << m.action_names[a] << ' '
                    << m.state_names[t] << ' ' << p << '\n';
    for (int s = 0; s < m.num_states(); ++s)
        for (const auto& [z, p] : m.obs[s])
            out << "O: " << m.state_names[s] << ' ' << m.obs_names[z] << ' ' << p << '\n';
    for (int s = 0; s < m.num_states(); ++s)
        for (int a : m.avail[s])
            if (double r = m.reward_at(s, a); r != 0.0)
                out << "R: " << m.state_names[s] << ' ' << m.action_names[a] << ' ' << r << '\n';
    for (const auto& [name, v] : m.labels) {
        out << "label " << name << ':';
        for (int s : v) out << ' ' << m.state_names[s];
        out << '\n';
    }
    return out.str();
}

namespace {

void check_vocab(const Pomdp& a, const Pomdp& b) {
    if (a.state_names != b.state_names || a.action_names != b.action_names ||
        a.obs_names != b.obs_names)
        throw ModelError("vocabulary mismatch between models");
}

// support inclusion of sparse rows (rows sorted by id)
bool row_support_subset(const std::vector<std::pair<int, double>>& sub,
                        const std::vector<std::pair<int, double>>& super) {
    size_t j = 0;
    for (const auto& [i, p] : sub) {
        while (j < super.size() && super[j].first < i) ++j;
        if (j == super.size() || super[j].first != i) return false;
    }
    return true;
}

bool supports_included(const Pomdp& m, const Pomdp& m_prime) {
    for (int s = 0; s < m.num_states(); ++s) {
        for (int a = 0; a < m.num_actions(); ++a)
            if (!row_support_subset(m.trans_row(s, a), m_prime.trans_row(s, a))) return false;
        if (!row_support_subset(m.obs[s], m_prime.obs[s])) return false;
    }
    return true;
}

}  // namespace

bool is_graph_preserving(const Pomdp& m, const Pomdp& m_prime) {
    check_vocab(m, m_prime);
    return supports_included(m, m_prime) && supports_included(m_prime, m);
}

bool overapproximates(const Pomdp& m_prime, const Pomdp& m) {
    check_vocab(m, m_prime);
    return supports_included(m, m_prime);
}

}  // namespace pshield
