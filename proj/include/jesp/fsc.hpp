#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "jesp/model.hpp"
#include "jesp/util.hpp"

namespace jesp {

struct NonConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct AlphabetMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

constexpr long kEvalIterationCap = 1000000;

/// One controller node: an action rule, a successor rule per observation,
/// and extraction metadata (representative belief, weight, source vector).
struct FscNode {
    SparseRow action_dist;               // distribution over actions
    std::vector<SparseRow> next;         // [obs] -> distribution over nodes
    Belief representative_belief;        // over the source model's states
    double weight = 0.0;
    int source_alpha_index = -1;
};

/// Policy automaton <N, eta, psi>. Node 0 is the start node. Deterministic
/// controllers hold point-mass distributions throughout.
struct Fsc {
    int agent = 0;
    bool deterministic = true;
    int num_actions = 0;
    int num_obs = 0;
    std::vector<FscNode> nodes;
    // labels of the state space the representative beliefs refer to (the
    // model the controller was extracted from); optional metadata
    std::vector<std::string> belief_labels;

    int size() const { return static_cast<int>(nodes.size()); }

    /// Deterministic accessors (point-mass rules).
    int action_of(int n) const { return nodes[n].action_dist.front().first; }
    int next_of(int n, int o) const { return nodes[n].next[o].front().first; }

    void validate() const {
        if (nodes.empty()) throw ModelError("controller needs at least one node");
        for (const auto& node : nodes) {
            detail::check_row(node.action_dist, "action rule");
            if (static_cast<int>(node.next.size()) != num_obs)
                throw ModelError("successor rule missing for some observation");
            for (const auto& row : node.next) {
                detail::check_row(row, "node transition");
                for (const auto& [n2, p] : row)
                    if (n2 < 0 || n2 >= size()) throw ModelError("successor index out of range");
            }
            for (const auto& [a, p] : node.action_dist)
                if (a < 0 || a >= num_actions) throw ModelError("action index out of range");
            if (deterministic) {
                if (node.action_dist.size() != 1) throw ModelError("stochastic action rule");
                for (const auto& row : node.next)
                    if (row.size() != 1) throw ModelError("stochastic node transition");
            }
        }
    }
};

/// One value vector per controller node (the fixed point of the policy
/// evaluation recursion), plus the residual the iteration stopped at.
struct NodeValueTable {
    std::vector<std::vector<double>> alpha;  // [node][state]
    double residual = 0.0;
    long iterations = 0;

    double value_at(const Belief& b, int node) const {
        double v = 0;
        for (const auto& [s, p] : b.probs) v += p * alpha[node][s];
        return v;
    }
};

/// Iterative policy evaluation of a controller on a POMDP. Starts from the
/// all-zero table and sweeps until the max-norm change drops below
/// eps_eval, leaving every entry within eps_eval/(1-gamma) of the exact
/// fixed point.
inline NodeValueTable evaluate_fsc(const Pomdp& m, const Fsc& f, double eps_eval,
                                   std::vector<double>* residual_history = nullptr) {
    if (f.num_actions != m.num_actions() || f.num_obs != m.num_obs())
        throw AlphabetMismatch("controller alphabets do not match the model");
    if (eps_eval <= 0) throw ModelError("eps_eval must be positive");
    const int S = m.num_states(), N = f.size();
    NodeValueTable t;
    t.alpha.assign(N, std::vector<double>(S, 0.0));
    std::vector<std::vector<double>> fresh = t.alpha;

    for (long it = 0; it < kEvalIterationCap; ++it) {
        double delta = 0;
        for (int n = 0; n < N; ++n) {
            for (int s = 0; s < S; ++s) {
                double total = 0;
                for (const auto& [a, pa] : f.nodes[n].action_dist) {
                    double q = m.reward_at(a, s);
                    for (const auto& [sp, tp] : m.trans_row(a, s)) {
                        double inner = 0;
                        for (const auto& [o, op] : m.obs_row(a, sp)) {
                            double cont = 0;
                            for (const auto& [n2, pn] : f.nodes[n].next[o])
                                cont += pn * t.alpha[n2][sp];
                            inner += op * cont;
                        }
                        q += m.discount * tp * inner;
                    }
                    total += pa * q;
                }
                fresh[n][s] = total;
                delta = std::max(delta, std::abs(total - t.alpha[n][s]));
            }
        }
        t.alpha.swap(fresh);
        t.residual = delta;
        t.iterations = it + 1;
        if (residual_history) residual_history->push_back(delta);
        if (delta < eps_eval) return t;
    }
    throw NonConvergence("policy evaluation did not converge; the model is likely invalid");
}

/// Exact value of a joint controller tuple on the Dec-POMDP: policy
/// evaluation of the cross-product Markov chain over (state, node tuple),
/// returned at (b0, start nodes).
inline double evaluate_joint(const DecPomdp& d, const std::vector<Fsc>& fscs,
                             double eps_eval) {
    if (static_cast<int>(fscs.size()) != d.num_agents)
        throw AlphabetMismatch("need one controller per agent");
    for (int i = 0; i < d.num_agents; ++i)
        if (fscs[i].num_actions != d.num_actions(i) || fscs[i].num_obs != d.num_obs(i))
            throw AlphabetMismatch("controller alphabets do not match agent " +
                                   std::to_string(i));
    const int I = d.num_agents, S = d.num_states();
    std::vector<int> nsz(I);
    for (int i = 0; i < I; ++i) nsz[i] = fscs[i].size();
    JointIndexer nodes_ix(nsz);
    const long NT = nodes_ix.total;

    // per node tuple: expected reward row and sparse successor distribution,
    // built once (grouping observations by successor tuple)
    struct TupleDyn {
        std::vector<double> reward;                       // [s]
        std::vector<std::vector<std::pair<long, double>>> next;  // [s] -> (s'*NT+nt', p)
    };
    std::vector<TupleDyn> dyn(NT);
    std::vector<int> tuple(I), nxt(I);
    for (long nt = 0; nt < NT; ++nt) {
        tuple = nodes_ix.to_tuple(static_cast<int>(nt));
        TupleDyn& td = dyn[nt];
        td.reward.assign(S, 0.0);
        td.next.resize(S);
        // enumerate joint actions in the support of the product action rule
        std::vector<std::pair<int, double>> joint_actions;  // (ja, prob)
        {
            std::vector<std::pair<int, double>> acc = {{0, 1.0}};
            for (int i = 0; i < I; ++i) {
                std::vector<std::pair<int, double>> nxt_acc;
                for (const auto& [prefix, pp] : acc)
                    for (const auto& [a, pa] : fscs[i].nodes[tuple[i]].action_dist)
                        nxt_acc.emplace_back(prefix * d.num_actions(i) + a, pp * pa);
                acc.swap(nxt_acc);
            }
            joint_actions = std::move(acc);
        }
        for (int s = 0; s < S; ++s) {
            std::map<long, double> succ;
            for (const auto& [ja, pa] : joint_actions) {
                td.reward[s] += pa * d.reward_at(ja, s);
                for (const auto& [sp, tp] : d.trans_row(ja, s)) {
                    for (const auto& [jo, op] : d.obs_row(ja, sp)) {
                        // product of per-agent node transitions for this joint obs
                        std::vector<std::pair<long, double>> acc = {{0, 1.0}};
                        for (int i = 0; i < I; ++i) {
                            const int oi = d.obs_indexer.component(jo, i);
                            std::vector<std::pair<long, double>> nxt_acc;
                            for (const auto& [prefix, pp] : acc)
                                for (const auto& [n2, pn] : fscs[i].nodes[tuple[i]].next[oi])
                                    nxt_acc.emplace_back(prefix * fscs[i].size() + n2,
                                                         pp * pn);
                            acc.swap(nxt_acc);
                        }
                        for (const auto& [nt2, pn] : acc)
                            succ[static_cast<long>(sp) * NT + nt2] += pa * tp * op * pn;
                    }
                }
            }
            td.next[s].assign(succ.begin(), succ.end());
        }
    }

    std::vector<double> v(static_cast<size_t>(S) * NT, 0.0), fresh(v.size());
    const double gamma = d.discount;
    for (long it = 0; it < kEvalIterationCap; ++it) {
        double delta = 0;
        for (long nt = 0; nt < NT; ++nt) {
            for (int s = 0; s < S; ++s) {
                double q = dyn[nt].reward[s];
                for (const auto& [idx, p] : dyn[nt].next[s]) {
                    const long sp = idx / NT, nt2 = idx % NT;
                    q += gamma * p * v[sp * NT + nt2];
                }
                fresh[static_cast<size_t>(s) * NT + nt] = q;
                delta = std::max(delta, std::abs(q - v[static_cast<size_t>(s) * NT + nt]));
            }
        }
        v.swap(fresh);
        if (delta < eps_eval) break;
        if (it + 1 == kEvalIterationCap)
            throw NonConvergence("joint evaluation did not converge");
    }
    double out = 0;
    for (const auto& [s, p] : d.initial_belief.probs) out += p * v[static_cast<size_t>(s) * NT];
    return out;
}

/// Uniformly random deterministic controller with 1..max_nodes nodes.
inline Fsc random_fsc(int num_actions, int num_obs, int max_nodes, Rng& rng) {
    if (max_nodes < 1) throw ModelError("max_nodes must be at least 1");
    Fsc f;
    f.deterministic = true;
    f.num_actions = num_actions;
    f.num_obs = num_obs;
    const int n = 1 + uniform_index(rng, max_nodes);
    f.nodes.resize(n);
    for (int k = 0; k < n; ++k) {
        f.nodes[k].action_dist = {{uniform_index(rng, num_actions), 1.0}};
        f.nodes[k].next.resize(num_obs);
        for (int o = 0; o < num_obs; ++o)
            f.nodes[k].next[o] = {{uniform_index(rng, n), 1.0}};
    }
    return f;
}

struct SimulationResult {
    double mean = 0.0;
    double std_error = 0.0;
    long episodes = 0;
};

namespace detail {

inline int sample_row(const SparseRow& row, Rng& rng) {
    double u = uniform_real(rng);
    for (const auto& [i, p] : row) {
        u -= p;
        if (u <= 0) return i;
    }
    return row.back().first;
}

}  // namespace detail

/// Monte-Carlo estimate of the joint controller value: truncated discounted
/// rollouts from b0. The horizon should be chosen so the discarded tail
/// gamma^horizon * Rmax / (1-gamma) is below the precision of interest.
inline SimulationResult simulate(const DecPomdp& d, const std::vector<Fsc>& fscs,
                                 long episodes, int horizon, Rng& rng) {
    const int I = d.num_agents;
    double sum = 0, sumsq = 0;
    std::vector<int> node(I), act(I), obs(I);
    for (long e = 0; e < episodes; ++e) {
        int s = detail::sample_row(d.initial_belief.probs, rng);
        for (int i = 0; i < I; ++i) node[i] = 0;
        double ret = 0, disc = 1.0;
        for (int t = 0; t < horizon; ++t) {
            for (int i = 0; i < I; ++i)
                act[i] = detail::sample_row(fscs[i].nodes[node[i]].action_dist, rng);
            const int ja = d.action_indexer.to_joint(act);
            ret += disc * d.reward_at(ja, s);
            disc *= d.discount;
            s = detail::sample_row(d.trans_row(ja, s), rng);
            const int jo = detail::sample_row(d.obs_row(ja, s), rng);
            for (int i = 0; i < I; ++i) {
                obs[i] = d.obs_indexer.component(jo, i);
                node[i] = detail::sample_row(fscs[i].nodes[node[i]].next[obs[i]], rng);
            }
        }
        sum += ret;
        sumsq += ret * ret;
    }
    SimulationResult r;
    r.episodes = episodes;
    r.mean = sum / episodes;
    const double var = std::max(0.0, sumsq / episodes - r.mean * r.mean);
    r.std_error = std::sqrt(var / episodes);
    return r;
}

// ---------------------------------------------------------------- file form

/// Serializes a controller to its JSON file form. Labels give the agent's
/// action and observation names and the state names the representative
/// beliefs refer to.
inline nlohmann::json fsc_to_json(const Fsc& f, const std::vector<std::string>& action_labels,
                                  const std::vector<std::string>& obs_labels,
                                  const std::vector<std::string>& state_labels) {
    nlohmann::json j;
    j["agent"] = f.agent;
    j["start"] = 0;
    j["deterministic"] = f.deterministic;
    auto nodes = nlohmann::json::array();
    for (int n = 0; n < f.size(); ++n) {
        const FscNode& node = f.nodes[n];
        nlohmann::json jn;
        jn["id"] = n;
        if (f.deterministic) {
            jn["action"] = action_labels[node.action_dist.front().first];
        } else {
            nlohmann::json dist = nlohmann::json::object();
            for (const auto& [a, p] : node.action_dist) dist[action_labels[a]] = p;
            jn["action_dist"] = dist;
        }
        nlohmann::json tr = nlohmann::json::object();
        for (int o = 0; o < f.num_obs; ++o) {
            if (f.deterministic) {
                tr[obs_labels[o]] = node.next[o].front().first;
            } else {
                auto lst = nlohmann::json::array();
                for (const auto& [n2, p] : node.next[o])
                    lst.push_back({{"to", n2}, {"p", p}});
                tr[obs_labels[o]] = lst;
            }
        }
        jn["transitions"] = tr;
        jn["weight"] = node.weight;
        nlohmann::json bel = nlohmann::json::object();
        for (const auto& [s, p] : node.representative_belief.probs)
            bel[state_labels[s]] = p;
        jn["belief"] = bel;
        nodes.push_back(jn);
    }
    j["nodes"] = nodes;
    return j;
}

inline Fsc fsc_from_json(const nlohmann::json& j, const std::vector<std::string>& action_labels,
                         const std::vector<std::string>& obs_labels,
                         const std::vector<std::string>& state_labels) {
    auto find_label = [](const std::vector<std::string>& labels, const std::string& name,
                         const char* what) {
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == name) return static_cast<int>(i);
        throw AlphabetMismatch(std::string("unknown ") + what + " label: " + name);
    };
    Fsc f;
    f.agent = j.value("agent", 0);
    f.deterministic = j.at("deterministic").get<bool>();
    f.num_actions = static_cast<int>(action_labels.size());
    f.num_obs = static_cast<int>(obs_labels.size());
    if (j.value("start", 0) != 0) throw ModelError("start node must be node 0");
    const auto& nodes = j.at("nodes");
    f.nodes.resize(nodes.size());

    // beliefs may refer to a different state space than the model the
    // controller is being loaded against (they are extraction metadata);
    // keep their own label table in that case
    bool foreign_beliefs = false;
    for (const auto& jn : nodes) {
        if (!jn.contains("belief")) continue;
        for (const auto& [sname, p] : jn.at("belief").items()) {
            (void)p;
            if (std::find(state_labels.begin(), state_labels.end(), sname) ==
                state_labels.end()) {
                foreign_beliefs = true;
                break;
            }
        }
        if (foreign_beliefs) break;
    }
    auto belief_index = [&](const std::string& name) {
        if (!foreign_beliefs) return find_label(state_labels, name, "state");
        for (size_t i = 0; i < f.belief_labels.size(); ++i)
            if (f.belief_labels[i] == name) return static_cast<int>(i);
        f.belief_labels.push_back(name);
        return static_cast<int>(f.belief_labels.size()) - 1;
    };

    for (const auto& jn : nodes) {
        const int id = jn.at("id").get<int>();
        if (id < 0 || id >= static_cast<int>(f.nodes.size()))
            throw ModelError("node id out of range");
        FscNode& node = f.nodes[id];
        if (jn.contains("action")) {
            node.action_dist = {
                {find_label(action_labels, jn.at("action").get<std::string>(), "action"), 1.0}};
        } else {
            for (const auto& [name, p] : jn.at("action_dist").items())
                node.action_dist.emplace_back(find_label(action_labels, name, "action"),
                                              p.get<double>());
            std::sort(node.action_dist.begin(), node.action_dist.end());
        }
        node.next.resize(f.num_obs);
        for (const auto& [oname, spec] : jn.at("transitions").items()) {
            const int o = find_label(obs_labels, oname, "observation");
            if (spec.is_number_integer()) {
                node.next[o] = {{spec.get<int>(), 1.0}};
            } else {
                for (const auto& e : spec)
                    node.next[o].emplace_back(e.at("to").get<int>(), e.at("p").get<double>());
                std::sort(node.next[o].begin(), node.next[o].end());
            }
        }
        for (const auto& row : node.next)
            if (row.empty()) throw ModelError("missing transition for some observation");
        node.weight = jn.value("weight", 0.0);
        if (jn.contains("belief"))
            for (const auto& [sname, p] : jn.at("belief").items())
                node.representative_belief.probs.emplace_back(belief_index(sname),
                                                              p.get<double>());
        std::sort(node.representative_belief.probs.begin(),
                  node.representative_belief.probs.end());
    }
    f.validate();
    return f;
}

/// Graphviz rendering of a controller.
inline std::string fsc_to_dot(const Fsc& f, const std::vector<std::string>& action_labels,
                              const std::vector<std::string>& obs_labels) {
    std::string out = "digraph fsc {\n  rankdir=LR;\n";
    for (int n = 0; n < f.size(); ++n) {
        std::string act;
        for (const auto& [a, p] : f.nodes[n].action_dist) {
            if (!act.empty()) act += ", ";
            act += action_labels[a];
            if (!f.deterministic) act += ":" + format_double(p);
        }
        out += "  n" + std::to_string(n) + " [label=\"" + std::to_string(n) + ": " + act +
               "\"" + (n == 0 ? ", penwidth=2" : "") + "];\n";
    }
    for (int n = 0; n < f.size(); ++n)
        for (int o = 0; o < f.num_obs; ++o)
            for (const auto& [n2, p] : f.nodes[n].next[o]) {
                out += "  n" + std::to_string(n) + " -> n" + std::to_string(n2) +
                       " [label=\"" + obs_labels[o];
                if (!f.deterministic && f.nodes[n].next[o].size() > 1)
                    out += " (" + format_double(p) + ")";
                out += "\"];\n";
            }
    out += "}\n";
    return out;
}

}  // namespace jesp
