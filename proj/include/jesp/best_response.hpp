#pragma once

#include <map>
#include <queue>
#include <string>
#include <vector>

#include "jesp/fsc.hpp"
#include "jesp/model.hpp"

namespace jesp {

struct StochasticActionRuleUnsupported : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Hidden state of the single-agent problem faced by one agent when the
/// other agents' controllers are fixed: the environment state, the other
/// agents' node tuple, and an observation component that depends on the
/// formalization. An observation value of -1 encodes "no observation yet"
/// and appears only in the initial belief's support.
struct ExtendedState {
    int s = 0;
    std::vector<int> partner_nodes;  // ordered by agent index, skipping the owner
    int own_obs = -1;                // default form: the owner's current observation
    std::vector<int> partner_obs;    // lagged form: the partners' current observations

    bool operator==(const ExtendedState& o) const {
        return s == o.s && partner_nodes == o.partner_nodes && own_obs == o.own_obs &&
               partner_obs == o.partner_obs;
    }
};

struct BrStats {
    long pre_total = 0;   // extended states enumerated, sentinel layer included
    long pre_core = 0;    // without the sentinel layer
    long post_total = 0;  // after elimination (0 until eliminate_unreachable runs)
    long post_core = 0;

    double core_ratio() const {
        return post_core > 0 ? static_cast<double>(pre_core) / post_core : 0.0;
    }
};

/// A compiled best-response POMDP plus the dense-index <-> extended-state
/// bijection and state-elimination statistics.
struct BestResponsePomdp {
    Pomdp pomdp;
    std::vector<ExtendedState> states;  // dense index -> extended state
    BrStats stats;
    int agent = 0;
    bool eliminated = false;
};

namespace br_detail {

constexpr long kDefaultCapacity = 10000000;

inline std::string extended_label(const DecPomdp& d, int agent, const ExtendedState& e) {
    std::string lbl = d.state_labels[e.s] + "|n=(";
    for (size_t k = 0; k < e.partner_nodes.size(); ++k) {
        if (k) lbl += ",";
        lbl += std::to_string(e.partner_nodes[k]);
    }
    lbl += ")";
    if (e.partner_obs.empty()) {
        lbl += "|o=";
        lbl += e.own_obs < 0 ? std::string("~") : d.obs_labels[agent][e.own_obs];
    } else {
        lbl += "|oo=(";
        size_t k = 0;
        for (int j = 0; j < d.num_agents; ++j) {
            if (j == agent) continue;
            if (k) lbl += ",";
            const int oi = e.partner_obs[k];
            lbl += oi < 0 ? std::string("~") : d.obs_labels[j][oi];
            ++k;
        }
        lbl += ")";
    }
    return lbl;
}

// Enumerates the support of the partners' joint action rule at a node
// tuple: (partner action tuple, probability).
inline std::vector<std::pair<std::vector<int>, double>> partner_action_support(
    const std::vector<const Fsc*>& partners, const std::vector<int>& nodes) {
    std::vector<std::pair<std::vector<int>, double>> acc = {{{}, 1.0}};
    for (size_t j = 0; j < partners.size(); ++j) {
        std::vector<std::pair<std::vector<int>, double>> out;
        out.reserve(acc.size() * partners[j]->nodes[nodes[j]].action_dist.size());
        for (const auto& [prefix, pp] : acc)
            for (const auto& [a, pa] : partners[j]->nodes[nodes[j]].action_dist) {
                auto ext = prefix;
                ext.push_back(a);
                out.emplace_back(std::move(ext), pp * pa);
            }
        acc.swap(out);
    }
    return acc;
}

struct PartnerSet {
    std::vector<const Fsc*> fscs;
    std::vector<int> agent_of;  // agent index of each partner slot
    JointIndexer node_ix;
    long nt_total = 1;
};

inline PartnerSet make_partner_set(const DecPomdp& d, const std::vector<Fsc>& fscs_others,
                                   int agent) {
    const int I = d.num_agents;
    if (static_cast<int>(fscs_others.size()) != I - 1)
        throw AlphabetMismatch("need one controller per other agent");
    PartnerSet ps;
    for (int j = 0, k = 0; j < I; ++j) {
        if (j == agent) continue;
        const Fsc& f = fscs_others[k++];
        if (f.num_actions != d.num_actions(j) || f.num_obs != d.num_obs(j))
            throw AlphabetMismatch("controller alphabets do not match agent " +
                                   std::to_string(j));
        ps.fscs.push_back(&f);
        ps.agent_of.push_back(j);
    }
    std::vector<int> sizes;
    for (const Fsc* f : ps.fscs) sizes.push_back(f->size());
    ps.node_ix = JointIndexer(sizes);
    ps.nt_total = ps.node_ix.total;
    return ps;
}

}  // namespace br_detail

/// Compiles the POMDP faced by `agent` when the other agents follow the
/// fixed controllers `fscs_others` (ordered by agent index, skipping
/// `agent`). Hidden state: (s, partner node tuple, own observation); the
/// observation function deterministically emits the reached state's stored
/// observation. Stochastic partner controllers are handled by expectation
/// over their action and transition rules.
inline BestResponsePomdp build_best_response(const DecPomdp& d,
                                             const std::vector<Fsc>& fscs_others, int agent,
                                             long capacity = br_detail::kDefaultCapacity) {
    const auto ps = br_detail::make_partner_set(d, fscs_others, agent);
    const int I = d.num_agents;
    const int S = d.num_states();
    const int Oi = d.num_obs(agent);
    const int Ai = d.num_actions(agent);
    const long obs_slots = Oi + 1;  // slot Oi is the "no observation yet" sentinel
    const long total = static_cast<long>(S) * ps.nt_total * obs_slots;
    if (total > capacity)
        throw CapacityExceeded("extended state space has " + std::to_string(total) +
                               " states (cap " + std::to_string(capacity) + ")");

    BestResponsePomdp out;
    out.agent = agent;
    out.stats.pre_total = total;
    out.stats.pre_core = static_cast<long>(S) * ps.nt_total * Oi;
    auto index_of = [&](int s, long nt, int obs_slot) {
        return (static_cast<long>(s) * ps.nt_total + nt) * obs_slots + obs_slot;
    };

    out.states.resize(total);
    Pomdp& m = out.pomdp;
    m.provenance = Pomdp::Provenance::best_response;
    m.discount = d.discount;
    m.action_labels = d.action_labels[agent];
    m.obs_labels = d.obs_labels[agent];
    m.state_labels.resize(total);
    for (int s = 0; s < S; ++s)
        for (long nt = 0; nt < ps.nt_total; ++nt) {
            const auto nodes = ps.node_ix.to_tuple(static_cast<int>(nt));
            for (int oslot = 0; oslot < obs_slots; ++oslot) {
                ExtendedState e;
                e.s = s;
                e.partner_nodes = nodes;
                e.own_obs = (oslot == Oi) ? -1 : oslot;
                const long idx = index_of(s, nt, oslot);
                m.state_labels[idx] = br_detail::extended_label(d, agent, e);
                out.states[idx] = std::move(e);
            }
        }

    m.transition.assign(static_cast<size_t>(Ai) * total, {});
    m.observation.assign(static_cast<size_t>(Ai) * total, {});
    m.reward.assign(static_cast<size_t>(Ai) * total, 0.0);

    for (int ai = 0; ai < Ai; ++ai)
        for (long idx = 0; idx < total; ++idx) {
            const int oslot = static_cast<int>(idx % obs_slots);
            // sentinel states are never re-entered; give them a valid row anyway
            m.observation[static_cast<size_t>(ai) * total + idx] =
                (oslot == Oi) ? Belief::uniform(Oi).probs : SparseRow{{oslot, 1.0}};
        }

    // T_e and r_e do not depend on the source state's observation slot
    std::vector<int> ja_tuple(I);
    for (int s = 0; s < S; ++s) {
        for (long nt = 0; nt < ps.nt_total; ++nt) {
            const auto nodes = ps.node_ix.to_tuple(static_cast<int>(nt));
            const auto support = br_detail::partner_action_support(ps.fscs, nodes);
            for (int ai = 0; ai < Ai; ++ai) {
                double rew = 0;
                std::map<long, double> row;
                for (const auto& [acts, pa] : support) {
                    for (size_t k = 0; k < ps.agent_of.size(); ++k)
                        ja_tuple[ps.agent_of[k]] = acts[k];
                    ja_tuple[agent] = ai;
                    const int ja = d.action_indexer.to_joint(ja_tuple);
                    rew += pa * d.reward_at(ja, s);
                    for (const auto& [sp, tp] : d.trans_row(ja, s)) {
                        for (const auto& [jo, op] : d.obs_row(ja, sp)) {
                            const int own = d.obs_indexer.component(jo, agent);
                            // product of partner node transitions under this joint obs
                            std::vector<std::pair<long, double>> acc = {{0, 1.0}};
                            for (size_t k = 0; k < ps.fscs.size(); ++k) {
                                const int oj = d.obs_indexer.component(jo, ps.agent_of[k]);
                                std::vector<std::pair<long, double>> ext;
                                ext.reserve(acc.size());
                                for (const auto& [prefix, pp] : acc)
                                    for (const auto& [n2, pn] :
                                         ps.fscs[k]->nodes[nodes[k]].next[oj])
                                        ext.emplace_back(prefix * ps.fscs[k]->size() + n2,
                                                         pp * pn);
                                acc.swap(ext);
                            }
                            const double w = pa * tp * op;
                            for (const auto& [nt2, pn] : acc)
                                row[index_of(sp, nt2, own)] += w * pn;
                        }
                    }
                }
                SparseRow srow(row.begin(), row.end());
                for (int oslot = 0; oslot < obs_slots; ++oslot) {
                    const long idx = index_of(s, nt, oslot);
                    m.transition[static_cast<size_t>(ai) * total + idx] = srow;
                    m.reward[static_cast<size_t>(ai) * total + idx] = rew;
                }
            }
        }
    }

    // b0_e: the sentinel layer at the partners' start nodes
    for (const auto& [s, p] : d.initial_belief.probs)
        m.initial_belief.probs.emplace_back(index_of(s, 0, Oi), p);
    std::sort(m.initial_belief.probs.begin(), m.initial_belief.probs.end());
    return out;
}

/// Restricts a best-response POMDP to the extended states reachable from
/// the initial belief (breadth-first closure over positive-probability
/// transitions under every action). Idempotent; the value function at b0 is
/// unchanged.
inline BestResponsePomdp eliminate_unreachable(const BestResponsePomdp& brp) {
    const Pomdp& m = brp.pomdp;
    const int S = m.num_states(), A = m.num_actions();
    std::vector<char> reach(S, 0);
    std::queue<int> frontier;
    for (const auto& [s, p] : m.initial_belief.probs) {
        if (!reach[s]) {
            reach[s] = 1;
            frontier.push(s);
        }
    }
    while (!frontier.empty()) {
        const int s = frontier.front();
        frontier.pop();
        for (int a = 0; a < A; ++a)
            for (const auto& [sp, p] : m.trans_row(a, s))
                if (p > 0 && !reach[sp]) {
                    reach[sp] = 1;
                    frontier.push(sp);
                }
    }
    std::vector<int> old_of;  // new dense index -> old index, ascending
    std::vector<int> new_of(S, -1);
    for (int s = 0; s < S; ++s)
        if (reach[s]) {
            new_of[s] = static_cast<int>(old_of.size());
            old_of.push_back(s);
        }
    const int S2 = static_cast<int>(old_of.size());

    BestResponsePomdp out;
    out.agent = brp.agent;
    out.eliminated = true;
    out.stats = brp.stats;
    out.stats.post_total = S2;
    auto is_sentinel = [](const ExtendedState& e) {
        return e.partner_obs.empty() ? e.own_obs < 0 : e.partner_obs[0] < 0;
    };
    // Core coverage: a reachable sentinel state stands for the start-layer
    // core states sharing its (s, node tuple); the layout puts those
    // directly before it. Deduplicate against directly reachable ones.
    {
        const long slots = brp.stats.pre_total / (brp.stats.pre_total - brp.stats.pre_core);
        std::vector<char> covered(brp.states.size(), 0);
        for (int idx : old_of) {
            if (!is_sentinel(brp.states[idx])) {
                covered[idx] = 1;
            } else {
                for (long o = 0; o < slots - 1; ++o) covered[idx - (slots - 1) + o] = 1;
            }
        }
        long core = 0;
        for (char c : covered) core += c;
        out.stats.post_core = core;
    }

    Pomdp& m2 = out.pomdp;
    m2.provenance = m.provenance;
    m2.discount = m.discount;
    m2.action_labels = m.action_labels;
    m2.obs_labels = m.obs_labels;
    m2.state_labels.reserve(S2);
    out.states.reserve(S2);
    for (int idx : old_of) {
        m2.state_labels.push_back(m.state_labels[idx]);
        out.states.push_back(brp.states[idx]);
    }
    m2.transition.reserve(static_cast<size_t>(A) * S2);
    m2.observation.reserve(static_cast<size_t>(A) * S2);
    m2.reward.reserve(static_cast<size_t>(A) * S2);
    for (int a = 0; a < A; ++a)
        for (int s2 = 0; s2 < S2; ++s2) {
            const int s = old_of[s2];
            SparseRow row;
            row.reserve(m.trans_row(a, s).size());
            for (const auto& [sp, p] : m.trans_row(a, s)) row.emplace_back(new_of[sp], p);
            m2.transition.push_back(std::move(row));
            m2.observation.push_back(m.obs_row(a, s));
            m2.reward.push_back(m.reward_at(a, s));
        }
    for (const auto& [s, p] : m.initial_belief.probs)
        m2.initial_belief.probs.emplace_back(new_of[s], p);
    std::sort(m2.initial_belief.probs.begin(), m2.initial_belief.probs.end());
    return out;
}

/// Alternative compilation where the hidden state carries the partners'
/// previous nodes and their current joint observation instead of the
/// owner's. Requires deterministic partner action rules. The observation
/// function becomes a normalized ratio of joint-observation probabilities;
/// the normalizing sums are cached while the transition table is built.
inline BestResponsePomdp build_best_response_lagged(
    const DecPomdp& d, const std::vector<Fsc>& fscs_others, int agent,
    long capacity = br_detail::kDefaultCapacity) {
    const auto ps = br_detail::make_partner_set(d, fscs_others, agent);
    for (const Fsc* f : ps.fscs)
        for (const auto& node : f->nodes)
            if (node.action_dist.size() != 1)
                throw StochasticActionRuleUnsupported(
                    "the lagged formalization requires deterministic action rules");
    const int I = d.num_agents;
    const int S = d.num_states();
    const int Ai = d.num_actions(agent);
    const int Oi = d.num_obs(agent);

    // partner joint observations, plus one sentinel slot
    std::vector<int> osz;
    for (int j = 0; j < I; ++j)
        if (j != agent) osz.push_back(d.num_obs(j));
    JointIndexer po_ix(osz);
    const long po_total = po_ix.total;
    const long obs_slots = po_total + 1;  // last slot = "no observation yet"
    const long total = static_cast<long>(S) * ps.nt_total * obs_slots;
    if (total > capacity)
        throw CapacityExceeded("extended state space has " + std::to_string(total) +
                               " states (cap " + std::to_string(capacity) + ")");

    BestResponsePomdp out;
    out.agent = agent;
    out.stats.pre_total = total;
    out.stats.pre_core = static_cast<long>(S) * ps.nt_total * po_total;
    auto index_of = [&](int s, long nt, long oslot) {
        return (static_cast<long>(s) * ps.nt_total + nt) * obs_slots + oslot;
    };

    out.states.resize(total);
    Pomdp& m = out.pomdp;
    m.provenance = Pomdp::Provenance::best_response;
    m.discount = d.discount;
    m.action_labels = d.action_labels[agent];
    m.obs_labels = d.obs_labels[agent];
    m.state_labels.resize(total);
    for (int s = 0; s < S; ++s)
        for (long nt = 0; nt < ps.nt_total; ++nt) {
            const auto nodes = ps.node_ix.to_tuple(static_cast<int>(nt));
            for (long oslot = 0; oslot < obs_slots; ++oslot) {
                ExtendedState e;
                e.s = s;
                e.partner_nodes = nodes;
                if (oslot == po_total) {
                    e.partner_obs.assign(ps.fscs.size(), -1);
                } else {
                    e.partner_obs = po_ix.to_tuple(static_cast<int>(oslot));
                }
                const long idx = index_of(s, nt, oslot);
                m.state_labels[idx] = br_detail::extended_label(d, agent, e);
                out.states[idx] = std::move(e);
            }
        }

    m.transition.assign(static_cast<size_t>(Ai) * total, {});
    m.observation.assign(static_cast<size_t>(Ai) * total, {});
    m.reward.assign(static_cast<size_t>(Ai) * total, 0.0);

    // denominator cache: sum over the owner's observations of O(ja, s',
    // (partner_obs, o_i)), keyed by destination cell; filled during the
    // transition pass and reused by the observation function
    std::map<std::pair<int, long>, double> denom;  // (ai, dest index) -> sum

    // helper: next node tuple reached from `nodes` under partner obs tuple
    auto next_tuple = [&](const std::vector<int>& nodes, int po,
                          std::vector<std::pair<long, double>>& acc_out) {
        acc_out.assign(1, {0, 1.0});
        for (size_t k = 0; k < ps.fscs.size(); ++k) {
            const int oj = po_ix.component(po, static_cast<int>(k));
            std::vector<std::pair<long, double>> ext;
            for (const auto& [prefix, pp] : acc_out)
                for (const auto& [n2, pn] : ps.fscs[k]->nodes[nodes[k]].next[oj])
                    ext.emplace_back(prefix * ps.fscs[k]->size() + n2, pp * pn);
            acc_out.swap(ext);
        }
    };

    std::vector<int> ja_tuple(I);
    std::vector<std::pair<long, double>> ntacc;
    for (int s = 0; s < S; ++s) {
        for (long nt_prev = 0; nt_prev < ps.nt_total; ++nt_prev) {
            const auto prev_nodes = ps.node_ix.to_tuple(static_cast<int>(nt_prev));
            for (long oslot = 0; oslot < obs_slots; ++oslot) {
                // distribution of the partners' *current* node tuple
                std::vector<std::pair<long, double>> cur;
                if (oslot == po_total) {
                    cur = {{nt_prev, 1.0}};  // start layer: partners sit at their nodes
                } else {
                    next_tuple(prev_nodes, static_cast<int>(oslot), cur);
                }
                const long src = index_of(s, nt_prev, oslot);
                for (int ai = 0; ai < Ai; ++ai) {
                    double rew = 0;
                    std::map<long, double> row;
                    for (const auto& [ntc, pnt] : cur) {
                        const auto cur_nodes = ps.node_ix.to_tuple(static_cast<int>(ntc));
                        for (size_t k = 0; k < ps.agent_of.size(); ++k)
                            ja_tuple[ps.agent_of[k]] =
                                ps.fscs[k]->nodes[cur_nodes[k]].action_dist.front().first;
                        ja_tuple[agent] = ai;
                        const int ja = d.action_indexer.to_joint(ja_tuple);
                        rew += pnt * d.reward_at(ja, s);
                        for (const auto& [sp, tp] : d.trans_row(ja, s)) {
                            // group O(ja, sp, .) by the partners' observation tuple
                            std::map<int, double> po_mass;
                            for (const auto& [jo, op] : d.obs_row(ja, sp)) {
                                std::vector<int> pobs;
                                pobs.reserve(ps.agent_of.size());
                                for (int j : ps.agent_of)
                                    pobs.push_back(d.obs_indexer.component(jo, j));
                                po_mass[po_ix.to_joint(pobs)] += op;
                            }
                            for (const auto& [po, mass] : po_mass) {
                                const long dest = index_of(sp, ntc, po);
                                row[dest] += pnt * tp * mass;
                                denom[{ai, dest}] = mass;  // same value for every source
                            }
                        }
                    }
                    SparseRow srow(row.begin(), row.end());
                    m.transition[static_cast<size_t>(ai) * total + src] = std::move(srow);
                    m.reward[static_cast<size_t>(ai) * total + src] = rew;
                }
            }
        }
    }

    // O_e(ai, e', o_i) = O(ja, s', (partner_obs, o_i)) / cached denominator
    for (int ai = 0; ai < Ai; ++ai) {
        for (long dest = 0; dest < total; ++dest) {
            const ExtendedState& e = out.states[dest];
            SparseRow orow;
            if (e.partner_obs[0] < 0) {
                orow = Belief::uniform(Oi).probs;  // sentinel layer, never re-entered
            } else {
                auto it = denom.find({ai, dest});
                if (it == denom.end() || it->second <= 0) {
                    orow = Belief::uniform(Oi).probs;  // unreachable under this action
                } else {
                    // reconstruct the joint action the partners took to reach e
                    std::vector<int> ja_t(I);
                    for (size_t k = 0; k < ps.agent_of.size(); ++k)
                        ja_t[ps.agent_of[k]] = ps.fscs[k]
                                                   ->nodes[e.partner_nodes[k]]
                                                   .action_dist.front()
                                                   .first;
                    ja_t[agent] = ai;
                    const int ja = d.action_indexer.to_joint(ja_t);
                    std::vector<int> jo_t(I);
                    for (size_t k = 0; k < ps.agent_of.size(); ++k)
                        jo_t[ps.agent_of[k]] = e.partner_obs[k];
                    for (int oi = 0; oi < Oi; ++oi) {
                        jo_t[agent] = oi;
                        const int jo = d.obs_indexer.to_joint(jo_t);
                        double p = 0;
                        for (const auto& [o, op] : d.obs_row(ja, e.s))
                            if (o == jo) p = op;
                        if (p > 0) orow.emplace_back(oi, p / it->second);
                    }
                    if (orow.empty()) orow = Belief::uniform(Oi).probs;
                }
            }
            m.observation[static_cast<size_t>(ai) * total + dest] = std::move(orow);
        }
    }

    for (const auto& [s, p] : d.initial_belief.probs)
        m.initial_belief.probs.emplace_back(index_of(s, 0, po_total), p);
    std::sort(m.initial_belief.probs.begin(), m.initial_belief.probs.end());
    return out;
}

}  // namespace jesp
