#pragma once

#include <deque>
#include <map>
#include <vector>

#include "jesp/fsc.hpp"
#include "jesp/model.hpp"
#include "jesp/pomdp_solver.hpp"

namespace jesp {

namespace extraction_detail {

inline Belief merge_belief(const Belief& a, double wa, const Belief& b, double wb) {
    Belief out;
    const double total = wa + wb;
    auto ia = a.probs.begin(), ib = b.probs.begin();
    while (ia != a.probs.end() || ib != b.probs.end()) {
        if (ib == b.probs.end() || (ia != a.probs.end() && ia->first < ib->first)) {
            out.probs.emplace_back(ia->first, wa / total * ia->second);
            ++ia;
        } else if (ia == a.probs.end() || ib->first < ia->first) {
            out.probs.emplace_back(ib->first, wb / total * ib->second);
            ++ib;
        } else {
            out.probs.emplace_back(ia->first,
                                   (wa * ia->second + wb * ib->second) / total);
            ++ia;
            ++ib;
        }
    }
    return out;
}

}  // namespace extraction_detail

/// Turns an alpha-vector set into a deterministic controller. The start
/// node keys the vector maximizing at b0; nodes are created on demand (one
/// per distinct vector index) while a FIFO frontier expands reachable
/// beliefs, merging each node's representative belief as a weighted
/// average. Zero-probability observations self-loop.
inline Fsc extract_fsc(const AlphaVectorSet& gamma, const Pomdp& m, const Belief& b0) {
    if (gamma.vectors.empty()) throw ModelError("cannot extract from an empty vector set");
    Fsc f;
    f.deterministic = true;
    f.num_actions = m.num_actions();
    f.num_obs = m.num_obs();

    std::map<int, int> node_of_alpha;  // vector index -> node id
    auto make_node = [&](int alpha_idx, const Belief& b, double w) {
        FscNode node;
        node.action_dist = {{gamma.vectors[alpha_idx].action, 1.0}};
        node.next.assign(m.num_obs(), {});
        node.representative_belief = b;
        node.weight = w;
        node.source_alpha_index = alpha_idx;
        f.nodes.push_back(std::move(node));
        const int id = f.size() - 1;
        node_of_alpha[alpha_idx] = id;
        return id;
    };

    std::deque<int> frontier;
    frontier.push_back(make_node(gamma.argmax_at(b0), b0, 1.0));

    while (!frontier.empty()) {
        const int n = frontier.front();
        frontier.pop_front();
        const Belief b = f.nodes[n].representative_belief;  // value at pop time
        const double w = f.nodes[n].weight;
        const int a = f.nodes[n].action_dist.front().first;
        auto succ = belief_successors(m, b, a);
        for (int o = 0; o < m.num_obs(); ++o) {
            int target;
            if (succ.obs_prob[o] > 0) {
                Belief nb = succ.unnormalized[o];
                nb.normalize();
                const double w2 = w * succ.obs_prob[o];
                const int alpha_idx = gamma.argmax_at(nb);
                auto it = node_of_alpha.find(alpha_idx);
                if (it == node_of_alpha.end()) {
                    target = make_node(alpha_idx, nb, w2);
                    frontier.push_back(target);
                } else {
                    target = it->second;
                    FscNode& t = f.nodes[target];
                    t.representative_belief = extraction_detail::merge_belief(
                        t.representative_belief, t.weight, nb, w2);
                    t.weight += w2;
                }
            } else {
                target = n;  // unexpected observation: stay put
            }
            f.nodes[n].next[o] = {{target, 1.0}};
        }
    }
    f.validate();
    return f;
}

enum class InitVariant { Stochastic, Deterministic };  // M-S and M-D

/// Extracts one agent's initial controller from a solved centralized
/// relaxation. The node actions are the agent's components of the joint
/// actions attached to the vectors. For each own observation, the other
/// agents' unseen observations either spread the node transition
/// stochastically with their conditional probabilities (M-S) or collapse to
/// the most probable one (M-D). Zero-probability own observations
/// self-loop.
inline Fsc extract_initial_fsc(const AlphaVectorSet& gamma, const Pomdp& mp,
                               const DecPomdp& d, int agent, InitVariant variant) {
    if (gamma.vectors.empty()) throw ModelError("cannot extract from an empty vector set");
    if (mp.provenance != Pomdp::Provenance::mpomdp)
        throw ModelError("extract_initial_fsc needs a flattened centralized model");
    const int Oi = d.num_obs(agent);

    Fsc f;
    f.agent = agent;
    f.deterministic = (variant == InitVariant::Deterministic);
    f.num_actions = d.num_actions(agent);
    f.num_obs = Oi;

    std::map<int, int> node_of_alpha;
    auto make_node = [&](int alpha_idx, const Belief& b, double w) {
        FscNode node;
        const int joint_action = gamma.vectors[alpha_idx].action;
        node.action_dist = {{mp.joint_actions.component(joint_action, agent), 1.0}};
        node.next.assign(Oi, {});
        node.representative_belief = b;
        node.weight = w;
        node.source_alpha_index = alpha_idx;
        f.nodes.push_back(std::move(node));
        const int id = f.size() - 1;
        node_of_alpha[alpha_idx] = id;
        return id;
    };

    std::deque<int> frontier;
    frontier.push_back(make_node(gamma.argmax_at(mp.initial_belief), mp.initial_belief, 1.0));

    while (!frontier.empty()) {
        const int n = frontier.front();
        frontier.pop_front();
        const Belief b = f.nodes[n].representative_belief;
        const double w = f.nodes[n].weight;
        const int joint_action = gamma.vectors[f.nodes[n].source_alpha_index].action;
        auto succ = belief_successors(mp, b, joint_action);

        // find-or-create the node reached via a joint observation, merging
        // representative beliefs by weight
        auto target_of = [&](int jo) {
            Belief nb = succ.unnormalized[jo];
            nb.normalize();
            const double w2 = w * succ.obs_prob[jo];
            const int alpha_idx = gamma.argmax_at(nb);
            auto it = node_of_alpha.find(alpha_idx);
            if (it == node_of_alpha.end()) {
                const int id = make_node(alpha_idx, nb, w2);
                frontier.push_back(id);
                return id;
            }
            FscNode& t = f.nodes[it->second];
            t.representative_belief = extraction_detail::merge_belief(
                t.representative_belief, t.weight, nb, w2);
            t.weight += w2;
            return it->second;
        };

        // per own observation: total mass and the consistent joint observations
        for (int oi = 0; oi < Oi; ++oi) {
            double p_oi = 0;
            std::vector<int> joints;
            for (int jo = 0; jo < mp.num_obs(); ++jo) {
                if (mp.joint_obs.component(jo, agent) != oi) continue;
                if (succ.obs_prob[jo] > 0) {
                    joints.push_back(jo);
                    p_oi += succ.obs_prob[jo];
                }
            }
            std::map<int, double> eta_row;  // node id -> probability
            if (p_oi <= 0) {
                eta_row[n] = 1.0;  // unexpected own observation: stay put
            } else if (variant == InitVariant::Deterministic) {
                int best_jo = joints.front();
                for (int jo : joints)
                    if (succ.obs_prob[jo] > succ.obs_prob[best_jo]) best_jo = jo;
                eta_row[target_of(best_jo)] = 1.0;
            } else {
                for (int jo : joints) eta_row[target_of(jo)] += succ.obs_prob[jo] / p_oi;
            }
            f.nodes[n].next[oi].assign(eta_row.begin(), eta_row.end());
        }
    }
    f.validate();
    return f;
}

}  // namespace jesp
