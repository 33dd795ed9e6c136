#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "jesp/model.hpp"
#include "jesp/util.hpp"

namespace jesp {

/// A hyperplane over the belief simplex together with the action that
/// produced it.
struct AlphaVector {
    std::vector<double> values;  // one entry per state
    int action = 0;

    double dot(const Belief& b) const {
        double v = 0;
        for (const auto& [s, p] : b.probs) v += p * values[s];
        return v;
    }
};

/// Piecewise-linear convex lower bound: the upper envelope of a finite set
/// of alpha vectors.
struct AlphaVectorSet {
    std::vector<AlphaVector> vectors;

    double value_at(const Belief& b) const {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& a : vectors) best = std::max(best, a.dot(b));
        return best;
    }

    int argmax_at(const Belief& b) const {
        double best = -std::numeric_limits<double>::infinity();
        int idx = -1;
        for (size_t i = 0; i < vectors.size(); ++i) {
            const double v = vectors[i].dot(b);
            if (v > best) {
                best = v;
                idx = static_cast<int>(i);
            }
        }
        return idx;
    }

    int size() const { return static_cast<int>(vectors.size()); }

    /// Removes pointwise-dominated vectors (keeps the first of exact ties).
    void prune_dominated() {
        std::vector<char> dead(vectors.size(), 0);
        for (size_t i = 0; i < vectors.size(); ++i) {
            if (dead[i]) continue;
            for (size_t j = 0; j < vectors.size(); ++j) {
                if (i == j || dead[j] || dead[i]) continue;
                bool dominates = true;
                for (size_t s = 0; s < vectors[i].values.size() && dominates; ++s)
                    dominates = vectors[j].values[s] >= vectors[i].values[s];
                if (dominates && (j < i || !std::equal(vectors[i].values.begin(),
                                                       vectors[i].values.end(),
                                                       vectors[j].values.begin())))
                    dead[i] = 1;
            }
        }
        std::vector<AlphaVector> kept;
        kept.reserve(vectors.size());
        for (size_t i = 0; i < vectors.size(); ++i)
            if (!dead[i]) kept.push_back(std::move(vectors[i]));
        vectors.swap(kept);
    }
};

struct SolverConfig {
    double eps_target = 1e-3;
    double timeout_seconds = 5.0;
    long max_trials = 1000000000L;
    int max_alpha_vectors = 100000;
    std::uint64_t seed = 0;  // reserved for tie-breaking; resolution is by lowest index

    void validate() const {
        if (eps_target <= 0) throw ModelError("eps_target must be positive");
        if (timeout_seconds <= 0) throw ModelError("timeout must be positive");
    }
};

namespace solver_detail {

// Sawtooth upper bound: corner values (from the fully-observable
// relaxation) plus belief points, interpolated with the standard
// minimum-ratio rule.
struct SawtoothUb {
    std::vector<double> corners;
    struct Point {
        Belief b;
        double v;
        double corner_value;  // corners dotted with b, precomputed
    };
    std::vector<Point> points;

    double corner_dot(const Belief& b) const {
        double v = 0;
        for (const auto& [s, p] : b.probs) v += p * corners[s];
        return v;
    }

    double value_at(const Belief& b) const {
        const double base = corner_dot(b);
        double best = base;
        for (const auto& pt : points) {
            if (pt.v >= pt.corner_value) continue;
            // ratio = min over the point's support of b(s)/b_k(s)
            double ratio = std::numeric_limits<double>::infinity();
            auto it = b.probs.begin();
            for (const auto& [s, ps] : pt.b.probs) {
                while (it != b.probs.end() && it->first < s) ++it;
                if (it == b.probs.end() || it->first != s) {
                    ratio = 0;
                    break;
                }
                ratio = std::min(ratio, it->second / ps);
            }
            if (ratio > 0)
                best = std::min(best, base + ratio * (pt.v - pt.corner_value));
        }
        return best;
    }

    void add_point(const Belief& b, double v) {
        if (v >= value_at(b) - 1e-12) return;  // no improvement
        points.push_back({b, v, corner_dot(b)});
    }

    // drops points that the rest of the set already covers
    void sweep() {
        std::vector<Point> all;
        all.swap(points);
        for (auto& p : all) {
            if (p.v < value_at(p.b) - 1e-12) points.push_back(std::move(p));
        }
    }
};

// value iteration for the fully-observable relaxation, from above
inline std::vector<double> mdp_upper_values(const Pomdp& m, double eps) {
    const int S = m.num_states(), A = m.num_actions();
    const double top = m.max_abs_reward() / (1.0 - m.discount);
    std::vector<double> v(S, top), fresh(S);
    for (long it = 0; it < 1000000; ++it) {
        double delta = 0;
        for (int s = 0; s < S; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a) {
                double q = m.reward_at(a, s);
                for (const auto& [sp, p] : m.trans_row(a, s)) q += m.discount * p * v[sp];
                best = std::max(best, q);
            }
            fresh[s] = best;
            delta = std::max(delta, std::abs(best - v[s]));
        }
        v.swap(fresh);
        if (delta < eps) break;
    }
    return v;
}

// fixed point of "always play a", iterated from below so every iterate is
// a valid lower bound
inline std::vector<double> blind_policy_values(const Pomdp& m, int a, double eps) {
    const int S = m.num_states();
    const double bottom = -m.max_abs_reward() / (1.0 - m.discount);
    std::vector<double> v(S, bottom), fresh(S);
    for (long it = 0; it < 1000000; ++it) {
        double delta = 0;
        for (int s = 0; s < S; ++s) {
            double q = m.reward_at(a, s);
            for (const auto& [sp, p] : m.trans_row(a, s)) q += m.discount * p * v[sp];
            fresh[s] = q;
            delta = std::max(delta, std::abs(q - v[s]));
        }
        v.swap(fresh);
        if (delta < eps) break;
    }
    return v;
}

}  // namespace solver_detail

struct SolveResult {
    AlphaVectorSet gamma_set;
    double lb_at_b0 = 0, ub_at_b0 = 0;
    long iterations = 0;  // completed trials
    double elapsed = 0;
    bool converged = false;
    std::vector<double> lb_history, ub_history;  // per trial, at b0
    solver_detail::SawtoothUb upper_bound;       // final upper bound, queryable
};

/// Point-based Bellman backup at a belief: for every action, compose the
/// back-projected vector using the current set's maximizers at each
/// successor belief, then return the composite that is best at b. The
/// result never has a lower value at b than the set itself.
inline AlphaVector backup(const Pomdp& m, const Belief& b, const AlphaVectorSet& gamma) {
    if (gamma.vectors.empty()) throw ModelError("backup needs a non-empty vector set");
    const int S = m.num_states(), A = m.num_actions(), O = m.num_obs();
    AlphaVector best;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a) {
        auto succ = belief_successors(m, b, a);
        // pick the maximizing vector for every observation with mass
        std::vector<int> sel(O, 0);
        for (int o = 0; o < O; ++o) {
            if (succ.obs_prob[o] <= 0) continue;
            double bv = -std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < gamma.vectors.size(); ++i) {
                const double v = gamma.vectors[i].dot(succ.unnormalized[o]);
                if (v > bv) {
                    bv = v;
                    sel[o] = static_cast<int>(i);
                }
            }
        }
        AlphaVector av;
        av.action = a;
        av.values.assign(S, 0.0);
        for (int s = 0; s < S; ++s) {
            double q = m.reward_at(a, s);
            for (const auto& [sp, tp] : m.trans_row(a, s)) {
                double inner = 0;
                for (const auto& [o, op] : m.obs_row(a, sp))
                    inner += op * gamma.vectors[sel[o]].values[sp];
                q += m.discount * tp * inner;
            }
            av.values[s] = q;
        }
        const double v = av.dot(b);
        if (v > best_val) {
            best_val = v;
            best = std::move(av);
        }
    }
    return best;
}

/// Anytime point-based solver in the heuristic-search family: the lower
/// bound is a growing alpha-vector set seeded with the blind-policy fixed
/// points, the upper bound a sawtooth point set over the fully-observable
/// relaxation. Trials descend along the upper bound's greedy action and the
/// observation with the largest weighted excess gap, then back up both
/// bounds on the way out. Deterministic given the configuration; all ties
/// break toward the lowest index.
inline SolveResult solve(const Pomdp& m, const SolverConfig& cfg) {
    using namespace solver_detail;
    cfg.validate();
    Stopwatch watch;
    const int O = m.num_obs(), A = m.num_actions();
    const double gamma = m.discount;
    const double seed_eps = std::min(1e-9, cfg.eps_target * 1e-3);

    SolveResult res;
    for (int a = 0; a < A; ++a)
        res.gamma_set.vectors.push_back({blind_policy_values(m, a, seed_eps), a});
    res.gamma_set.prune_dominated();

    SawtoothUb ub;
    ub.corners = mdp_upper_values(m, seed_eps);

    const Belief& b0 = m.initial_belief;

    struct Frame {
        Belief b;
        int depth;
        int chosen_action = -1;
        BeliefSuccessors succ;  // successors of the chosen action
        bool expanded = false;
    };

    auto q_upper = [&](const Belief& b, int a, BeliefSuccessors* out_succ) {
        auto succ = belief_successors(m, b, a);
        double q = 0;
        for (const auto& [s, p] : b.probs) q += p * m.reward_at(a, s);
        for (int o = 0; o < O; ++o) {
            if (succ.obs_prob[o] <= 0) continue;
            Belief nb = succ.unnormalized[o];
            const double mass = succ.obs_prob[o];
            for (auto& [s, p] : nb.probs) p /= mass;
            q += gamma * mass * ub.value_at(nb);
        }
        if (out_succ) *out_succ = std::move(succ);
        return q;
    };

    long expansions = 0;
    auto out_of_budget = [&] {
        return (++expansions & 0xff) == 0 && watch.elapsed() > cfg.timeout_seconds;
    };

    std::vector<Frame> stack;
    bool budget_hit = false;
    for (long trial = 0; trial < cfg.max_trials; ++trial) {
        const double lb0 = res.gamma_set.value_at(b0);
        const double ub0 = ub.value_at(b0);
        res.lb_history.push_back(lb0);
        res.ub_history.push_back(ub0);
        res.iterations = trial;
        if (ub0 - lb0 <= cfg.eps_target) {
            res.converged = true;
            break;
        }
        if (watch.elapsed() > cfg.timeout_seconds || budget_hit) break;

        // descend
        stack.clear();
        stack.push_back({b0, 0, -1, {}, false});
        while (true) {
            Frame& f = stack.back();
            const double gap = ub.value_at(f.b) - res.gamma_set.value_at(f.b);
            const double slack = cfg.eps_target * std::pow(gamma, -f.depth);
            bool descend = gap > slack && f.depth < 5000 && !budget_hit;
            if (descend) {
                // greedy action on the upper bound
                double best_q = -std::numeric_limits<double>::infinity();
                int best_a = 0;
                BeliefSuccessors best_succ;
                for (int a = 0; a < A; ++a) {
                    BeliefSuccessors sa;
                    const double q = q_upper(f.b, a, &sa);
                    if (q > best_q) {
                        best_q = q;
                        best_a = a;
                        best_succ = std::move(sa);
                    }
                    if (out_of_budget()) budget_hit = true;
                }
                f.chosen_action = best_a;
                f.succ = std::move(best_succ);
                // observation with the largest weighted excess gap
                const double child_slack = cfg.eps_target * std::pow(gamma, -(f.depth + 1));
                double best_w = 0;
                int best_o = -1;
                Belief best_b;
                for (int o = 0; o < O; ++o) {
                    if (f.succ.obs_prob[o] <= 0) continue;
                    Belief nb = f.succ.unnormalized[o];
                    for (auto& [s, p] : nb.probs) p /= f.succ.obs_prob[o];
                    const double g = ub.value_at(nb) - res.gamma_set.value_at(nb);
                    const double w = f.succ.obs_prob[o] * (g - child_slack);
                    if (w > best_w) {
                        best_w = w;
                        best_o = o;
                        best_b = std::move(nb);
                    }
                }
                if (best_o >= 0 && !budget_hit) {
                    stack.push_back({std::move(best_b), f.depth + 1, -1, {}, false});
                    continue;
                }
            }
            break;
        }
        // back up along the path
        for (size_t i = stack.size(); i-- > 0;) {
            Frame& f = stack[i];
            if (static_cast<int>(res.gamma_set.vectors.size()) < cfg.max_alpha_vectors)
                res.gamma_set.vectors.push_back(backup(m, f.b, res.gamma_set));
            double best_q = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < A; ++a)
                best_q = std::max(best_q, q_upper(f.b, a, nullptr));
            ub.add_point(f.b, best_q);
        }
        if ((trial & 0x3f) == 0x3f) {
            res.gamma_set.prune_dominated();
            if (ub.points.size() > 4096) ub.sweep();
        }
    }
    res.gamma_set.prune_dominated();
    res.iterations = static_cast<long>(res.lb_history.size());
    res.lb_at_b0 = res.gamma_set.value_at(b0);
    res.ub_at_b0 = ub.value_at(b0);
    if (!res.converged && res.ub_at_b0 - res.lb_at_b0 <= cfg.eps_target)
        res.converged = true;
    res.upper_bound = std::move(ub);
    res.elapsed = watch.elapsed();
    return res;
}

}  // namespace jesp
