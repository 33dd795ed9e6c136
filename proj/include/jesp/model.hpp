#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jesp {

constexpr double kRowSumTolerance = 1e-9;   // invariant check
constexpr double kRenormTolerance = 1e-6;   // rows worse than this are rejected
constexpr double kBeliefDropEps = 1e-12;    // belief entries below this are dropped

struct ModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ZeroProbabilityObservation : std::runtime_error {
    ZeroProbabilityObservation(int action, int obs)
        : std::runtime_error("observation " + std::to_string(obs) +
                             " has zero probability under action " + std::to_string(action)),
          action(action), obs(obs) {}
    int action, obs;
};

struct CapacityExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Sparse probability distribution over states, sorted by state index.
struct Belief {
    std::vector<std::pair<int, double>> probs;

    static Belief point_mass(int s) { return Belief{{{s, 1.0}}}; }

    static Belief uniform(int n) {
        Belief b;
        b.probs.reserve(n);
        for (int s = 0; s < n; ++s) b.probs.emplace_back(s, 1.0 / n);
        return b;
    }

    double at(int s) const {
        auto it = std::lower_bound(probs.begin(), probs.end(), s,
                                   [](const auto& p, int v) { return p.first < v; });
        return (it != probs.end() && it->first == s) ? it->second : 0.0;
    }

    double sum() const {
        double t = 0;
        for (const auto& [s, p] : probs) t += p;
        return t;
    }

    /// Scales to sum 1 and drops entries below kBeliefDropEps. Returns the
    /// pre-normalization mass.
    double normalize() {
        double t = sum();
        if (t <= 0) throw ModelError("cannot normalize a zero-mass belief");
        for (auto& [s, p] : probs) p /= t;
        probs.erase(std::remove_if(probs.begin(), probs.end(),
                                   [](const auto& e) { return e.second < kBeliefDropEps; }),
                    probs.end());
        double t2 = sum();
        for (auto& [s, p] : probs) p /= t2;
        return t;
    }

    bool operator==(const Belief& other) const { return probs == other.probs; }
};

/// Mixed-radix bijection between per-agent index tuples and a dense joint
/// index. Agent 0 is the most significant digit.
struct JointIndexer {
    std::vector<int> sizes;
    long total = 1;

    JointIndexer() = default;
    explicit JointIndexer(std::vector<int> s) : sizes(std::move(s)) {
        for (int n : sizes) total *= n;
    }

    int to_joint(const std::vector<int>& tuple) const {
        long j = 0;
        for (size_t i = 0; i < sizes.size(); ++i) j = j * sizes[i] + tuple[i];
        return static_cast<int>(j);
    }

    std::vector<int> to_tuple(int joint) const {
        std::vector<int> t(sizes.size());
        for (size_t i = sizes.size(); i-- > 0;) {
            t[i] = joint % sizes[i];
            joint /= sizes[i];
        }
        return t;
    }

    int component(int joint, int agent) const {
        for (size_t i = sizes.size(); i-- > 0;) {
            int c = joint % sizes[i];
            if (static_cast<int>(i) == agent) return c;
            joint /= sizes[i];
        }
        throw ModelError("agent out of range");
    }
};

using SparseRow = std::vector<std::pair<int, double>>;  // (index, probability)

namespace detail {

inline void check_row(const SparseRow& row, const char* what) {
    double t = 0;
    for (const auto& [i, p] : row) {
        if (p < -1e-15 || p > 1.0 + kRowSumTolerance)
            throw ModelError(std::string(what) + ": probability out of [0,1]");
        t += p;
    }
    if (std::abs(t - 1.0) > kRowSumTolerance)
        throw ModelError(std::string(what) + ": row sums to " + std::to_string(t));
}

}  // namespace detail

/// Flat single-agent POMDP with sparse dynamics. Rows are indexed by
/// a * num_states + s (transitions, rewards) and a * num_states + s'
/// (observations). Immutable after construction.
struct Pomdp {
    enum class Provenance { native, best_response, mpomdp };

    std::vector<std::string> state_labels;
    std::vector<std::string> action_labels;
    std::vector<std::string> obs_labels;
    std::vector<SparseRow> transition;   // [a*S + s]  -> distribution over s'
    std::vector<SparseRow> observation;  // [a*S + s'] -> distribution over o
    std::vector<double> reward;          // [a*S + s]
    Belief initial_belief;
    double discount = 0.9;

    Provenance provenance = Provenance::native;
    // set when provenance == mpomdp: per-agent factorization of the flat sets
    JointIndexer joint_actions;
    JointIndexer joint_obs;

    int num_states() const { return static_cast<int>(state_labels.size()); }
    int num_actions() const { return static_cast<int>(action_labels.size()); }
    int num_obs() const { return static_cast<int>(obs_labels.size()); }

    const SparseRow& trans_row(int a, int s) const { return transition[a * num_states() + s]; }
    const SparseRow& obs_row(int a, int sp) const { return observation[a * num_states() + sp]; }
    double reward_at(int a, int s) const { return reward[a * num_states() + s]; }

    double max_abs_reward() const {
        double m = 0;
        for (double r : reward) m = std::max(m, std::abs(r));
        return m;
    }

    void validate() const {
        const int S = num_states(), A = num_actions();
        if (S <= 0 || A <= 0 || num_obs() <= 0) throw ModelError("empty state/action/obs set");
        if (discount <= 0.0 || discount >= 1.0)
            throw ModelError("discount must be in (0,1), got " + std::to_string(discount));
        if (static_cast<int>(transition.size()) != A * S ||
            static_cast<int>(observation.size()) != A * S ||
            static_cast<int>(reward.size()) != A * S)
            throw ModelError("table sizes inconsistent with |S|,|A|");
        for (const auto& row : transition) detail::check_row(row, "transition");
        for (const auto& row : observation) detail::check_row(row, "observation");
        detail::check_row(initial_belief.probs, "initial belief");
    }
};

/// Decentralized POMDP: joint dynamics plus per-agent action/observation
/// alphabets. The horizon is infinite; discounting is geometric.
struct DecPomdp {
    int num_agents = 0;
    std::vector<std::string> state_labels;
    std::vector<std::vector<std::string>> action_labels;  // [agent][action]
    std::vector<std::vector<std::string>> obs_labels;     // [agent][obs]
    std::vector<SparseRow> transition;   // [ja*S + s]  over s'
    std::vector<SparseRow> observation;  // [ja*S + s'] over joint obs
    std::vector<double> reward;          // [ja*S + s]
    Belief initial_belief;
    double discount = 0.9;
    JointIndexer action_indexer;
    JointIndexer obs_indexer;

    int num_states() const { return static_cast<int>(state_labels.size()); }
    int num_joint_actions() const { return static_cast<int>(action_indexer.total); }
    int num_joint_obs() const { return static_cast<int>(obs_indexer.total); }
    int num_actions(int agent) const { return static_cast<int>(action_labels[agent].size()); }
    int num_obs(int agent) const { return static_cast<int>(obs_labels[agent].size()); }

    const SparseRow& trans_row(int ja, int s) const { return transition[ja * num_states() + s]; }
    const SparseRow& obs_row(int ja, int sp) const { return observation[ja * num_states() + sp]; }
    double reward_at(int ja, int s) const { return reward[ja * num_states() + s]; }

    void validate() const {
        if (num_agents < 1) throw ModelError("need at least one agent");
        if (discount <= 0.0 || discount >= 1.0)
            throw ModelError("discount must be in (0,1), got " + std::to_string(discount));
        const int S = num_states();
        const long JA = action_indexer.total;
        if (static_cast<long>(transition.size()) != JA * S ||
            static_cast<long>(observation.size()) != JA * S ||
            static_cast<long>(reward.size()) != JA * S)
            throw ModelError("table sizes inconsistent with |S|,|A|");
        for (const auto& row : transition) detail::check_row(row, "transition");
        for (const auto& row : observation) detail::check_row(row, "observation");
        detail::check_row(initial_belief.probs, "initial belief");
    }
};

/// Pr(o | b, a) = sum_{s,s'} b(s) T(s,a,s') O(a,s',o).
inline double observation_prob(const Pomdp& m, const Belief& b, int a, int o) {
    if (a < 0 || a >= m.num_actions()) throw ModelError("action index out of range");
    if (o < 0 || o >= m.num_obs()) throw ModelError("observation index out of range");
    double total = 0;
    for (const auto& [s, bs] : b.probs) {
        for (const auto& [sp, tp] : m.trans_row(a, s)) {
            for (const auto& [oo, op] : m.obs_row(a, sp)) {
                if (oo == o) {
                    total += bs * tp * op;
                    break;
                }
            }
        }
    }
    return total;
}

/// All belief successors of (b, a) in one sweep: for every observation the
/// unnormalized posterior tau(b,a,o)(s') = O(a,s',o) sum_s T(s,a,s') b(s).
/// The posterior masses sum to 1 over observations.
struct BeliefSuccessors {
    std::vector<double> obs_prob;      // [o], mass of each unnormalized posterior
    std::vector<Belief> unnormalized;  // [o]
};

inline BeliefSuccessors belief_successors(const Pomdp& m, const Belief& b, int a) {
    const int S = m.num_states(), O = m.num_obs();
    // dense accumulation over reached next states
    std::vector<double> reached(S, 0.0);
    std::vector<int> touched;
    for (const auto& [s, bs] : b.probs) {
        for (const auto& [sp, tp] : m.trans_row(a, s)) {
            if (reached[sp] == 0.0) touched.push_back(sp);
            reached[sp] += bs * tp;
        }
    }
    std::sort(touched.begin(), touched.end());
    BeliefSuccessors out;
    out.obs_prob.assign(O, 0.0);
    out.unnormalized.resize(O);
    for (int sp : touched) {
        const double mass = reached[sp];
        for (const auto& [o, op] : m.obs_row(a, sp)) {
            const double v = mass * op;
            if (v > 0) {
                out.unnormalized[o].probs.emplace_back(sp, v);
                out.obs_prob[o] += v;
            }
        }
    }
    return out;
}

/// Bayes update; throws ZeroProbabilityObservation when Pr(o|b,a) = 0.
inline Belief belief_update(const Pomdp& m, const Belief& b, int a, int o) {
    if (o < 0 || o >= m.num_obs()) throw ModelError("observation index out of range");
    auto succ = belief_successors(m, b, a);
    if (succ.obs_prob[o] <= 0.0) throw ZeroProbabilityObservation(a, o);
    Belief post = std::move(succ.unnormalized[o]);
    post.normalize();
    return post;
}

/// Centralized relaxation: one controller choosing joint actions and seeing
/// joint observations. Index maps back to per-agent tuples are retained.
inline Pomdp flatten_mpomdp(const DecPomdp& d, long capacity = 100000000L) {
    const long cells = d.action_indexer.total * d.obs_indexer.total;
    if (cells > capacity)
        throw CapacityExceeded("joint action x observation space too large: " +
                               std::to_string(cells));
    Pomdp m;
    m.state_labels = d.state_labels;
    m.action_labels.reserve(d.num_joint_actions());
    for (int ja = 0; ja < d.num_joint_actions(); ++ja) {
        auto t = d.action_indexer.to_tuple(ja);
        std::string lbl;
        for (int i = 0; i < d.num_agents; ++i) {
            if (i) lbl += "__";
            lbl += d.action_labels[i][t[i]];
        }
        m.action_labels.push_back(std::move(lbl));
    }
    m.obs_labels.reserve(d.num_joint_obs());
    for (int jo = 0; jo < d.num_joint_obs(); ++jo) {
        auto t = d.obs_indexer.to_tuple(jo);
        std::string lbl;
        for (int i = 0; i < d.num_agents; ++i) {
            if (i) lbl += "__";
            lbl += d.obs_labels[i][t[i]];
        }
        m.obs_labels.push_back(std::move(lbl));
    }
    m.transition = d.transition;
    m.observation = d.observation;
    m.reward = d.reward;
    m.initial_belief = d.initial_belief;
    m.discount = d.discount;
    m.provenance = Pomdp::Provenance::mpomdp;
    m.joint_actions = d.action_indexer;
    m.joint_obs = d.obs_indexer;
    return m;
}

}  // namespace jesp
