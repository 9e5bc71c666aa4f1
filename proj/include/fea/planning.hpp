// Discrete-time expected-free-energy planning: rollout prediction, per-step
// extrinsic/intrinsic decomposition, softmax plan posterior, plan enumeration,
// and a cross-entropy optimizer for continuous plans.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace fea {

// Deterministic seed mixing for per-sample RNG streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    return splitmix64(seed ^ splitmix64(a ^ splitmix64(b)));
}

// Uniform double in [0,1) from the top 53 bits; portable across platforms.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Finite categorical model: likelihood p(y|x), per-action transitions
// p(x'|x,a) (column-stochastic), log-preferences over observations, and a
// prior state belief.
struct DiscretePOMDP {
    int num_states = 0;
    int num_obs = 0;
    int num_actions = 0;
    Eigen::MatrixXd likelihood;               // O x S, columns sum to 1
    std::vector<Eigen::MatrixXd> transitions; // U matrices, S x S, columns sum to 1
    Eigen::VectorXd preferences;              // O, log p~(y), unnormalized
    Eigen::VectorXd prior;                    // S, simplex

    static constexpr double kStochasticTol = 1e-9;

    void validate() const {
        std::ostringstream msg;
        if (num_states < 1 || num_obs < 1 || num_actions < 1)
            throw std::invalid_argument("DiscretePOMDP: dims must be >= 1");
        if (likelihood.rows() != num_obs || likelihood.cols() != num_states)
            throw std::invalid_argument("DiscretePOMDP: likelihood must be O x S");
        if (static_cast<int>(transitions.size()) != num_actions)
            throw std::invalid_argument("DiscretePOMDP: need one transition matrix per action");
        check_stochastic(likelihood, "likelihood");
        for (int a = 0; a < num_actions; ++a) {
            if (transitions[a].rows() != num_states || transitions[a].cols() != num_states)
                throw std::invalid_argument("DiscretePOMDP: transitions must be S x S");
            msg.str("");
            msg << "transitions[" << a << "]";
            check_stochastic(transitions[a], msg.str().c_str());
        }
        if (preferences.size() != num_obs)
            throw std::invalid_argument("DiscretePOMDP: preferences must have length O");
        if (prior.size() != num_states)
            throw std::invalid_argument("DiscretePOMDP: prior must have length S");
        if (prior.minCoeff() < -kStochasticTol || std::abs(prior.sum() - 1.0) > kStochasticTol)
            throw std::invalid_argument("DiscretePOMDP: prior must lie on the simplex");
    }

private:
    static void check_stochastic(const Eigen::MatrixXd& m, const char* what) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (m.col(c).minCoeff() < -kStochasticTol ||
                std::abs(m.col(c).sum() - 1.0) > kStochasticTol) {
                std::ostringstream msg;
                msg << "DiscretePOMDP: column " << c << " of " << what << " is not stochastic";
                throw std::invalid_argument(msg.str());
            }
        }
    }
};

// Fixed open-loop action sequence.
struct Plan {
    std::vector<int> actions;
};

// Total expected free energy of a plan with its extrinsic (preference) and
// intrinsic (information gain) parts; total = sum_t (extrinsic_t - intrinsic_t).
struct EFEBreakdown {
    double total = 0.0;
    double extrinsic = 0.0;
    double intrinsic = 0.0;
    std::vector<std::pair<double, double>> per_step;  // (extrinsic_t, intrinsic_t)
};

struct PlanPosterior {
    std::vector<Plan> plans;
    Eigen::VectorXd log_prior;
    Eigen::VectorXd probabilities;
};

// Diagonal-Gaussian distribution over continuous plans (horizon x input dim).
struct GaussianPlan {
    Eigen::MatrixXd mean;    // T x m
    Eigen::MatrixXd stddev;  // T x m, > 0
};

// Exact discrete posterior q(x|y): likelihood row times belief, renormalized.
inline Eigen::VectorXd bayes_update(const DiscretePOMDP& pomdp, const Eigen::VectorXd& belief,
                                    int obs_index) {
    if (obs_index < 0 || obs_index >= pomdp.num_obs)
        throw std::invalid_argument("bayes_update: observation index out of range");
    Eigen::VectorXd posterior =
        pomdp.likelihood.row(obs_index).transpose().cwiseProduct(belief);
    const double total = posterior.sum();
    if (!(total > 0.0)) {
        std::ostringstream msg;
        msg << "bayes_update: observation " << obs_index << " has zero likelihood under belief";
        throw std::runtime_error(msg.str());
    }
    return posterior / total;
}

struct RolloutStep {
    Eigen::VectorXd state_belief;  // after the step's action
    Eigen::VectorXd obs_belief;
};

// Open-loop prediction: the belief is pushed through the transition matrix of
// each planned action (no conditioning on imagined observations), and each
// predicted state yields an observation belief through the likelihood.
inline std::vector<RolloutStep> predict_rollout(const DiscretePOMDP& pomdp,
                                                const Eigen::VectorXd& belief, const Plan& plan) {
    if (plan.actions.empty()) throw std::invalid_argument("predict_rollout: empty plan");
    std::vector<RolloutStep> out;
    out.reserve(plan.actions.size());
    Eigen::VectorXd state = belief;
    for (int a : plan.actions) {
        if (a < 0 || a >= pomdp.num_actions)
            throw std::invalid_argument("predict_rollout: action index out of range");
        state = pomdp.transitions[a] * state;
        out.push_back({state, pomdp.likelihood * state});
    }
    return out;
}

namespace detail {

inline double xlogx_ratio(double p, double q) {
    // p * ln(p/q) with 0 ln 0 := 0 and probabilities clipped before logs.
    if (p <= 0.0) return 0.0;
    return p * (std::log(std::max(p, 1e-300)) - std::log(std::max(q, 1e-300)));
}

}  // namespace detail

inline double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) kl += detail::xlogx_ratio(p(i), q(i));
    return kl;
}

// One predicted step's value terms:
//   extrinsic = -E_q(y)[log p~(y)]
//   intrinsic = E_q(y) KL[q(x|y) || q(x)]   (expected information gain, >= 0)
inline std::pair<double, double> efe_timestep(const DiscretePOMDP& pomdp,
                                              const Eigen::VectorXd& state_belief,
                                              const Eigen::VectorXd& obs_belief) {
    double extrinsic = 0.0;
    double intrinsic = 0.0;
    for (int y = 0; y < pomdp.num_obs; ++y) {
        const double qy = obs_belief(y);
        if (qy <= 0.0) continue;
        extrinsic -= qy * pomdp.preferences(y);
        intrinsic += qy * kl_divergence(bayes_update(pomdp, state_belief, y), state_belief);
    }
    return {extrinsic, intrinsic};
}

// Plan score as the per-step sum G = sum_t (extrinsic_t - intrinsic_t).
inline EFEBreakdown efe_plan(const DiscretePOMDP& pomdp, const Eigen::VectorXd& belief,
                             const Plan& plan) {
    EFEBreakdown out;
    for (const RolloutStep& step : predict_rollout(pomdp, belief, plan)) {
        const auto [ext, intr] = efe_timestep(pomdp, step.state_belief, step.obs_belief);
        out.per_step.emplace_back(ext, intr);
        out.extrinsic += ext;
        out.intrinsic += intr;
    }
    out.total = out.extrinsic - out.intrinsic;
    return out;
}

// Softmax plan posterior q(pi) = sigma(log prior - G), max-subtracted.
inline Eigen::VectorXd softmax_posterior(const Eigen::VectorXd& efes,
                                         const Eigen::VectorXd& log_prior) {
    if (efes.size() != log_prior.size())
        throw std::invalid_argument("plan_posterior: EFE / prior length mismatch");
    if (efes.size() == 0) throw std::invalid_argument("plan_posterior: no plans");
    if (!efes.allFinite() || !log_prior.allFinite())
        throw std::invalid_argument("plan_posterior: non-finite inputs");
    Eigen::VectorXd logits = log_prior - efes;
    const double max_logit = logits.maxCoeff();
    Eigen::VectorXd probs = (logits.array() - max_logit).exp();
    return probs / probs.sum();
}

inline PlanPosterior plan_posterior(std::vector<Plan> plans, const Eigen::VectorXd& efes,
                                    const Eigen::VectorXd& log_prior) {
    PlanPosterior out;
    out.plans = std::move(plans);
    out.log_prior = log_prior;
    out.probabilities = softmax_posterior(efes, log_prior);
    return out;
}

inline PlanPosterior plan_posterior(const Eigen::VectorXd& efes, const Eigen::VectorXd& log_prior) {
    return plan_posterior(std::vector<Plan>{}, efes, log_prior);
}

// All U^T action sequences of the given horizon, capped to keep the
// exponential enumeration at desk scale.
inline std::vector<Plan> enumerate_plans(int num_actions, int horizon,
                                         std::size_t budget = 1024) {
    if (num_actions < 1 || horizon < 1)
        throw std::invalid_argument("enumerate_plans: need num_actions >= 1 and horizon >= 1");
    double count = std::pow(static_cast<double>(num_actions), horizon);
    if (count > static_cast<double>(budget)) {
        std::ostringstream msg;
        msg << "enumerate_plans: " << num_actions << "^" << horizon
            << " plans exceeds the enumeration budget of " << budget
            << "; use the cross-entropy planner instead";
        throw std::runtime_error(msg.str());
    }
    std::vector<Plan> plans;
    plans.reserve(static_cast<std::size_t>(count));
    Plan current;
    current.actions.assign(horizon, 0);
    while (true) {
        plans.push_back(current);
        int k = horizon - 1;
        while (k >= 0 && ++current.actions[k] == num_actions) current.actions[k--] = 0;
        if (k < 0) break;
    }
    return plans;
}

struct SelectionMode {
    enum Kind { most_likely, sample } kind = most_likely;
    std::uint64_t seed = 0;
};

// First action of the chosen plan: argmax (ties break toward the lowest plan
// index) or a seeded categorical draw.
inline int select_action(const PlanPosterior& posterior, const SelectionMode& mode) {
    if (posterior.plans.empty()) throw std::invalid_argument("select_action: posterior has no plans");
    std::size_t chosen = 0;
    if (mode.kind == SelectionMode::most_likely) {
        double best = posterior.probabilities(0);
        for (Eigen::Index i = 1; i < posterior.probabilities.size(); ++i)
            if (posterior.probabilities(i) > best) {
                best = posterior.probabilities(i);
                chosen = static_cast<std::size_t>(i);
            }
    } else {
        std::mt19937_64 rng(mode.seed);
        const double u = uniform01(rng);
        double cum = 0.0;
        for (Eigen::Index i = 0; i < posterior.probabilities.size(); ++i) {
            cum += posterior.probabilities(i);
            if (u < cum) {
                chosen = static_cast<std::size_t>(i);
                break;
            }
            chosen = static_cast<std::size_t>(i);  // guards rounding at the top end
        }
    }
    return posterior.plans[chosen].actions.front();
}

struct CemConfig {
    int population = 64;
    double elite_frac = 0.1;
    int iterations = 10;
    Eigen::MatrixXd init_mean;    // T x m
    Eigen::MatrixXd init_std;     // T x m, >= 0
    std::uint64_t seed = 0;
    double min_std = 0.0;         // floor applied after each refit

    void validate() const {
        if (population < 2) throw std::invalid_argument("CemConfig: population must be >= 2");
        if (!(elite_frac > 0.0) || elite_frac > 1.0)
            throw std::invalid_argument("CemConfig: elite_frac must be in (0, 1]");
        if (iterations < 1) throw std::invalid_argument("CemConfig: iterations must be >= 1");
        if (init_mean.rows() != init_std.rows() || init_mean.cols() != init_std.cols())
            throw std::invalid_argument("CemConfig: init_mean / init_std shape mismatch");
        if ((init_std.array() < 0.0).any())
            throw std::invalid_argument("CemConfig: init_std must be non-negative");
    }
};

// Cross-entropy search over continuous plans: sample a population from the
// current diagonal Gaussian, keep the elite (lowest scores), refit, repeat.
// Each sample draws from its own seed stream so results do not depend on
// evaluation order.
inline GaussianPlan cem_optimize(const std::function<double(const Eigen::MatrixXd&)>& score,
                                 const CemConfig& cfg) {
    cfg.validate();
    const Eigen::Index t_dim = cfg.init_mean.rows(), m_dim = cfg.init_mean.cols();
    Eigen::MatrixXd mean = cfg.init_mean;
    Eigen::MatrixXd stddev = cfg.init_std;
    const int elite_count =
        std::max(1, static_cast<int>(std::lround(cfg.elite_frac * cfg.population)));
    std::vector<Eigen::MatrixXd> samples(cfg.population);
    std::vector<double> scores(cfg.population);
    std::vector<int> order(cfg.population);
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int i = 0; i < cfg.population; ++i) {
            std::mt19937_64 rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(it),
                                         static_cast<std::uint64_t>(i)));
            std::normal_distribution<double> normal(0.0, 1.0);
            Eigen::MatrixXd sample(t_dim, m_dim);
            for (Eigen::Index r = 0; r < t_dim; ++r)
                for (Eigen::Index c = 0; c < m_dim; ++c)
                    sample(r, c) = mean(r, c) + stddev(r, c) * normal(rng);
            samples[i] = std::move(sample);
            scores[i] = score(samples[i]);
            if (!std::isfinite(scores[i])) {
                std::ostringstream msg;
                msg << "cem_optimize: non-finite score for sample " << i << " at iteration " << it;
                throw std::runtime_error(msg.str());
            }
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return scores[a] < scores[b]; });
        Eigen::MatrixXd new_mean = Eigen::MatrixXd::Zero(t_dim, m_dim);
        for (int e = 0; e < elite_count; ++e) new_mean += samples[order[e]];
        new_mean /= elite_count;
        Eigen::MatrixXd var = Eigen::MatrixXd::Zero(t_dim, m_dim);
        for (int e = 0; e < elite_count; ++e) {
            Eigen::MatrixXd d = samples[order[e]] - new_mean;
            var += d.cwiseProduct(d);
        }
        var /= elite_count;
        mean = std::move(new_mean);
        stddev = var.cwiseSqrt().cwiseMax(cfg.min_std);
    }
    return {mean, stddev};
}

// Laplace-smoothed visitation density over a gridded continuous state space.
// The surprisal of a cell under this density is the desk-scale intrinsic value
// of predicted states: unvisited regions carry high expected information gain.
class VisitationGrid {
public:
    VisitationGrid(Eigen::VectorXd lower, Eigen::VectorXd upper, Eigen::VectorXi bins)
        : lower_(std::move(lower)), upper_(std::move(upper)), bins_(std::move(bins)) {
        if (lower_.size() != upper_.size() || lower_.size() != bins_.size())
            throw std::invalid_argument("VisitationGrid: bounds/bins dim mismatch");
        long cells = 1;
        for (Eigen::Index d = 0; d < bins_.size(); ++d) {
            if (bins_(d) < 1) throw std::invalid_argument("VisitationGrid: bins must be >= 1");
            if (!(upper_(d) > lower_(d)))
                throw std::invalid_argument("VisitationGrid: upper must exceed lower");
            cells *= bins_(d);
        }
        counts_.assign(static_cast<std::size_t>(cells), 0);
    }

    long cell_index(const Eigen::VectorXd& x) const {
        long idx = 0;
        for (Eigen::Index d = 0; d < bins_.size(); ++d) {
            const double frac = (x(d) - lower_(d)) / (upper_(d) - lower_(d));
            int b = static_cast<int>(std::floor(frac * bins_(d)));
            b = std::clamp(b, 0, bins_(d) - 1);
            idx = idx * bins_(d) + b;
        }
        return idx;
    }

    void record(const Eigen::VectorXd& x) {
        ++counts_[static_cast<std::size_t>(cell_index(x))];
        ++total_;
    }

    // -ln p(cell) under add-one smoothing; decreases as the cell is visited.
    double surprisal(const Eigen::VectorXd& x) const {
        const long count = counts_[static_cast<std::size_t>(cell_index(x))];
        const double p = (count + 1.0) / (total_ + static_cast<double>(counts_.size()));
        return -std::log(p);
    }

    long total_visits() const { return total_; }

private:
    Eigen::VectorXd lower_, upper_;
    Eigen::VectorXi bins_;
    std::vector<long> counts_;
    long total_ = 0;
};

// Planner settings for the enumerate-and-score loop. The weights expose the
// ablations: extrinsic-only (intrinsic_weight = 0) and flat (both 0).
struct DiscretePlannerConfig {
    int horizon = 2;
    double extrinsic_weight = 1.0;
    double intrinsic_weight = 1.0;
    SelectionMode selection;
    std::size_t enumeration_budget = 1024;
};

struct DiscreteStepRecord {
    int action = 0;
    int observation = 0;
    Eigen::VectorXd belief_before;     // q(x) used for planning
    Eigen::VectorXd plan_probabilities;
    double chosen_efe = 0.0;
};

struct DiscreteTrace {
    std::vector<DiscreteStepRecord> steps;
    Eigen::VectorXd final_belief;
};

// Perceive / score plans / act loop against a discrete environment
// (receding horizon: the plan posterior is rebuilt after every step).
// Env must expose `int step(int action)` returning an observation index.
template <class Env>
DiscreteTrace plan_act_loop(const DiscretePOMDP& pomdp, Env& env,
                            const DiscretePlannerConfig& cfg, int num_steps) {
    pomdp.validate();
    if (cfg.horizon < 1) throw std::invalid_argument("plan_act_loop: horizon must be >= 1");
    const std::vector<Plan> plans =
        enumerate_plans(pomdp.num_actions, cfg.horizon, cfg.enumeration_budget);
    Eigen::VectorXd belief = pomdp.prior;
    DiscreteTrace trace;
    trace.steps.reserve(num_steps);
    for (int t = 0; t < num_steps; ++t) {
        Eigen::VectorXd efes(plans.size());
        for (std::size_t i = 0; i < plans.size(); ++i) {
            const EFEBreakdown g = efe_plan(pomdp, belief, plans[i]);
            efes(static_cast<Eigen::Index>(i)) =
                cfg.extrinsic_weight * g.extrinsic - cfg.intrinsic_weight * g.intrinsic;
        }
        const Eigen::VectorXd log_prior =
            Eigen::VectorXd::Zero(static_cast<Eigen::Index>(plans.size()));
        SelectionMode mode = cfg.selection;
        mode.seed = mix_seed(cfg.selection.seed, static_cast<std::uint64_t>(t));
        PlanPosterior posterior = plan_posterior(plans, efes, log_prior);
        const int action = select_action(posterior, mode);
        const int obs = env.step(action);
        DiscreteStepRecord rec;
        rec.action = action;
        rec.observation = obs;
        rec.belief_before = belief;
        rec.plan_probabilities = posterior.probabilities;
        rec.chosen_efe = efes(static_cast<Eigen::Index>(
            std::distance(posterior.probabilities.data(),
                          std::max_element(posterior.probabilities.data(),
                                           posterior.probabilities.data() +
                                               posterior.probabilities.size()))));
        belief = bayes_update(pomdp, pomdp.transitions[action] * belief, obs);
        trace.steps.push_back(std::move(rec));
    }
    trace.final_belief = belief;
    return trace;
}

// Receding-horizon EFE planning over a continuous task with a known rollout
// model. Plans are scored by CEM; the extrinsic term comes from a preference
// log-density over predicted observations, the intrinsic term from the
// visitation-grid surprisal of predicted states.
struct ContinuousPlannerConfig {
    int plan_horizon = 20;
    int replan_stride = 1;      // CEM re-runs every this many env steps
    double extrinsic_weight = 1.0;
    double intrinsic_weight = 1.0;
    int population = 64;
    double elite_frac = 0.125;
    int iterations = 6;
    double init_std = 1.0;
    std::uint64_t seed = 0;
};

struct ContinuousEpisode {
    int steps_taken = 0;
    bool reached_goal = false;
    double total_reward = 0.0;
};

// Task concept: deterministic rollout model plus an acting environment.
//   VectorXd planning_state() const
//   VectorXd rollout_step(const VectorXd& state, double action) const
//   double reward(const VectorXd& state) const
//   bool is_goal(const VectorXd& state) const
//   void apply_action(double action)
template <class Task>
ContinuousEpisode run_continuous_efe_episode(Task& task, VisitationGrid& visited,
                                             const std::function<double(const Eigen::VectorXd&)>& preference,
                                             const ContinuousPlannerConfig& cfg,
                                             int max_steps, std::uint64_t episode_seed) {
    ContinuousEpisode episode;
    Eigen::MatrixXd plan_mean = Eigen::MatrixXd::Zero(cfg.plan_horizon, 1);
    for (int t = 0; t < max_steps; ++t) {
        if (t % cfg.replan_stride == 0) {
            const Eigen::VectorXd start = task.planning_state();
            auto score = [&](const Eigen::MatrixXd& plan) {
                Eigen::VectorXd state = start;
                double g = 0.0;
                for (int k = 0; k < cfg.plan_horizon; ++k) {
                    state = task.rollout_step(state, plan(k, 0));
                    g -= cfg.extrinsic_weight * preference(state);
                    g -= cfg.intrinsic_weight * visited.surprisal(state);
                }
                return g;
            };
            CemConfig cem;
            cem.population = cfg.population;
            cem.elite_frac = cfg.elite_frac;
            cem.iterations = cfg.iterations;
            cem.init_mean = plan_mean;
            cem.init_std = Eigen::MatrixXd::Constant(cfg.plan_horizon, 1, cfg.init_std);
            cem.seed = mix_seed(cfg.seed, episode_seed, static_cast<std::uint64_t>(t));
            cem.min_std = 1e-3;
            plan_mean = cem_optimize(score, cem).mean;
        }
        task.apply_action(plan_mean(0, 0));
        // Warm-start the next replan with the tail of the current plan.
        plan_mean.topRows(cfg.plan_horizon - 1) = plan_mean.bottomRows(cfg.plan_horizon - 1).eval();
        plan_mean(cfg.plan_horizon - 1, 0) = 0.0;

        const Eigen::VectorXd state = task.planning_state();
        visited.record(state);
        episode.total_reward += task.reward(state);
        episode.steps_taken = t + 1;
        if (task.is_goal(state)) {
            episode.reached_goal = true;
            break;
        }
    }
    return episode;
}

}  // namespace fea
