// Acceptance suite: one test per shipped guarantee, each printing a PASS/FAIL
// line with its measured margin. Run via `ctest -R acceptance` or directly.
#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "fea/control.hpp"
#include "fea/harness.hpp"
#include "fea/inference.hpp"
#include "fea/oracles.hpp"
#include "fea/planning.hpp"
#include "fea/plants.hpp"

namespace {

using fea::Beliefs;
using fea::ColoredNoiseConfig;
using fea::DiscretePOMDP;
using fea::EstimatorConfig;
using fea::GeneralizedVector;
using fea::LinearModel;
using fea::LTIPlant;
using fea::NoiseSpec;

class Criterion {
public:
    Criterion(int number, std::string description, double budget_sec)
        : number_(number), description_(std::move(description)), budget_sec_(budget_sec),
          start_(std::chrono::steady_clock::now()) {}

    ~Criterion() {
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const bool in_budget = elapsed < budget_sec_;
        const bool pass = ok_ && in_budget;
        std::printf("[ACCEPTANCE] criterion %2d: %-58s %s (%.2fs / %.0fs budget)\n", number_,
                    description_.c_str(), pass ? "PASS" : "FAIL", elapsed, budget_sec_);
        std::fflush(stdout);
        EXPECT_TRUE(in_budget) << "criterion " << number_ << " exceeded its runtime budget";
    }

    void check(bool condition, const std::string& detail) {
        ok_ = ok_ && condition;
        EXPECT_TRUE(condition) << "criterion " << number_ << ": " << detail;
    }

private:
    int number_;
    std::string description_;
    double budget_sec_;
    bool ok_ = true;
    std::chrono::steady_clock::time_point start_;
};

NoiseSpec noise_spec(double variance, double sigma, int order) {
    return NoiseSpec{variance * Eigen::MatrixXd::Identity(1, 1), {sigma, order}};
}

// --------------------------------------------------------------------------
TEST(Acceptance, C01_GradientAndCurvatureFidelity) {
    Criterion criterion(1, "analytic gradient/curvature match finite differences", 5.0);
    std::mt19937_64 rng(1001);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> sigma_draw(0.4, 2.0);
    int configs = 0;
    for (int p : {0, 1, 3}) {
        for (int trial = 0; trial < 7; ++trial) {
            const int n = 2, q = 2;
            Eigen::MatrixXd a(n, n), b(n, 1), c(q, n);
            for (int i = 0; i < n; ++i) {
                b(i, 0) = normal(rng);
                for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
            }
            for (int i = 0; i < q; ++i)
                for (int j = 0; j < n; ++j) c(i, j) = normal(rng);
            auto spd = [&](int dim) {
                Eigen::MatrixXd m(dim, dim);
                for (int i = 0; i < dim; ++i)
                    for (int j = 0; j < dim; ++j) m(i, j) = normal(rng);
                return NoiseSpec{
                    (m * m.transpose() + 0.5 * Eigen::MatrixXd::Identity(dim, dim)).eval(),
                    {sigma_draw(rng), p}};
            };
            LinearModel model(a, b, c, spd(n), spd(q));
            Beliefs beliefs = Beliefs::zero(n, p);
            Eigen::VectorXd mu(n * (p + 1));
            Eigen::VectorXd yv(q * (p + 1));
            Eigen::VectorXd cause(p + 1);
            for (Eigen::Index i = 0; i < mu.size(); ++i) mu(i) = normal(rng);
            for (Eigen::Index i = 0; i < yv.size(); ++i) yv(i) = normal(rng);
            for (Eigen::Index i = 0; i < cause.size(); ++i) cause(i) = normal(rng);
            beliefs.mean = GeneralizedVector(n, p, mu);
            GeneralizedVector y(q, p, yv), v(1, p, cause);

            auto f_of_mu = [&](const Eigen::VectorXd& m_flat) {
                Beliefs b2 = beliefs;
                b2.mean = GeneralizedVector(n, p, m_flat);
                return fea::vfe(model, b2, y, v);
            };
            const Eigen::VectorXd grad = fea::vfe_gradient(model, beliefs, y, v);
            const Eigen::VectorXd grad_fd =
                fea::oracles::finite_difference_gradient(f_of_mu, mu, 1e-5);
            const double grad_err = (grad - grad_fd).norm() / std::max(1.0, grad_fd.norm());
            criterion.check(grad_err < 1e-5, "gradient relative error " + std::to_string(grad_err));

            const Eigen::MatrixXd hess = fea::belief_precision(model, beliefs, v).matrix();
            const Eigen::MatrixXd hess_fd =
                fea::oracles::finite_difference_hessian(f_of_mu, mu, 1e-4);
            const double hess_err = (hess - hess_fd).cwiseAbs().maxCoeff() /
                                    std::max(1.0, hess_fd.cwiseAbs().maxCoeff());
            criterion.check(hess_err < 1e-4, "curvature relative error " + std::to_string(hess_err));
            ++configs;
        }
    }
    criterion.check(configs >= 20, "need at least 20 random configurations");
}

// --------------------------------------------------------------------------
TEST(Acceptance, C02_SmoothnessMatrix) {
    Criterion criterion(2, "smoothness precision reproduces printed entries, S*M = I", 1.0);
    const fea::SmoothnessKernel unit{1.0, 2};
    const Eigen::MatrixXd m = fea::smoothness_covariance(unit);
    criterion.check(m(0, 0) == 1.0, "M[0][0] must be exactly 1");
    criterion.check(m(1, 1) == 0.5, "M[1][1] must be exactly 1/(2 sigma^2)");
    criterion.check(m(0, 2) == -0.5 && m(2, 0) == -0.5, "M[0][2] must be exactly -1/(2 sigma^2)");
    criterion.check(m(2, 2) == 0.75, "M[2][2] must be exactly 3/(4 sigma^4)");
    for (double sigma : {0.5, 1.0, 2.0}) {
        for (int p = 0; p <= 4; ++p) {
            const fea::SmoothnessKernel kernel{sigma, p};
            const Eigen::MatrixXd prod =
                fea::smoothness_precision(kernel) * fea::smoothness_covariance(kernel);
            const double err =
                (prod - Eigen::MatrixXd::Identity(p + 1, p + 1)).cwiseAbs().maxCoeff();
            criterion.check(err < 1e-9, "S*M deviates from identity by " + std::to_string(err));
        }
    }
}

// --------------------------------------------------------------------------
TEST(Acceptance, C03_WhiteNoiseKalmanParity) {
    Criterion criterion(3, "white-noise estimator MSE within 25% of the Kalman filter", 30.0);
    const double dt = 0.05, q_var = 0.0025, r_var = 0.01;
    const int horizon = 2000;
    double worst_ratio = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        LTIPlant plant(-Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1),
                       Eigen::MatrixXd::Identity(1, 1),
                       ColoredNoiseConfig{0.0, q_var * Eigen::MatrixXd::Identity(1, 1), seed},
                       ColoredNoiseConfig{0.0, r_var * Eigen::MatrixXd::Identity(1, 1), seed + 100},
                       Eigen::VectorXd::Zero(1), dt);
        std::vector<Eigen::VectorXd> observations, truth;
        for (int t = 0; t < horizon; ++t) {
            observations.push_back(plant.step(Eigen::VectorXd::Zero(1)));
            truth.push_back(plant.state());
        }

        LinearModel model(-Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Zero(1, 1),
                          Eigen::MatrixXd::Identity(1, 1), noise_spec(0.12, 1.0, 0),
                          noise_spec(r_var, 1.0, 0));
        EstimatorConfig est{0.075, dt, 1};
        std::vector<Beliefs> beliefs =
            fea::run_filter(model, observations, {}, est, Beliefs::zero(1, 0));

        fea::oracles::KalmanState kf{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
        const Eigen::MatrixXd a_d = (1.0 - dt) * Eigen::MatrixXd::Identity(1, 1);
        double mse_aif = 0.0, mse_kf = 0.0;
        int count = 0;
        for (int t = 0; t < horizon; ++t) {
            kf = fea::oracles::kalman_step(a_d, Eigen::MatrixXd::Zero(1, 1),
                                           Eigen::MatrixXd::Identity(1, 1),
                                           q_var * Eigen::MatrixXd::Identity(1, 1),
                                           r_var * Eigen::MatrixXd::Identity(1, 1), kf,
                                           Eigen::VectorXd::Zero(1), observations[t]);
            if (t >= horizon / 2) {
                mse_aif += std::pow(beliefs[t].mean.flat()(0) - truth[t](0), 2);
                mse_kf += std::pow(kf.mean(0) - truth[t](0), 2);
                ++count;
            }
        }
        const double ratio = (mse_aif / count) / (mse_kf / count);
        worst_ratio = std::max(worst_ratio, ratio);
        criterion.check(ratio < 1.25,
                        "seed " + std::to_string(seed) + " ratio " + std::to_string(ratio));
    }
    std::printf("             c03 worst AIF/KF steady-state MSE ratio: %.3f\n", worst_ratio);
}

// --------------------------------------------------------------------------
TEST(Acceptance, C04_ColoredNoiseAdvantage) {
    Criterion criterion(4, "order-3 estimator beats order-0 under colored noise (>= 8/10)", 60.0);
    // Lightly damped oscillator under smooth colored noise; the observation
    // noise dominates, so rejecting it requires its derivative structure.
    // Both estimators share the model; each runs at its own kappa, picked by
    // an identical grid search on held-out seeds 101-103 (0.012 and 0.5).
    // The plant injects per-step noise w into x <- x + dt f + w, so the
    // dynamics-residual covariance is q/dt^2 in rate units.
    const double dt = 0.1, sigma = 1.0, q_var = 1e-4, r_var = 0.01;
    const int horizon = 600;
    const double model_q = q_var / (dt * dt);
    Eigen::Matrix2d a;
    a << 0.0, 1.0, -1.0, -0.1;
    Eigen::MatrixXd b(2, 1);
    b << 1.0, 0.0;
    const Eigen::MatrixXd c = Eigen::MatrixXd::Identity(2, 2);

    int wins = 0;
    double mean_ratio = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        LTIPlant plant(a, b, c,
                       ColoredNoiseConfig{sigma, q_var * Eigen::MatrixXd::Identity(2, 2), seed},
                       ColoredNoiseConfig{sigma, r_var * Eigen::MatrixXd::Identity(2, 2),
                                          seed + 500},
                       Eigen::Vector2d::Zero(), dt);
        std::vector<Eigen::VectorXd> observations, truth, causes;
        for (int t = 0; t < horizon; ++t) {
            const double time = t * dt;
            Eigen::VectorXd u(1);
            u << std::exp(-0.25 * std::pow(std::fmod(time, 30.0) - 12.0, 2.0));
            causes.push_back(u);
            observations.push_back(plant.step(u));
            truth.push_back(plant.state());
        }

        auto run_order = [&](int p, double kappa) {
            LinearModel model(
                a, b, c, NoiseSpec{model_q * Eigen::MatrixXd::Identity(2, 2), {sigma, p}},
                NoiseSpec{r_var * Eigen::MatrixXd::Identity(2, 2), {sigma, p}});
            EstimatorConfig est{kappa, dt / 10, 10};
            std::vector<Beliefs> beliefs =
                fea::run_filter(model, observations, causes, est, Beliefs::zero(2, p));
            double mse = 0.0;
            int count = 0;
            for (int t = horizon / 4; t < horizon; ++t) {
                mse += (beliefs[t].mean.block(0) - truth[t]).squaredNorm();
                ++count;
            }
            return mse / count;
        };
        const double mse_p3 = run_order(3, 0.012);
        const double mse_p0 = run_order(0, 0.5);
        mean_ratio += mse_p3 / mse_p0 / 10.0;
        if (mse_p3 < mse_p0) ++wins;
    }
    std::printf("             c04 order-3 wins on %d/10 seeds (mean MSE ratio %.3f)\n", wins,
                mean_ratio);
    criterion.check(wins >= 8, "order-3 estimator won only " + std::to_string(wins) + "/10 seeds");
}

// --------------------------------------------------------------------------
TEST(Acceptance, C05_PidLimitEquivalence) {
    Criterion criterion(5, "stiff-attractor action increments match the mapped PI law (1%)", 5.0);
    const double dt = 0.01, target = 1.0, kappa_u = 20.0, tau = 1e-6;
    LTIPlant plant(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Identity(1, 1),
                   Eigen::MatrixXd::Identity(1, 1),
                   ColoredNoiseConfig{0.0, Eigen::MatrixXd::Zero(1, 1), 1},
                   ColoredNoiseConfig{0.0, Eigen::MatrixXd::Zero(1, 1), 2},
                   Eigen::VectorXd::Zero(1), dt);
    fea::AttractorModel model(fea::AttractorGoal{Eigen::VectorXd::Constant(1, target), tau},
                              noise_spec(1.0, 0.5, 1), noise_spec(1.0, 0.5, 1));

    const Eigen::MatrixXd pi_z = fea::detail::gen_obs_precision(model, 1);
    const double ki = kappa_u * pi_z(0, 0);
    const double kp = kappa_u * pi_z(1, 1);

    Beliefs beliefs = Beliefs::zero(1, 1);
    beliefs.mean = GeneralizedVector(1, 1, Eigen::Vector2d(target, 0.0));
    EstimatorConfig est{1e-10, dt, 1};
    fea::ControllerConfig ctrl{kappa_u, dt, fea::JacobianStrategy::sign_only};
    const Eigen::MatrixXd jac = Eigen::MatrixXd::Ones(1, 1);

    double u_aif = 0.0, integral = 0.0, prev_error = 0.0;
    bool first = true;
    double worst = 0.0;
    std::vector<Eigen::VectorXd> window(2, Eigen::VectorXd::Zero(1));
    for (int t = 0; t < 500; ++t) {
        const double y = plant.step(Eigen::VectorXd::Constant(1, u_aif))(0);
        window.erase(window.begin());
        window.push_back(Eigen::VectorXd::Constant(1, y));
        const GeneralizedVector y_gen = fea::embed_taylor(window, dt, 1);
        beliefs = fea::step_estimate(model, beliefs, y_gen, GeneralizedVector(1, 0), est, t);
        const double before = u_aif;
        u_aif = fea::step_action(model, beliefs, y_gen, Eigen::VectorXd::Constant(1, before), ctrl,
                                 jac, t)
                    .u(0);
        const double du_aif = u_aif - before;

        const double error = target - y;
        const double d_error = first ? 0.0 : error - prev_error;
        first = false;
        integral += error * dt;
        prev_error = error;
        const double du_pi = ki * error * dt + kp * d_error;

        const double mismatch = std::abs(du_aif - du_pi) / std::max(std::abs(du_pi), 1e-10);
        worst = std::max(worst, mismatch);
        criterion.check(mismatch < 0.01,
                        "step " + std::to_string(t) + " mismatch " + std::to_string(mismatch));
    }
    std::printf("             c05 worst per-step increment mismatch: %.3g\n", worst);
}

// --------------------------------------------------------------------------
TEST(Acceptance, C06_ClosedLoopReaching) {
    Criterion criterion(6, "controller reaches the attractor under both Jacobian modes", 10.0);
    for (fea::JacobianStrategy strategy :
         {fea::JacobianStrategy::exact, fea::JacobianStrategy::sign_only}) {
        LTIPlant plant(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Identity(1, 1),
                       Eigen::MatrixXd::Identity(1, 1),
                       ColoredNoiseConfig{0.0, Eigen::MatrixXd::Zero(1, 1), 1},
                       ColoredNoiseConfig{0.0, Eigen::MatrixXd::Zero(1, 1), 2},
                       Eigen::VectorXd::Zero(1), 0.01);
        fea::AttractorModel model(fea::AttractorGoal{Eigen::VectorXd::Constant(1, 1.0), 0.5},
                                  noise_spec(1.0, 0.5, 1), noise_spec(1.0, 0.5, 1));
        EstimatorConfig est{8.0, 0.01, 1};
        const double kappa_u = strategy == fea::JacobianStrategy::exact ? 400.0 : 4.0;
        fea::ControllerConfig ctrl{kappa_u, 0.01, strategy};
        fea::AicTrace trace = fea::run_aic(plant, model, est, ctrl, 2000, Beliefs::zero(1, 1),
                                           Eigen::VectorXd::Zero(1));
        const double err = std::abs(trace.steps.back().y(0) - 1.0);
        std::printf("             c06 %s final |error| = %.4f\n",
                    strategy == fea::JacobianStrategy::exact ? "exact    " : "sign_only", err);
        criterion.check(err < 0.02, "final error " + std::to_string(err));
    }
}

// --------------------------------------------------------------------------
TEST(Acceptance, C07_PlannerOracleEquivalence) {
    Criterion criterion(7, "per-step EFE sum + softmax match brute-force enumeration", 10.0);
    std::mt19937_64 rng(7007);
    std::uniform_real_distribution<double> unif(0.05, 1.0);
    std::uniform_int_distribution<int> dim(2, 4), horizon_draw(1, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const int s = dim(rng), o = dim(rng), u = dim(rng), horizon = horizon_draw(rng);
        DiscretePOMDP pomdp;
        pomdp.num_states = s;
        pomdp.num_obs = o;
        pomdp.num_actions = u;
        pomdp.likelihood.resize(o, s);
        for (int col = 0; col < s; ++col) {
            for (int row = 0; row < o; ++row) pomdp.likelihood(row, col) = unif(rng);
            pomdp.likelihood.col(col) /= pomdp.likelihood.col(col).sum();
        }
        for (int action = 0; action < u; ++action) {
            Eigen::MatrixXd t(s, s);
            for (int col = 0; col < s; ++col) {
                for (int row = 0; row < s; ++row) t(row, col) = unif(rng);
                t.col(col) /= t.col(col).sum();
            }
            pomdp.transitions.push_back(t);
        }
        pomdp.preferences.resize(o);
        for (int row = 0; row < o; ++row) pomdp.preferences(row) = 2.0 * unif(rng) - 1.0;
        pomdp.prior.resize(s);
        for (int row = 0; row < s; ++row) pomdp.prior(row) = unif(rng);
        pomdp.prior /= pomdp.prior.sum();
        pomdp.validate();

        auto plans = fea::enumerate_plans(u, horizon);
        Eigen::VectorXd efes(plans.size());
        for (std::size_t i = 0; i < plans.size(); ++i)
            efes(static_cast<Eigen::Index>(i)) =
                fea::efe_plan(pomdp, pomdp.prior, plans[i]).total;
        const Eigen::VectorXd log_prior = Eigen::VectorXd::Zero(efes.size());
        const Eigen::VectorXd mine =
            fea::plan_posterior(plans, efes, log_prior).probabilities;
        const Eigen::VectorXd oracle =
            fea::oracles::brute_force_plan_posterior(pomdp, pomdp.prior, horizon, log_prior)
                .probabilities;
        const double err = (mine - oracle).cwiseAbs().maxCoeff();
        criterion.check(err < 1e-9,
                        "trial " + std::to_string(trial) + " deviates by " + std::to_string(err));
    }
}

// --------------------------------------------------------------------------
TEST(Acceptance, C08_EpistemicFirstTmaze) {
    Criterion criterion(8, "T-maze agent checks the cue first; ablated agent does not", 10.0);
    auto run_agent = [](double intrinsic_weight, std::uint64_t seed) {
        fea::TMazeEnv env(seed);
        DiscretePOMDP pomdp = fea::tmaze_as_pomdp();
        fea::DiscretePlannerConfig cfg;
        cfg.horizon = 2;
        cfg.intrinsic_weight = intrinsic_weight;
        cfg.selection.seed = seed;
        fea::DiscreteTrace trace = fea::plan_act_loop(pomdp, env, cfg, 6);
        int cue_step = -1, arm_step = -1;
        for (std::size_t t = 0; t < trace.steps.size(); ++t) {
            const int obs = trace.steps[t].observation;
            if (cue_step < 0 &&
                (obs == fea::TMazeEnv::kObsCueLeft || obs == fea::TMazeEnv::kObsCueRight))
                cue_step = static_cast<int>(t);
            if (arm_step < 0 &&
                (obs == fea::TMazeEnv::kObsLeftReward || obs == fea::TMazeEnv::kObsLeftEmpty ||
                 obs == fea::TMazeEnv::kObsRightReward || obs == fea::TMazeEnv::kObsRightEmpty))
                arm_step = static_cast<int>(t);
        }
        return cue_step >= 0 && (arm_step < 0 || cue_step < arm_step);
    };
    int epistemic = 0, ablated = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        if (run_agent(1.0, seed)) ++epistemic;
        if (run_agent(0.0, seed)) ++ablated;
    }
    std::printf("             c08 cue-first episodes: full %d/10, ablated %d/10\n", epistemic,
                ablated);
    criterion.check(epistemic >= 9, "full agent cue-first on " + std::to_string(epistemic) + "/10");
    criterion.check(ablated <= 3, "ablated agent cue-first on " + std::to_string(ablated) + "/10");
}

// --------------------------------------------------------------------------
TEST(Acceptance, C09_SparseRewardExploration) {
    Criterion criterion(9, "mountain car: intrinsic term finds the goal, ablation does not", 300.0);
    auto episodes_to_goal = [](double intrinsic_weight, std::uint64_t seed) {
        fea::MountainCarPlant plant(seed);
        fea::MountainCarTask task(plant);
        fea::VisitationGrid grid(
            Eigen::Vector2d(fea::MountainCarPlant::kMinPosition,
                            -fea::MountainCarPlant::kMaxSpeed),
            Eigen::Vector2d(fea::MountainCarPlant::kMaxPosition,
                            fea::MountainCarPlant::kMaxSpeed),
            Eigen::Vector2i(24, 24));
        fea::PreferenceModel preference = fea::boltzmann_preference(
            [&plant](const Eigen::VectorXd& y) { return plant.reward(y(0)); }, 10.0);
        fea::ContinuousPlannerConfig cfg;
        cfg.plan_horizon = 25;
        cfg.replan_stride = 3;
        cfg.intrinsic_weight = intrinsic_weight;
        cfg.population = 50;
        cfg.elite_frac = 0.2;
        cfg.iterations = 5;
        cfg.init_std = 1.0;
        cfg.seed = seed;
        for (int ep = 0; ep < 25; ++ep) {
            plant.reset(fea::mix_seed(seed, static_cast<std::uint64_t>(ep)));
            fea::ContinuousEpisode episode = fea::run_continuous_efe_episode(
                task, grid, preference.log_density, cfg, 200, static_cast<std::uint64_t>(ep));
            if (episode.reached_goal) return ep;
        }
        return -1;
    };
    int intrinsic_successes = 0, ablated_successes = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const int with_intrinsic = episodes_to_goal(1.0, seed);
        const int without = episodes_to_goal(0.0, seed);
        std::printf("             c09 seed %llu: intrinsic reaches at episode %d, ablated %d\n",
                    static_cast<unsigned long long>(seed), with_intrinsic, without);
        if (with_intrinsic >= 0) ++intrinsic_successes;
        if (without >= 0) ++ablated_successes;
    }
    criterion.check(intrinsic_successes >= 3,
                    "intrinsic agent reached the goal on " +
                        std::to_string(intrinsic_successes) + "/5 seeds");
    criterion.check(ablated_successes <= 1,
                    "extrinsic-only agent reached the goal on " +
                        std::to_string(ablated_successes) + "/5 seeds");
}

// --------------------------------------------------------------------------
TEST(Acceptance, C10_DeterminismAndConfigRejection) {
    Criterion criterion(10, "byte-identical traces; malformed configs rejected by field", 5.0);
    namespace fs = std::filesystem;
    using nlohmann::json;

    json cfg_json = json::parse(R"({
      "experiment": "estimate",
      "seeds": [11],
      "horizon": 400,
      "plant": {
        "type": "lti",
        "A": [[-0.5]], "B": [[0.0]], "C": [[1.0]],
        "x0": [0.5], "dt": 0.05,
        "process_noise": {"covariance": [[0.002]], "sigma": 0.5},
        "observation_noise": {"covariance": [[0.01]], "sigma": 0.5}
      },
      "model": {
        "type": "linear", "order": 1,
        "A": [[-0.5]], "B": [[0.0]], "C": [[1.0]],
        "process_noise": {"covariance": [[0.01]], "sigma": 0.5},
        "observation_noise": {"covariance": [[0.01]], "sigma": 0.5}
      },
      "estimator": {"kappa_x": 0.5, "dt": 0.05}
    })");
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    };
    auto run_to = [&](const std::string& tag) {
        auto validated = fea::harness::validate_config(cfg_json);
        if (!validated.ok()) return std::string();
        validated.config->output_dir =
            (fs::temp_directory_path() / ("fea_acceptance_" + tag)).string();
        fs::remove_all(validated.config->output_dir);
        fea::harness::run_experiment(*validated.config);
        return slurp(fs::path(validated.config->output_dir) / "trace_11.csv");
    };
    const std::string first = run_to("a"), second = run_to("b");
    criterion.check(!first.empty(), "trace should not be empty");
    criterion.check(first == second, "same config+seed must give byte-identical traces");

    const std::vector<std::pair<std::function<void(json&)>, std::string>> malformed = {
        {[](json& j) { j["experiment"] = "simulate"; }, "experiment"},
        {[](json& j) { j.erase("seeds"); }, "seed"},
        {[](json& j) { j["seeds"] = json::array(); }, "seed"},
        {[](json& j) { j["horizon"] = -1; }, "horizon"},
        {[](json& j) { j["plant"]["A"] = {{1.0, 2.0}}; }, "plant.A"},
        {[](json& j) { j["plant"]["C"] = {{1.0, 0.0, 0.0}}; }, "plant.C"},
        {[](json& j) { j["plant"]["process_noise"]["sigma"] = -2.0; }, "sigma"},
        {[](json& j) { j["model"]["order"] = 42; }, "model.order"},
        {[](json& j) { j["estimator"]["kappa_x"] = 0.0; }, "estimator.kappa_x"},
        {[](json& j) { j["model"].erase("process_noise"); }, "process_noise"},
    };
    int rejected = 0;
    for (const auto& [mutate, field] : malformed) {
        json bad = cfg_json;
        mutate(bad);
        auto result = fea::harness::validate_config(bad);
        bool named = false;
        for (const auto& err : result.errors)
            if (err.find(field) != std::string::npos) named = true;
        if (!result.ok() && named) ++rejected;
        criterion.check(!result.ok(), "malformed config accepted (" + field + ")");
        criterion.check(named, "rejection does not name field " + field);
    }
    criterion.check(rejected == 10, "all 10 documented malformed configs must be rejected");
}

}  // namespace
