#include "fea/plants.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "fea/oracles.hpp"

namespace {

using fea::ColoredNoiseConfig;
using fea::LTIPlant;
using fea::MountainCarPlant;
using fea::TMazeEnv;

ColoredNoiseConfig noise_cfg(double sigma, double variance, std::uint64_t seed) {
    return ColoredNoiseConfig{sigma, variance * Eigen::MatrixXd::Identity(1, 1), seed};
}

double lag_autocorrelation(const Eigen::RowVectorXd& samples, int lag) {
    const int n = static_cast<int>(samples.size()) - lag;
    const double mean = samples.mean();
    double num = 0.0, den = 0.0;
    for (int t = 0; t < n; ++t) num += (samples(t) - mean) * (samples(t + lag) - mean);
    for (Eigen::Index t = 0; t < samples.size(); ++t)
        den += (samples(t) - mean) * (samples(t) - mean);
    return num / den * samples.size() / n;
}

TEST(ColoredNoise, WhiteLimitHasNoLagCorrelation) {
    Eigen::MatrixXd samples = fea::colored_noise(100000, noise_cfg(0.0, 1.0, 314), 0.1);
    EXPECT_LT(std::abs(lag_autocorrelation(samples.row(0), 1)), 0.05);
}

TEST(ColoredNoise, AutocorrelationMatchesGaussianKernel) {
    const double sigma = 1.0, dt = 0.1;
    Eigen::MatrixXd samples = fea::colored_noise(100000, noise_cfg(sigma, 1.0, 2718), dt);
    for (int lag : {1, 5, 10, 15, 20}) {
        const double expected = std::exp(-(lag * dt) * (lag * dt) / (4.0 * sigma * sigma));
        EXPECT_NEAR(lag_autocorrelation(samples.row(0), lag), expected, 0.05) << "lag " << lag;
    }
}

TEST(ColoredNoise, EmpiricalVarianceTracksTarget) {
    for (double sigma : {0.0, 1.0}) {
        Eigen::MatrixXd samples = fea::colored_noise(100000, noise_cfg(sigma, 0.25, 999), 0.1);
        const double mean = samples.row(0).mean();
        const double var = (samples.row(0).array() - mean).square().mean();
        EXPECT_NEAR(var, 0.25, 0.05 * 0.25) << "sigma " << sigma;
    }
}

TEST(ColoredNoise, DeterministicGivenSeed) {
    Eigen::MatrixXd a = fea::colored_noise(512, noise_cfg(0.5, 1.0, 77), 0.05);
    Eigen::MatrixXd b = fea::colored_noise(512, noise_cfg(0.5, 1.0, 77), 0.05);
    EXPECT_TRUE((a - b).cwiseAbs().maxCoeff() == 0.0);
}

LTIPlant frozen_plant() {
    return LTIPlant(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1),
                    Eigen::MatrixXd::Identity(1, 1), noise_cfg(0.0, 0.0, 1),
                    noise_cfg(0.0, 0.0, 2), Eigen::VectorXd::Constant(1, 1.5), 0.01);
}

TEST(LtiPlant, FrozenDynamicsKeepState) {
    LTIPlant plant = frozen_plant();
    for (int t = 0; t < 10; ++t) plant.step(Eigen::VectorXd::Zero(1));
    EXPECT_DOUBLE_EQ(plant.state()(0), 1.5);
}

TEST(LtiPlant, NoiselessClosedForm) {
    Eigen::Matrix2d a;
    a << -0.3, 1.0, -1.0, -0.3;
    const double dt = 0.05;
    LTIPlant plant(a, Eigen::MatrixXd::Zero(2, 1), Eigen::MatrixXd::Identity(2, 2),
                   ColoredNoiseConfig{0.0, Eigen::MatrixXd::Zero(2, 2), 3},
                   ColoredNoiseConfig{0.0, Eigen::MatrixXd::Zero(2, 2), 4},
                   Eigen::Vector2d(1.0, 0.0), dt);
    const int steps = 40;
    for (int t = 0; t < steps; ++t) plant.step(Eigen::VectorXd::Zero(1));
    Eigen::Matrix2d closed = (Eigen::Matrix2d::Identity() + dt * a);
    Eigen::Vector2d expected = Eigen::Vector2d(1.0, 0.0);
    for (int t = 0; t < steps; ++t) expected = closed * expected;
    EXPECT_LT((plant.state() - expected).norm(), 1e-12);
}

TEST(MountainCar, RestsAtValleyFloor) {
    MountainCarPlant car(0);
    // Force balance: cos(3 p) = 0 at p = -pi/6.
    const double valley = -M_PI / 6.0;
    MountainCarPlant probe(0);
    auto [p, v] = probe.dynamics(valley, 0.0, 0.0);
    EXPECT_NEAR(p, valley, 1e-9);
    EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(MountainCar, DeterministicGivenSeedAndActions) {
    MountainCarPlant a(5), b(5);
    Eigen::VectorXd u(1);
    for (int t = 0; t < 50; ++t) {
        u << std::sin(0.1 * t);
        Eigen::VectorXd ya = a.step(u), yb = b.step(u);
        EXPECT_TRUE(ya.isApprox(yb, 0.0));
    }
}

TEST(MountainCar, ClipsSpeedAndPosition) {
    MountainCarPlant car(0);
    Eigen::VectorXd push(1);
    push << 1.0;
    for (int t = 0; t < 500; ++t) {
        Eigen::VectorXd y = car.step(push);
        EXPECT_LE(std::abs(y(1)), MountainCarPlant::kMaxSpeed + 1e-15);
        EXPECT_GE(y(0), MountainCarPlant::kMinPosition - 1e-15);
        EXPECT_LE(y(0), MountainCarPlant::kMaxPosition + 1e-15);
    }
}

TEST(TMaze, PomdpColumnsAreStochastic) {
    fea::DiscretePOMDP pomdp = fea::tmaze_as_pomdp();
    for (int c = 0; c < pomdp.num_states; ++c) {
        EXPECT_NEAR(pomdp.likelihood.col(c).sum(), 1.0, 1e-12);
        for (const auto& t : pomdp.transitions) EXPECT_NEAR(t.col(c).sum(), 1.0, 1e-12);
    }
}

TEST(TMaze, CueDistinguishesContexts) {
    fea::DiscretePOMDP pomdp = fea::tmaze_as_pomdp();
    // States 6 and 7 are the cue location under the two contexts.
    EXPECT_GT((pomdp.likelihood.col(6) - pomdp.likelihood.col(7)).cwiseAbs().maxCoeff(), 0.5);
}

TEST(TMaze, BestTwoStepPlanVisitsCueFirst) {
    fea::DiscretePOMDP pomdp = fea::tmaze_as_pomdp();
    auto posterior = fea::oracles::brute_force_plan_posterior(pomdp, pomdp.prior, 2,
                                                              Eigen::VectorXd::Zero(16));
    Eigen::Index best;
    posterior.probabilities.maxCoeff(&best);
    EXPECT_EQ(posterior.plans[static_cast<std::size_t>(best)].actions.front(), TMazeEnv::kCue);
    // No tie at the top.
    Eigen::VectorXd sorted = posterior.probabilities;
    std::sort(sorted.data(), sorted.data() + sorted.size());
    EXPECT_GT(sorted(sorted.size() - 1) - sorted(sorted.size() - 2), 1e-6);
}

TEST(TMaze, EnvironmentAbsorbsAtArms) {
    TMazeEnv env(1);
    env.step(TMazeEnv::kLeft);
    EXPECT_EQ(env.location(), TMazeEnv::kLeft);
    env.step(TMazeEnv::kCenter);
    EXPECT_EQ(env.location(), TMazeEnv::kLeft);
}

TEST(TMaze, CueRevealsRewardArm) {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL}) {
        TMazeEnv env(seed);
        const int obs = env.step(TMazeEnv::kCue);
        if (env.reward_arm_left())
            EXPECT_EQ(obs, TMazeEnv::kObsCueLeft);
        else
            EXPECT_EQ(obs, TMazeEnv::kObsCueRight);
    }
}

}  // namespace
