#include "fea/oracles.hpp"

#include <gtest/gtest.h>

#include <random>

namespace {

using fea::DiscretePOMDP;
using fea::oracles::KalmanState;

Eigen::MatrixXd mat1(double v) {
    Eigen::MatrixXd m(1, 1);
    m << v;
    return m;
}

Eigen::VectorXd vec1(double v) {
    Eigen::VectorXd x(1);
    x << v;
    return x;
}

TEST(KalmanStep, UninformativeMeasurementKeepsPrediction) {
    KalmanState state{vec1(2.0), mat1(1.0)};
    KalmanState next = fea::oracles::kalman_step(mat1(0.9), mat1(0.0), mat1(1.0), mat1(0.1),
                                                 mat1(1e12), state, vec1(0.0), vec1(100.0));
    EXPECT_NEAR(next.mean(0), 0.9 * 2.0, 1e-6);
}

TEST(KalmanStep, PerfectMeasurementAdoptsObservation) {
    KalmanState state{vec1(0.0), mat1(1.0)};
    KalmanState next = fea::oracles::kalman_step(mat1(1.0), mat1(0.0), mat1(1.0), mat1(0.1),
                                                 mat1(1e-14), state, vec1(0.0), vec1(3.7));
    EXPECT_NEAR(next.mean(0), 3.7, 1e-9);
}

TEST(KalmanStep, ScalarRandomWalkSteadyStateVariance) {
    // P solves P^2 + P - 1 = 0 for A=1, Q=R=1: P = (sqrt(5)-1)/2.
    KalmanState state{vec1(0.0), mat1(1.0)};
    for (int t = 0; t < 200; ++t)
        state = fea::oracles::kalman_step(mat1(1.0), mat1(0.0), mat1(1.0), mat1(1.0), mat1(1.0),
                                          state, vec1(0.0), vec1(0.0));
    EXPECT_NEAR(state.covariance(0, 0), (std::sqrt(5.0) - 1.0) / 2.0, 1e-6);
}

TEST(KalmanStep, SingularInnovationRaises) {
    KalmanState state{vec1(0.0), mat1(0.0)};
    EXPECT_THROW(fea::oracles::kalman_step(mat1(1.0), mat1(0.0), mat1(0.0), mat1(0.0), mat1(0.0),
                                           state, vec1(0.0), vec1(0.0)),
                 std::runtime_error);
}

TEST(KalmanStep, NoiselessObservableSystemConverges) {
    Eigen::Matrix2d a;
    a << 1.0, 0.1, 0.0, 1.0;
    Eigen::MatrixXd c(1, 2);
    c << 1.0, 0.0;
    Eigen::Vector2d x_true(1.0, -0.5);
    KalmanState state{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
    for (int t = 0; t < 400; ++t) {
        x_true = a * x_true;
        state = fea::oracles::kalman_step(a, Eigen::MatrixXd::Zero(2, 1), c,
                                          1e-16 * Eigen::Matrix2d::Identity(), mat1(1e-16), state,
                                          Eigen::VectorXd::Zero(1), c * x_true);
    }
    EXPECT_LT((state.mean - x_true).norm(), 1e-8);
}

TEST(FiniteDifference, QuadraticGradient) {
    auto fn = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    Eigen::VectorXd x(2);
    x << 1.0, 2.0;
    Eigen::VectorXd grad = fea::oracles::finite_difference_gradient(fn, x, 1e-5);
    EXPECT_NEAR(grad(0), 2.0, 1e-6);
    EXPECT_NEAR(grad(1), 4.0, 1e-6);
}

TEST(FiniteDifference, LinearFunctionHasZeroHessian) {
    auto fn = [](const Eigen::VectorXd& x) { return 3.0 * x(0) - 2.0 * x(1); };
    Eigen::VectorXd x(2);
    x << 0.3, -0.7;
    Eigen::MatrixXd hess = fea::oracles::finite_difference_hessian(fn, x, 1e-4);
    EXPECT_LT(hess.cwiseAbs().maxCoeff(), 1e-5);
}

TEST(BruteForcePlanPosterior, SinglePlanIsCertain) {
    DiscretePOMDP pomdp;
    pomdp.num_states = 2;
    pomdp.num_obs = 2;
    pomdp.num_actions = 1;
    pomdp.likelihood = Eigen::MatrixXd::Identity(2, 2);
    pomdp.transitions = {Eigen::MatrixXd::Identity(2, 2)};
    pomdp.preferences = Eigen::VectorXd::Zero(2);
    pomdp.prior = Eigen::VectorXd::Constant(2, 0.5);
    auto posterior = fea::oracles::brute_force_plan_posterior(pomdp, pomdp.prior, 3,
                                                              Eigen::VectorXd::Zero(1));
    ASSERT_EQ(posterior.probabilities.size(), 1);
    EXPECT_DOUBLE_EQ(posterior.probabilities(0), 1.0);
}

TEST(BruteForcePlanPosterior, NoSignalMeansUniform) {
    DiscretePOMDP pomdp;
    pomdp.num_states = 2;
    pomdp.num_obs = 2;
    pomdp.num_actions = 2;
    pomdp.likelihood = Eigen::MatrixXd::Constant(2, 2, 0.5);  // identical columns
    Eigen::Matrix2d swap;
    swap << 0.0, 1.0, 1.0, 0.0;
    pomdp.transitions = {Eigen::MatrixXd::Identity(2, 2), swap};
    pomdp.preferences = Eigen::VectorXd::Constant(2, 0.3);  // uniform preference
    pomdp.prior = Eigen::VectorXd::Constant(2, 0.5);
    auto posterior = fea::oracles::brute_force_plan_posterior(pomdp, pomdp.prior, 2,
                                                              Eigen::VectorXd::Zero(4));
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(posterior.probabilities(i), 0.25, 1e-12);
}

TEST(BruteForcePlanPosterior, BudgetEnforced) {
    DiscretePOMDP pomdp;
    pomdp.num_states = 2;
    pomdp.num_obs = 2;
    pomdp.num_actions = 8;
    pomdp.likelihood = Eigen::MatrixXd::Identity(2, 2);
    pomdp.transitions.assign(8, Eigen::MatrixXd::Identity(2, 2));
    pomdp.preferences = Eigen::VectorXd::Zero(2);
    pomdp.prior = Eigen::VectorXd::Constant(2, 0.5);
    EXPECT_THROW(fea::oracles::brute_force_plan_posterior(pomdp, pomdp.prior, 5,
                                                          Eigen::VectorXd::Zero(32768)),
                 std::runtime_error);
}

}  // namespace
