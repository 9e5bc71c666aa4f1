// Independent reference implementations used for verification: a standard
// Kalman filter, central finite differences, and brute-force plan scoring by
// direct joint enumeration. Deliberately shares no arithmetic with the
// modules it checks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fea/planning.hpp"

namespace fea::oracles {

struct KalmanState {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

// One predict/update cycle of the discrete-time Kalman filter:
//   x- = A x + B u,  P- = A P A' + Q
//   K  = P- C' (C P- C' + R)^-1
//   x+ = x- + K (y - C x-),  P+ = (I - K C) P-
inline KalmanState kalman_step(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                               const Eigen::MatrixXd& c, const Eigen::MatrixXd& q,
                               const Eigen::MatrixXd& r, const KalmanState& state,
                               const Eigen::VectorXd& u, const Eigen::VectorXd& y) {
    const Eigen::VectorXd x_pred = a * state.mean + b * u;
    const Eigen::MatrixXd p_pred = a * state.covariance * a.transpose() + q;
    const Eigen::MatrixXd s = c * p_pred * c.transpose() + r;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
    if (!lu.isInvertible())
        throw std::runtime_error("kalman_step: innovation covariance singular");
    const Eigen::MatrixXd gain = p_pred * c.transpose() * lu.inverse();
    KalmanState out;
    out.mean = x_pred + gain * (y - c * x_pred);
    const Eigen::MatrixXd ikc =
        Eigen::MatrixXd::Identity(p_pred.rows(), p_pred.cols()) - gain * c;
    out.covariance = ikc * p_pred;
    out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
    return out;
}

// Central-difference gradient of a scalar function.
inline Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: h must be > 0");
    Eigen::VectorXd grad(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        grad(i) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return grad;
}

// Central-difference Jacobian of a vector function.
inline Eigen::MatrixXd finite_difference_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x,
    double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_jacobian: h must be > 0");
    const Eigen::VectorXd f0 = fn(x);
    Eigen::MatrixXd jac(f0.size(), x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        jac.col(i) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return jac;
}

// Hessian by central second differences on the function values.
inline Eigen::MatrixXd finite_difference_hessian(
    const std::function<double(const Eigen::VectorXd&)>& fn, const Eigen::VectorXd& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_hessian: h must be > 0");
    const Eigen::Index n = x.size();
    Eigen::MatrixXd hess(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
            xpp(i) += h; xpp(j) += h;
            xpm(i) += h; xpm(j) -= h;
            xmp(i) -= h; xmp(j) += h;
            xmm(i) -= h; xmm(j) -= h;
            hess(i, j) = (fn(xpp) - fn(xpm) - fn(xmp) + fn(xmm)) / (4.0 * h * h);
            hess(j, i) = hess(i, j);
        }
    }
    return hess;
}

// Brute-force plan scoring straight from the definition
//   G_t = sum_x sum_y q(x) p(y|x) [ln q(x) - ln p~(y) - ln q(x|y)]
// over explicitly propagated rollouts, followed by the softmax. No reuse of
// the per-step extrinsic/intrinsic decomposition.
inline PlanPosterior brute_force_plan_posterior(const DiscretePOMDP& pomdp,
                                                const Eigen::VectorXd& belief, int horizon,
                                                const Eigen::VectorXd& log_prior,
                                                std::size_t budget = 4096) {
    pomdp.validate();
    if (horizon < 1) throw std::invalid_argument("brute_force_plan_posterior: horizon must be >= 1");
    const double count = std::pow(static_cast<double>(pomdp.num_actions), horizon);
    if (count > static_cast<double>(budget)) {
        std::ostringstream msg;
        msg << "brute_force_plan_posterior: " << pomdp.num_actions << "^" << horizon
            << " exceeds budget " << budget;
        throw std::runtime_error(msg.str());
    }
    const auto num_plans = static_cast<std::size_t>(count);
    std::vector<Plan> plans(num_plans);
    Eigen::VectorXd efes(static_cast<Eigen::Index>(num_plans));

    for (std::size_t idx = 0; idx < num_plans; ++idx) {
        // Decode plan index in base num_actions, most significant step first.
        std::vector<int> actions(horizon);
        std::size_t rem = idx;
        for (int t = horizon - 1; t >= 0; --t) {
            actions[t] = static_cast<int>(rem % pomdp.num_actions);
            rem /= pomdp.num_actions;
        }
        double g_total = 0.0;
        Eigen::VectorXd q = belief;
        for (int t = 0; t < horizon; ++t) {
            q = pomdp.transitions[actions[t]] * q;
            for (int x = 0; x < pomdp.num_states; ++x) {
                if (q(x) <= 0.0) continue;
                for (int y = 0; y < pomdp.num_obs; ++y) {
                    const double joint = q(x) * pomdp.likelihood(y, x);
                    if (joint <= 0.0) continue;
                    const double qy = pomdp.likelihood.row(y).dot(q);
                    const double post_x = pomdp.likelihood(y, x) * q(x) / qy;
                    g_total += joint * (std::log(std::max(q(x), 1e-300)) -
                                        pomdp.preferences(y) -
                                        std::log(std::max(post_x, 1e-300)));
                }
            }
        }
        plans[idx].actions = std::move(actions);
        efes(static_cast<Eigen::Index>(idx)) = g_total;
    }

    PlanPosterior out;
    out.plans = std::move(plans);
    out.log_prior = log_prior;
    Eigen::VectorXd logits = log_prior - efes;
    const double max_logit = logits.maxCoeff();
    Eigen::VectorXd probs = (logits.array() - max_logit).exp();
    out.probabilities = probs / probs.sum();
    return out;
}

}  // namespace fea::oracles
