// Action generation by free-energy descent: sensory-Jacobian strategies, the
// action update rule, the closed estimation/control loop, and a PID reference
// controller.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <concepts>
#include <stdexcept>
#include <vector>

#include "fea/inference.hpp"

namespace fea {

// A simulated process the controller can act on.
template <class P>
concept Plant = requires(P plant, const P cplant, const Eigen::VectorXd& u) {
    { plant.step(u) } -> std::convertible_to<Eigen::VectorXd>;
    { cplant.predict_observation(u) } -> std::convertible_to<Eigen::VectorXd>;
};

enum class JacobianStrategy {
    exact,      // finite differences on the simulated plant
    sign_only,  // entrywise sign of a nominal Jacobian
};

struct ControllerConfig {
    double kappa_u = 1.0;
    double dt = 0.005;
    JacobianStrategy jacobian_strategy = JacobianStrategy::exact;

    void validate() const {
        if (kappa_u < 0.0) throw std::invalid_argument("ControllerConfig: kappa_u must be >= 0");
        if (!(dt > 0.0)) throw std::invalid_argument("ControllerConfig: dt must be > 0");
    }
};

struct ActionState {
    Eigen::VectorXd u;
};

// d(observation)/d(action) of the simulated plant by central differences.
// Only available in simulation; real hardware gets the sign strategy.
template <Plant P>
Eigen::MatrixXd plant_output_jacobian(const P& plant, const Eigen::VectorXd& u) {
    const Eigen::VectorXd y0 = plant.predict_observation(u);
    Eigen::MatrixXd jac(y0.size(), u.size());
    for (Eigen::Index j = 0; j < u.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(u(j)));
        Eigen::VectorXd up = u, um = u;
        up(j) += h;
        um(j) -= h;
        jac.col(j) = (plant.predict_observation(up) - plant.predict_observation(um)) / (2.0 * h);
    }
    return jac;
}

inline Eigen::MatrixXd sign_matrix(const Eigen::MatrixXd& m) {
    return m.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// Sensory-action Jacobian per strategy. The nominal matrix seeds the sign
// strategy; when omitted it is probed once from the plant.
template <Plant P>
Eigen::MatrixXd sensory_action_jacobian(JacobianStrategy strategy, const P& plant,
                                        const Eigen::VectorXd& u,
                                        const Eigen::MatrixXd* nominal = nullptr) {
    if (strategy == JacobianStrategy::exact) return plant_output_jacobian(plant, u);
    return sign_matrix(nominal ? *nominal : plant_output_jacobian(plant, u));
}

// u <- u - dt kappa_u J' grad_y F, with grad_y F = Pi_z eps_y summed over
// derivative orders (only the sensory term of F depends on the observation).
inline ActionState step_action(const GenerativeModel& model, const Beliefs& beliefs,
                               const GeneralizedVector& y, const Eigen::VectorXd& u,
                               const ControllerConfig& cfg, const Eigen::MatrixXd& jac,
                               long step_index = 0) {
    cfg.validate();
    if (jac.rows() != model.obs_dim())
        throw std::invalid_argument("step_action: Jacobian row count must match obs dim");
    if (jac.cols() != u.size())
        throw std::invalid_argument("step_action: Jacobian column count must match action dim");
    const int p = beliefs.mean.order();
    const GeneralizedVector eps_y = y - generalized_observation(model, beliefs.mean);
    const Eigen::VectorXd weighted = detail::gen_obs_precision(model, p) * eps_y.flat();
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(u.size());
    for (int k = 0; k <= p; ++k)
        delta += jac.transpose() * weighted.segment(static_cast<Eigen::Index>(k) * model.obs_dim(),
                                                    model.obs_dim());
    Eigen::VectorXd next = u - cfg.dt * cfg.kappa_u * delta;
    if (!next.allFinite()) throw DivergenceError("step_action", step_index);
    return ActionState{std::move(next)};
}

struct AicStepRecord {
    Eigen::VectorXd y;
    Eigen::VectorXd mu;       // full derivative stack
    Eigen::VectorXd u;
    double free_energy = 0.0;
};

struct AicTrace {
    std::vector<AicStepRecord> steps;
    Beliefs final_beliefs;
    Eigen::VectorXd final_u;

    AicTrace(Beliefs beliefs, Eigen::VectorXd u)
        : final_beliefs(std::move(beliefs)), final_u(std::move(u)) {}
};

// Closed perception-action loop: plant step, belief update on the embedded
// observation, action update. The sign strategy freezes the nominal Jacobian
// probed at the initial state.
template <Plant P>
AicTrace run_aic(P& plant, const GenerativeModel& model, const EstimatorConfig& estimator_cfg,
                 const ControllerConfig& controller_cfg, int horizon, const Beliefs& initial,
                 Eigen::VectorXd u0) {
    estimator_cfg.validate();
    controller_cfg.validate();
    const int p = initial.mean.order();
    const double sample_dt = estimator_cfg.dt * estimator_cfg.steps_per_observation;
    Beliefs beliefs = initial;
    Eigen::VectorXd u = std::move(u0);
    Eigen::MatrixXd nominal_sign;
    if (controller_cfg.jacobian_strategy == JacobianStrategy::sign_only)
        nominal_sign = sign_matrix(plant_output_jacobian(plant, u));

    AicTrace trace(beliefs, u);
    trace.steps.reserve(horizon);
    std::vector<Eigen::VectorXd> window;
    const GeneralizedVector no_causes(1, 0);
    for (int t = 0; t < horizon; ++t) {
        const Eigen::VectorXd y = plant.step(u);
        if (window.empty()) window.assign(p + 1, y);
        window.erase(window.begin());
        window.push_back(y);
        const GeneralizedVector y_gen = embed_taylor(window, sample_dt, p);
        beliefs = step_estimate(model, beliefs, y_gen, no_causes, estimator_cfg, t);
        const Eigen::MatrixXd jac =
            controller_cfg.jacobian_strategy == JacobianStrategy::exact
                ? plant_output_jacobian(plant, u)
                : nominal_sign;
        u = step_action(model, beliefs, y_gen, u, controller_cfg, jac, t).u;
        trace.steps.push_back(
            {y, beliefs.mean.flat(), u, vfe(model, beliefs, y_gen, no_causes)});
    }
    trace.final_beliefs = beliefs;
    trace.final_u = u;
    return trace;
}

struct PidGains {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;

    void validate() const {
        if (kp < 0.0 || ki < 0.0 || kd < 0.0)
            throw std::invalid_argument("PidGains: gains must be non-negative");
    }
};

// Discrete PID on a scalar channel: rectangle-rule integral, backward
// -difference derivative.
class PidController {
public:
    PidController(PidGains gains, double target, double dt)
        : gains_(gains), target_(target), dt_(dt) {
        gains_.validate();
        if (!(dt > 0.0)) throw std::invalid_argument("PidController: dt must be > 0");
    }

    double step(double y) {
        const double error = target_ - y;
        integral_ += error * dt_;
        const double derivative = has_prev_ ? (error - prev_error_) / dt_ : 0.0;
        prev_error_ = error;
        has_prev_ = true;
        return gains_.kp * error + gains_.ki * integral_ + gains_.kd * derivative;
    }

    void set_target(double target) { target_ = target; }
    double target() const { return target_; }

private:
    PidGains gains_;
    double target_;
    double dt_;
    double integral_ = 0.0;
    double prev_error_ = 0.0;
    bool has_prev_ = false;
};

inline PidController pid_controller(PidGains gains, double target, double dt) {
    return PidController(gains, target, dt);
}

}  // namespace fea
