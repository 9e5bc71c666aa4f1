// Generative-model definitions: dynamics f, observation g, their Jacobians,
// noise specifications, and goal encodings (attractor dynamics, Boltzmann
// preferences over observations).
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>

#include "fea/generalized.hpp"

namespace fea {

// Noise description: stationary covariance plus autocorrelation width.
struct NoiseSpec {
    Eigen::MatrixXd covariance;   // n x n, positive definite
    SmoothnessKernel smoothness;  // sigma in time units, order of the stack

    void validate() const {
        if (covariance.rows() != covariance.cols())
            throw std::invalid_argument("NoiseSpec: covariance must be square");
        Eigen::LLT<Eigen::MatrixXd> llt(covariance);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("NoiseSpec: covariance not positive definite");
        smoothness.validate();
    }

    Eigen::MatrixXd precision() const {
        Eigen::LLT<Eigen::MatrixXd> llt(covariance);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("NoiseSpec: covariance not positive definite");
        Eigen::MatrixXd pi = llt.solve(Eigen::MatrixXd::Identity(covariance.rows(), covariance.cols()));
        return 0.5 * (pi + pi.transpose());
    }
};

namespace detail {

// Central-difference Jacobian with a step scaled to the state magnitude.
template <class Fn>
Eigen::MatrixXd fd_jacobian(const Fn& fn, const Eigen::VectorXd& x, int out_dim) {
    Eigen::MatrixXd jac(out_dim, x.size());
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        const double h = 1e-6 * std::max(1.0, std::abs(x(j)));
        Eigen::VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        jac.col(j) = (fn(xp) - fn(xm)) / (2.0 * h);
    }
    return jac;
}

}  // namespace detail

// Agent-side description of the process: state dynamics f(x, v), observation
// map g(x), Jacobians, and noise. Derivative-stack evaluation is derived from
// the order-0 maps by local linearization (block k of f~ is Jf x_k, etc.).
class GenerativeModel {
public:
    virtual ~GenerativeModel() = default;

    virtual int state_dim() const = 0;
    virtual int cause_dim() const = 0;
    virtual int obs_dim() const = 0;

    virtual Eigen::VectorXd dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const = 0;
    virtual Eigen::VectorXd observation(const Eigen::VectorXd& x) const = 0;

    virtual Eigen::MatrixXd jacobian_f(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
        return detail::fd_jacobian([&](const Eigen::VectorXd& s) { return dynamics(s, v); }, x,
                                   state_dim());
    }
    virtual Eigen::MatrixXd jacobian_g(const Eigen::VectorXd& x) const {
        return detail::fd_jacobian([&](const Eigen::VectorXd& s) { return observation(s); }, x,
                                   obs_dim());
    }
    // d f / d v; zero-width when the model has no causes.
    virtual Eigen::MatrixXd jacobian_v(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
        if (cause_dim() == 0) return Eigen::MatrixXd::Zero(state_dim(), 0);
        return detail::fd_jacobian([&](const Eigen::VectorXd& c) { return dynamics(x, c); }, v,
                                   state_dim());
    }

    virtual const NoiseSpec& process_noise() const = 0;
    virtual const NoiseSpec& obs_noise() const = 0;
};

// Both Jacobians at a point: (df/dx, dg/dx).
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> jacobians(const GenerativeModel& model,
                                                             const Eigen::VectorXd& x,
                                                             const Eigen::VectorXd& v) {
    return {model.jacobian_f(x, v), model.jacobian_g(x)};
}

// Causes for the derivative stack: block k of the supplied cause vector, or
// zero when only order 0 is given (causes enter at order 0 by default).
inline Eigen::VectorXd cause_block(const GeneralizedVector& v, int k) {
    if (k <= v.order()) return v.block(k);
    return Eigen::VectorXd::Zero(v.base_dim());
}

// f over the derivative stack: block 0 is f(x0, v0), higher blocks follow the
// linearized flow Jf x_k + Jv v_k.
inline GeneralizedVector generalized_dynamics(const GenerativeModel& model,
                                              const GeneralizedVector& x,
                                              const GeneralizedVector& v) {
    if (x.base_dim() != model.state_dim())
        throw std::invalid_argument("generalized_dynamics: state dim mismatch");
    if (model.cause_dim() > 0 && v.base_dim() != model.cause_dim())
        throw std::invalid_argument("generalized_dynamics: cause dim mismatch");
    const Eigen::VectorXd v0 =
        model.cause_dim() == 0 ? Eigen::VectorXd::Zero(0) : cause_block(v, 0);
    GeneralizedVector out(model.state_dim(), x.order());
    out.set_block(0, model.dynamics(x.block(0), v0));
    if (x.order() > 0) {
        const Eigen::MatrixXd jf = model.jacobian_f(x.block(0), v0);
        const Eigen::MatrixXd jv = model.jacobian_v(x.block(0), v0);
        for (int k = 1; k <= x.order(); ++k) {
            Eigen::VectorXd blk = jf * x.block(k);
            if (model.cause_dim() > 0) blk += jv * cause_block(v, k);
            out.set_block(k, blk);
        }
    }
    return out;
}

// g over the derivative stack: block 0 is g(x0), higher blocks Jg x_k.
inline GeneralizedVector generalized_observation(const GenerativeModel& model,
                                                 const GeneralizedVector& x) {
    if (x.base_dim() != model.state_dim())
        throw std::invalid_argument("generalized_observation: state dim mismatch");
    GeneralizedVector out(model.obs_dim(), x.order());
    out.set_block(0, model.observation(x.block(0)));
    if (x.order() > 0) {
        const Eigen::MatrixXd jg = model.jacobian_g(x.block(0));
        for (int k = 1; k <= x.order(); ++k) out.set_block(k, jg * x.block(k));
    }
    return out;
}

// Linear plant model: f = A x + B v, g = C x.
class LinearModel : public GenerativeModel {
public:
    LinearModel(Eigen::MatrixXd a, Eigen::MatrixXd b, Eigen::MatrixXd c, NoiseSpec process,
                NoiseSpec obs)
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), process_(std::move(process)),
          obs_(std::move(obs)) {
        if (a_.rows() != a_.cols()) throw std::invalid_argument("LinearModel: A must be square");
        if (b_.rows() != a_.rows()) throw std::invalid_argument("LinearModel: B row count must match A");
        if (c_.cols() != a_.rows()) throw std::invalid_argument("LinearModel: C column count must match A");
        if (process_.covariance.rows() != a_.rows())
            throw std::invalid_argument("LinearModel: process noise dim must match A");
        if (obs_.covariance.rows() != c_.rows())
            throw std::invalid_argument("LinearModel: observation noise dim must match C");
        process_.validate();
        obs_.validate();
    }

    int state_dim() const override { return static_cast<int>(a_.rows()); }
    int cause_dim() const override { return static_cast<int>(b_.cols()); }
    int obs_dim() const override { return static_cast<int>(c_.rows()); }

    Eigen::VectorXd dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const override {
        if (x.size() != a_.rows()) throw std::invalid_argument("LinearModel: state dim mismatch");
        if (v.size() != b_.cols()) throw std::invalid_argument("LinearModel: cause dim mismatch");
        return a_ * x + b_ * v;
    }
    Eigen::VectorXd observation(const Eigen::VectorXd& x) const override { return c_ * x; }

    Eigen::MatrixXd jacobian_f(const Eigen::VectorXd&, const Eigen::VectorXd&) const override {
        return a_;
    }
    Eigen::MatrixXd jacobian_g(const Eigen::VectorXd&) const override { return c_; }
    Eigen::MatrixXd jacobian_v(const Eigen::VectorXd&, const Eigen::VectorXd&) const override {
        return b_;
    }

    const NoiseSpec& process_noise() const override { return process_; }
    const NoiseSpec& obs_noise() const override { return obs_; }

    const Eigen::MatrixXd& a() const { return a_; }
    const Eigen::MatrixXd& b() const { return b_; }
    const Eigen::MatrixXd& c() const { return c_; }

private:
    Eigen::MatrixXd a_, b_, c_;
    NoiseSpec process_, obs_;
};

// Per-order application of a linear model over a derivative stack.
inline GeneralizedVector linear_dynamics(const LinearModel& model, const GeneralizedVector& x,
                                         const GeneralizedVector& v) {
    return generalized_dynamics(model, x, v);
}

// First-order pull toward a target: f(x) = (target - x) / tau.
struct AttractorGoal {
    Eigen::VectorXd target;
    double tau = 1.0;

    void validate() const {
        if (!(tau > 0.0)) throw std::invalid_argument("AttractorGoal: tau must be > 0");
    }
};

// Attractor flow on a derivative stack: order 0 pulls toward the target,
// higher orders damp toward zero so the target is a fixed point of the flow.
inline GeneralizedVector attractor_dynamics(const AttractorGoal& goal, const GeneralizedVector& x) {
    goal.validate();
    if (goal.target.size() != x.base_dim())
        throw std::invalid_argument("attractor_dynamics: target dim mismatch");
    GeneralizedVector out(x.base_dim(), x.order());
    out.set_block(0, (goal.target - x.block(0)) / goal.tau);
    for (int k = 1; k <= x.order(); ++k) out.set_block(k, -x.block(k) / goal.tau);
    return out;
}

// Goal-encoding model for control: the agent believes the state relaxes to
// the target, observed through a linear map (identity by default).
class AttractorModel : public GenerativeModel {
public:
    AttractorModel(AttractorGoal goal, NoiseSpec process, NoiseSpec obs)
        : AttractorModel(std::move(goal), Eigen::MatrixXd(), std::move(process), std::move(obs)) {}

    // Empty C means identity observation.
    AttractorModel(AttractorGoal goal, Eigen::MatrixXd c, NoiseSpec process, NoiseSpec obs)
        : goal_(std::move(goal)), c_(std::move(c)), process_(std::move(process)),
          obs_(std::move(obs)) {
        goal_.validate();
        process_.validate();
        obs_.validate();
        if (c_.size() == 0)
            c_ = Eigen::MatrixXd::Identity(goal_.target.size(), goal_.target.size());
        if (c_.cols() != goal_.target.size())
            throw std::invalid_argument("AttractorModel: C column count must match target dim");
    }

    int state_dim() const override { return static_cast<int>(goal_.target.size()); }
    int cause_dim() const override { return 0; }
    int obs_dim() const override { return static_cast<int>(c_.rows()); }

    Eigen::VectorXd dynamics(const Eigen::VectorXd& x, const Eigen::VectorXd&) const override {
        return (goal_.target - x) / goal_.tau;
    }
    Eigen::VectorXd observation(const Eigen::VectorXd& x) const override { return c_ * x; }

    Eigen::MatrixXd jacobian_f(const Eigen::VectorXd&, const Eigen::VectorXd&) const override {
        return -Eigen::MatrixXd::Identity(state_dim(), state_dim()) / goal_.tau;
    }
    Eigen::MatrixXd jacobian_g(const Eigen::VectorXd&) const override { return c_; }

    const NoiseSpec& process_noise() const override { return process_; }
    const NoiseSpec& obs_noise() const override { return obs_; }
    const AttractorGoal& goal() const { return goal_; }

private:
    AttractorGoal goal_;
    Eigen::MatrixXd c_;
    NoiseSpec process_, obs_;
};

// Log-density over observations encoding what the agent wants to see.
// Unnormalized; plan ranking is invariant to the missing constant.
struct PreferenceModel {
    std::function<double(const Eigen::VectorXd&)> log_density;

    double operator()(const Eigen::VectorXd& y) const { return log_density(y); }
};

// Preference concentrated around high reward: log p(y) = beta * r(y).
inline PreferenceModel boltzmann_preference(std::function<double(const Eigen::VectorXd&)> reward,
                                            double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("boltzmann_preference: beta must be > 0");
    return PreferenceModel{[reward = std::move(reward), beta](const Eigen::VectorXd& y) {
        return beta * reward(y);
    }};
}

}  // namespace fea
