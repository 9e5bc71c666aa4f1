// Variational free energy under the Laplace/mean-field approximation, its
// analytic gradient, belief precision (curvature), and the gradient-descent
// state estimator over derivative stacks.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fea/generalized.hpp"
#include "fea/model.hpp"

namespace fea {

// Posterior mean over the derivative stack plus its precision (confidence).
struct Beliefs {
    GeneralizedVector mean;
    GeneralizedPrecision precision;

    Eigen::MatrixXd covariance() const {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(precision.matrix());
        return ldlt.solve(Eigen::MatrixXd::Identity(precision.size(), precision.size()));
    }

    static Beliefs zero(int base_dim, int order) {
        const Eigen::Index m = static_cast<Eigen::Index>(base_dim) * (order + 1);
        return Beliefs{GeneralizedVector(base_dim, order),
                       GeneralizedPrecision(Eigen::MatrixXd::Identity(m, m))};
    }
};

struct EstimatorConfig {
    double kappa_x = 1.0;          // gradient-descent rate on the mean
    double dt = 0.005;             // Euler integration step
    int steps_per_observation = 1;

    void validate() const {
        if (!(kappa_x > 0.0)) throw std::invalid_argument("EstimatorConfig: kappa_x must be > 0");
        if (!(dt > 0.0)) throw std::invalid_argument("EstimatorConfig: dt must be > 0");
        if (steps_per_observation < 1)
            throw std::invalid_argument("EstimatorConfig: steps_per_observation must be >= 1");
    }
};

// Sensory residual y - g(mu) and dynamics residual D mu - f(mu, v).
struct PredictionErrors {
    GeneralizedVector eps_y;
    GeneralizedVector eps_x;
};

// Estimator blew up; carries the step at which a non-finite value appeared.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& where, long step)
        : std::runtime_error(format(where, step)), step_(step) {}
    long step() const { return step_; }

private:
    static std::string format(const std::string& where, long step) {
        std::ostringstream msg;
        msg << "divergence in " << where << " at step " << step << ": non-finite value";
        return msg.str();
    }
    long step_;
};

namespace detail {

// Generalized noise precisions of the model at the belief order.
inline Eigen::MatrixXd gen_process_precision(const GenerativeModel& model, int order) {
    SmoothnessKernel k{model.process_noise().smoothness.sigma, order};
    return kronecker(smoothness_precision(k), model.process_noise().precision());
}

inline Eigen::MatrixXd gen_obs_precision(const GenerativeModel& model, int order) {
    SmoothnessKernel k{model.obs_noise().smoothness.sigma, order};
    return kronecker(smoothness_precision(k), model.obs_noise().precision());
}

// log det of a positive definite matrix via Cholesky; throws if singular.
inline double logdet_pd(const Eigen::MatrixXd& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << what << ": matrix not positive definite (singular covariance?)";
        throw std::runtime_error(msg.str());
    }
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

// Generalized Jacobians across the stack: I_(p+1) (x) J.
inline Eigen::MatrixXd stacked(const Eigen::MatrixXd& j, int order) {
    return kronecker(Eigen::MatrixXd::Identity(order + 1, order + 1), j);
}

}  // namespace detail

inline PredictionErrors prediction_errors(const GenerativeModel& model, const Beliefs& beliefs,
                                          const GeneralizedVector& y, const GeneralizedVector& v) {
    if (y.base_dim() != model.obs_dim())
        throw std::invalid_argument("prediction_errors: observation dim mismatch");
    if (y.order() != beliefs.mean.order())
        throw std::invalid_argument("prediction_errors: observation order mismatch");
    GeneralizedVector eps_y = y - generalized_observation(model, beliefs.mean);
    GeneralizedVector eps_x = shift(beliefs.mean) - generalized_dynamics(model, beliefs.mean, v);
    return {std::move(eps_y), std::move(eps_x)};
}

// F = 1/2 eps_y' Pi_z eps_y + 1/2 eps_x' Pi_w eps_x
//     + 1/2 ln|Sigma_w| + 1/2 ln|Sigma_z|
// with generalized precisions Pi = S(sigma) (x) Sigma^-1. The quadratic
// terms carry the 1/2 of the Gaussian log-density so the curvature formula
// below is consistent; the constant mean-field residual is omitted.
inline double vfe(const GenerativeModel& model, const Beliefs& beliefs, const GeneralizedVector& y,
                  const GeneralizedVector& v) {
    const int p = beliefs.mean.order();
    const PredictionErrors eps = prediction_errors(model, beliefs, y, v);
    const Eigen::MatrixXd pi_w = detail::gen_process_precision(model, p);
    const Eigen::MatrixXd pi_z = detail::gen_obs_precision(model, p);
    const double quad_y = eps.eps_y.flat().dot(pi_z * eps.eps_y.flat());
    const double quad_x = eps.eps_x.flat().dot(pi_w * eps.eps_x.flat());
    // ln|Sigma~| = -ln|Pi~|
    const double logdet_w = -detail::logdet_pd(pi_w, "vfe: process precision");
    const double logdet_z = -detail::logdet_pd(pi_z, "vfe: observation precision");
    return 0.5 * (quad_y + quad_x) + 0.5 * logdet_w + 0.5 * logdet_z;
}

// grad_mu F = -Jg~' Pi_z eps_y + (D - Jf~)' Pi_w eps_x
// where Jg~ = I (x) dg/dx, Jf~ = I (x) df/dx and D is the shift matrix.
inline Eigen::VectorXd vfe_gradient(const GenerativeModel& model, const Beliefs& beliefs,
                                    const GeneralizedVector& y, const GeneralizedVector& v) {
    const int p = beliefs.mean.order();
    const PredictionErrors eps = prediction_errors(model, beliefs, y, v);
    const Eigen::VectorXd v0 =
        model.cause_dim() == 0 ? Eigen::VectorXd::Zero(0) : cause_block(v, 0);
    const Eigen::MatrixXd jg = detail::stacked(model.jacobian_g(beliefs.mean.block(0)), p);
    const Eigen::MatrixXd jf = detail::stacked(model.jacobian_f(beliefs.mean.block(0), v0), p);
    const Eigen::MatrixXd d = shift_matrix(model.state_dim(), p);
    const Eigen::MatrixXd pi_w = detail::gen_process_precision(model, p);
    const Eigen::MatrixXd pi_z = detail::gen_obs_precision(model, p);
    return -jg.transpose() * (pi_z * eps.eps_y.flat()) +
           (d - jf).transpose() * (pi_w * eps.eps_x.flat());
}

// Pi_x = (D - Jf~)' Pi_w (D - Jf~) + Jg~' Pi_z Jg~: curvature of F at the
// mode, symmetric positive semidefinite by construction.
inline GeneralizedPrecision belief_precision(const GenerativeModel& model, const Beliefs& beliefs,
                                             const GeneralizedVector& v) {
    const int p = beliefs.mean.order();
    const Eigen::VectorXd v0 =
        model.cause_dim() == 0 ? Eigen::VectorXd::Zero(0) : cause_block(v, 0);
    const Eigen::MatrixXd jg = detail::stacked(model.jacobian_g(beliefs.mean.block(0)), p);
    const Eigen::MatrixXd jf = detail::stacked(model.jacobian_f(beliefs.mean.block(0), v0), p);
    const Eigen::MatrixXd d = shift_matrix(model.state_dim(), p);
    const Eigen::MatrixXd pi_w = detail::gen_process_precision(model, p);
    const Eigen::MatrixXd pi_z = detail::gen_obs_precision(model, p);
    const Eigen::MatrixXd dm = d - jf;
    Eigen::MatrixXd pi = dm.transpose() * pi_w * dm + jg.transpose() * pi_z * jg;
    return GeneralizedPrecision(0.5 * (pi + pi.transpose()));
}

// One filtering update: mu <- mu + dt (D mu - kappa_x grad F), applied
// steps_per_observation times (explicit Euler), then the precision is
// refreshed from the curvature at the new mode.
inline Beliefs step_estimate(const GenerativeModel& model, const Beliefs& beliefs,
                             const GeneralizedVector& y, const GeneralizedVector& v,
                             const EstimatorConfig& cfg, long step_index = 0) {
    cfg.validate();
    GeneralizedVector mu = beliefs.mean;
    Beliefs current{mu, beliefs.precision};
    for (int s = 0; s < cfg.steps_per_observation; ++s) {
        const Eigen::VectorXd grad = vfe_gradient(model, current, y, v);
        const Eigen::VectorXd flow = shift(current.mean).flat() - cfg.kappa_x * grad;
        Eigen::VectorXd next = current.mean.flat() + cfg.dt * flow;
        if (!next.allFinite()) throw DivergenceError("step_estimate", step_index);
        current.mean = GeneralizedVector(mu.base_dim(), mu.order(), std::move(next));
    }
    current.precision = belief_precision(model, current, v);
    return current;
}

// Belief trajectory for a sampled observation series: each sample is embedded
// into a derivative stack by backward differences over a sliding window
// (seeded with copies of the first sample), then the estimator advances.
inline std::vector<Beliefs> run_filter(const GenerativeModel& model,
                                       const std::vector<Eigen::VectorXd>& observations,
                                       const std::vector<Eigen::VectorXd>& causes,
                                       const EstimatorConfig& cfg, const Beliefs& initial) {
    cfg.validate();
    if (observations.empty()) throw std::invalid_argument("run_filter: empty observation series");
    const int p = initial.mean.order();
    const double sample_dt = cfg.dt * cfg.steps_per_observation;
    std::vector<Eigen::VectorXd> window(p + 1, observations.front());
    Beliefs beliefs = initial;
    std::vector<Beliefs> out;
    out.reserve(observations.size());
    for (std::size_t t = 0; t < observations.size(); ++t) {
        window.erase(window.begin());
        window.push_back(observations[t]);
        const GeneralizedVector y = embed_taylor(window, sample_dt, p);
        GeneralizedVector v(std::max(model.cause_dim(), 1), 0);
        if (!causes.empty()) {
            const Eigen::VectorXd& c = causes[std::min(t, causes.size() - 1)];
            v = GeneralizedVector(static_cast<int>(c.size()), 0, c);
        }
        beliefs = step_estimate(model, beliefs, y, v, cfg, static_cast<long>(t));
        out.push_back(beliefs);
    }
    return out;
}

}  // namespace fea
