// Simulated processes used to exercise estimation, control, and planning:
// colored-noise generation, LTI plants, mountain car, and a T-maze
// environment with its categorical model.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <stdexcept>
#include <vector>

#include "fea/planning.hpp"

namespace fea {

struct ColoredNoiseConfig {
    double sigma = 0.0;            // autocorrelation kernel width; 0 = white
    Eigen::MatrixXd covariance;    // target stationary covariance, PD
    std::uint64_t seed = 0;

    void validate() const {
        if (sigma < 0.0) throw std::invalid_argument("ColoredNoiseConfig: sigma must be >= 0");
        if (covariance.rows() != covariance.cols())
            throw std::invalid_argument("ColoredNoiseConfig: covariance must be square");
        if (covariance.isZero(0.0)) return;  // exactly-zero noise is allowed
        Eigen::LLT<Eigen::MatrixXd> llt(covariance);
        if (llt.info() != Eigen::Success)
            throw std::invalid_argument("ColoredNoiseConfig: covariance not positive definite");
    }
};

// Online FIR filter producing noise with Gaussian autocorrelation
// exp(-h^2/(4 sigma^2)): white draws convolved with a Gaussian kernel of
// width sigma, truncated at 4 sigma and normalized to unit l2 energy so the
// stationary covariance matches the target exactly in expectation.
class ColoredNoiseStream {
public:
    ColoredNoiseStream(const ColoredNoiseConfig& cfg, double dt)
        : dim_(static_cast<int>(cfg.covariance.rows())), rng_(cfg.seed) {
        cfg.validate();
        if (!(dt > 0.0)) throw std::invalid_argument("ColoredNoiseStream: dt must be > 0");
        if (cfg.covariance.isZero(0.0)) {
            chol_ = Eigen::MatrixXd::Zero(dim_, dim_);
        } else {
            Eigen::LLT<Eigen::MatrixXd> llt(cfg.covariance);
            chol_ = llt.matrixL();
        }
        if (cfg.sigma > 0.0) {
            const int half = std::max(1, static_cast<int>(std::ceil(4.0 * cfg.sigma / dt)));
            kernel_.resize(2 * half + 1);
            for (int i = -half; i <= half; ++i)
                kernel_[i + half] = std::exp(-(i * dt) * (i * dt) / (2.0 * cfg.sigma * cfg.sigma));
            double energy = 0.0;
            for (double k : kernel_) energy += k * k;
            for (double& k : kernel_) k /= std::sqrt(energy);
            // Warm up the white-noise history so the first sample is already
            // stationary.
            for (std::size_t i = 0; i < kernel_.size(); ++i) history_.push_back(draw_white());
        }
    }

    int dim() const { return dim_; }

    Eigen::VectorXd next() {
        if (kernel_.empty()) return chol_ * draw_white();
        history_.pop_front();
        history_.push_back(draw_white());
        Eigen::VectorXd filtered = Eigen::VectorXd::Zero(dim_);
        for (std::size_t i = 0; i < kernel_.size(); ++i) filtered += kernel_[i] * history_[i];
        return chol_ * filtered;
    }

private:
    Eigen::VectorXd draw_white() {
        Eigen::VectorXd w(dim_);
        for (int i = 0; i < dim_; ++i) w(i) = normal_(rng_);
        return w;
    }

    int dim_;
    Eigen::MatrixXd chol_;
    std::vector<double> kernel_;
    std::deque<Eigen::VectorXd> history_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

// Batch of colored-noise samples, one column per time step.
inline Eigen::MatrixXd colored_noise(int n_samples, const ColoredNoiseConfig& cfg, double dt) {
    if (n_samples < 1) throw std::invalid_argument("colored_noise: n_samples must be >= 1");
    ColoredNoiseStream stream(cfg, dt);
    Eigen::MatrixXd out(stream.dim(), n_samples);
    for (int t = 0; t < n_samples; ++t) out.col(t) = stream.next();
    return out;
}

// Euler-discretized linear plant with colored process and observation noise:
//   x <- x + dt (A x + B u) + w,   y = C x + z
class LTIPlant {
public:
    LTIPlant(Eigen::MatrixXd a, Eigen::MatrixXd b, Eigen::MatrixXd c,
             const ColoredNoiseConfig& process_noise, const ColoredNoiseConfig& obs_noise,
             Eigen::VectorXd x0, double dt)
        : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), x_(std::move(x0)), dt_(dt),
          process_(process_noise, dt), obs_(obs_noise, dt) {
        if (a_.rows() != a_.cols()) throw std::invalid_argument("LTIPlant: A must be square");
        if (b_.rows() != a_.rows()) throw std::invalid_argument("LTIPlant: B rows must match A");
        if (c_.cols() != a_.rows()) throw std::invalid_argument("LTIPlant: C cols must match A");
        if (x_.size() != a_.rows()) throw std::invalid_argument("LTIPlant: x0 dim must match A");
        if (process_.dim() != a_.rows())
            throw std::invalid_argument("LTIPlant: process noise dim must match A");
        if (obs_.dim() != c_.rows())
            throw std::invalid_argument("LTIPlant: observation noise dim must match C");
        if (!(dt > 0.0)) throw std::invalid_argument("LTIPlant: dt must be > 0");
    }

    int state_dim() const { return static_cast<int>(a_.rows()); }
    int input_dim() const { return static_cast<int>(b_.cols()); }
    int obs_dim() const { return static_cast<int>(c_.rows()); }
    double dt() const { return dt_; }
    const Eigen::VectorXd& state() const { return x_; }
    const Eigen::MatrixXd& a() const { return a_; }
    const Eigen::MatrixXd& b() const { return b_; }
    const Eigen::MatrixXd& c() const { return c_; }

    Eigen::VectorXd step(const Eigen::VectorXd& u) {
        if (u.size() != b_.cols()) throw std::invalid_argument("LTIPlant: input dim mismatch");
        x_ += dt_ * (a_ * x_ + b_ * u) + process_.next();
        return c_ * x_ + obs_.next();
    }

    // Deterministic one-step observation prediction (no noise draws, no state
    // change); used by Jacobian probes.
    Eigen::VectorXd predict_observation(const Eigen::VectorXd& u) const {
        if (u.size() != b_.cols()) throw std::invalid_argument("LTIPlant: input dim mismatch");
        return c_ * (x_ + dt_ * (a_ * x_ + b_ * u));
    }

private:
    Eigen::MatrixXd a_, b_, c_;
    Eigen::VectorXd x_;
    double dt_;
    ColoredNoiseStream process_, obs_;
};

// Classic underpowered car in a valley; continuous force input. Observation
// is [position, velocity]; the sparse reward fires at the goal position.
class MountainCarPlant {
public:
    static constexpr double kMinPosition = -1.2;
    static constexpr double kMaxPosition = 0.6;
    static constexpr double kMaxSpeed = 0.07;

    explicit MountainCarPlant(std::uint64_t seed = 0, double force_limit = 1.0,
                              double goal_position = 0.45, bool sparse_reward = true)
        : force_limit_(force_limit), goal_position_(goal_position),
          sparse_reward_(sparse_reward) {
        reset(seed);
    }

    void reset(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        position_ = -0.5 - 0.1 + 0.2 * static_cast<double>(rng() >> 11) * 0x1.0p-53;
        velocity_ = 0.0;
    }

    double position() const { return position_; }
    double velocity() const { return velocity_; }
    double goal_position() const { return goal_position_; }
    bool at_goal() const { return position_ >= goal_position_; }

    Eigen::VectorXd observe() const {
        Eigen::VectorXd y(2);
        y << position_, velocity_;
        return y;
    }

    Eigen::VectorXd step(const Eigen::VectorXd& u) {
        if (u.size() != 1) throw std::invalid_argument("MountainCarPlant: input must be scalar");
        const auto [p, v] = dynamics(position_, velocity_, u(0));
        position_ = p;
        velocity_ = v;
        return observe();
    }

    Eigen::VectorXd predict_observation(const Eigen::VectorXd& u) const {
        if (u.size() != 1) throw std::invalid_argument("MountainCarPlant: input must be scalar");
        const auto [p, v] = dynamics(position_, velocity_, u(0));
        Eigen::VectorXd y(2);
        y << p, v;
        return y;
    }

    double reward(double position) const {
        if (sparse_reward_) return position >= goal_position_ ? 1.0 : 0.0;
        return -std::abs(position - goal_position_);
    }

    // Deterministic update rule, exposed so planners can roll the model
    // forward without touching the plant instance.
    std::pair<double, double> dynamics(double position, double velocity, double force) const {
        const double f = std::clamp(force, -force_limit_, force_limit_);
        double v = velocity + 0.001 * f - 0.0025 * std::cos(3.0 * position);
        v = std::clamp(v, -kMaxSpeed, kMaxSpeed);
        double p = position + v;
        if (p < kMinPosition) {
            p = kMinPosition;
            v = 0.0;
        }
        p = std::min(p, kMaxPosition);
        return {p, v};
    }

private:
    double position_ = -0.5;
    double velocity_ = 0.0;
    double force_limit_;
    double goal_position_;
    bool sparse_reward_;
};

// Planning-task adapter for the mountain car: the rollout model mirrors the
// deterministic plant update (the dynamics are known; learning them is out of
// scope here).
class MountainCarTask {
public:
    explicit MountainCarTask(MountainCarPlant& plant) : plant_(&plant) {}

    Eigen::VectorXd planning_state() const { return plant_->observe(); }

    Eigen::VectorXd rollout_step(const Eigen::VectorXd& state, double action) const {
        const auto [p, v] = plant_->dynamics(state(0), state(1), action);
        Eigen::VectorXd next(2);
        next << p, v;
        return next;
    }

    double reward(const Eigen::VectorXd& state) const { return plant_->reward(state(0)); }
    bool is_goal(const Eigen::VectorXd& state) const {
        return state(0) >= plant_->goal_position();
    }
    void apply_action(double action) { plant_->step(Eigen::VectorXd::Constant(1, action)); }

private:
    MountainCarPlant* plant_;
};

// Four-location T-maze with a hidden reward arm. The cue location reveals the
// arm; both arms are absorbing once entered.
class TMazeEnv {
public:
    enum Location { kCenter = 0, kLeft = 1, kRight = 2, kCue = 3 };
    enum Observation {
        kObsCenter = 0,
        kObsLeftReward = 1,
        kObsLeftEmpty = 2,
        kObsRightReward = 3,
        kObsRightEmpty = 4,
        kObsCueLeft = 5,
        kObsCueRight = 6
    };
    static constexpr int kNumLocations = 4;
    static constexpr int kNumObservations = 7;
    static constexpr int kNumActions = 4;  // move-to-location actions

    explicit TMazeEnv(std::uint64_t seed = 0) { reset(seed); }

    void reset(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        reward_arm_left_ = (splitmix64(rng()) & 1ULL) == 0ULL;
        location_ = kCenter;
    }

    int location() const { return location_; }
    bool reward_arm_left() const { return reward_arm_left_; }

    int step(int action) {
        if (action < 0 || action >= kNumActions)
            throw std::invalid_argument("TMazeEnv: action out of range");
        if (location_ != kLeft && location_ != kRight) location_ = action;  // arms absorb
        return observe();
    }

    int observe() const {
        switch (location_) {
            case kCenter: return kObsCenter;
            case kLeft: return reward_arm_left_ ? kObsLeftReward : kObsLeftEmpty;
            case kRight: return reward_arm_left_ ? kObsRightEmpty : kObsRightReward;
            default: return reward_arm_left_ ? kObsCueLeft : kObsCueRight;
        }
    }

private:
    int location_ = kCenter;
    bool reward_arm_left_ = true;
};

// Categorical model of the T-maze: 8 hidden states (4 locations x 2 reward
// contexts), 7 observations, 4 move actions. The agent knows the layout but
// not the context; the prior is uniform over contexts.
inline DiscretePOMDP tmaze_as_pomdp(double reward_preference = 4.0,
                                    double empty_arm_preference = -6.0) {
    const int kS = 8, kO = TMazeEnv::kNumObservations, kU = TMazeEnv::kNumActions;
    auto state_of = [](int location, int context_left) { return location * 2 + context_left; };

    DiscretePOMDP pomdp;
    pomdp.num_states = kS;
    pomdp.num_obs = kO;
    pomdp.num_actions = kU;

    pomdp.likelihood = Eigen::MatrixXd::Zero(kO, kS);
    for (int ctx = 0; ctx <= 1; ++ctx) {
        pomdp.likelihood(TMazeEnv::kObsCenter, state_of(TMazeEnv::kCenter, ctx)) = 1.0;
        pomdp.likelihood(ctx ? TMazeEnv::kObsLeftReward : TMazeEnv::kObsLeftEmpty,
                         state_of(TMazeEnv::kLeft, ctx)) = 1.0;
        pomdp.likelihood(ctx ? TMazeEnv::kObsRightEmpty : TMazeEnv::kObsRightReward,
                         state_of(TMazeEnv::kRight, ctx)) = 1.0;
        pomdp.likelihood(ctx ? TMazeEnv::kObsCueLeft : TMazeEnv::kObsCueRight,
                         state_of(TMazeEnv::kCue, ctx)) = 1.0;
    }

    pomdp.transitions.assign(kU, Eigen::MatrixXd::Zero(kS, kS));
    for (int a = 0; a < kU; ++a)
        for (int loc = 0; loc < TMazeEnv::kNumLocations; ++loc)
            for (int ctx = 0; ctx <= 1; ++ctx) {
                const int next =
                    (loc == TMazeEnv::kLeft || loc == TMazeEnv::kRight) ? loc : a;
                pomdp.transitions[a](state_of(next, ctx), state_of(loc, ctx)) = 1.0;
            }

    pomdp.preferences = Eigen::VectorXd::Zero(kO);
    pomdp.preferences(TMazeEnv::kObsLeftReward) = reward_preference;
    pomdp.preferences(TMazeEnv::kObsRightReward) = reward_preference;
    pomdp.preferences(TMazeEnv::kObsLeftEmpty) = empty_arm_preference;
    pomdp.preferences(TMazeEnv::kObsRightEmpty) = empty_arm_preference;

    pomdp.prior = Eigen::VectorXd::Zero(kS);
    pomdp.prior(state_of(TMazeEnv::kCenter, 0)) = 0.5;
    pomdp.prior(state_of(TMazeEnv::kCenter, 1)) = 0.5;

    pomdp.validate();
    return pomdp;
}

}  // namespace fea
