// Experiment runner: JSON configs in, CSV traces and a JSON report out.
// Wires plants to the estimator, controller, and planners; every stochastic
// experiment requires explicit seeds and is reproducible byte-for-byte.
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fea/control.hpp"
#include "fea/inference.hpp"
#include "fea/oracles.hpp"
#include "fea/planning.hpp"
#include "fea/plants.hpp"
#include "fea/version.hpp"

namespace fea::harness {

using nlohmann::json;

enum class ExperimentKind { estimate, control, plan, noise, compare_kf, compare_pid };

inline const char* kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::estimate: return "estimate";
        case ExperimentKind::control: return "control";
        case ExperimentKind::plan: return "plan";
        case ExperimentKind::noise: return "noise";
        case ExperimentKind::compare_kf: return "compare_kf";
        default: return "compare_pid";
    }
}

struct NoiseSection {
    Eigen::MatrixXd covariance;
    double sigma = 0.0;
};

struct PlantSection {
    std::string type;  // "lti" | "mountain_car" | "tmaze"
    Eigen::MatrixXd a, b, c;
    Eigen::VectorXd x0;
    double dt = 0.01;
    NoiseSection process_noise, observation_noise;
};

struct ModelSection {
    std::string type;  // "linear" | "attractor"
    Eigen::MatrixXd a, b, c;
    Eigen::VectorXd target;
    double tau = 1.0;
    int order = 0;
    NoiseSection process_noise, observation_noise;
};

struct EstimatorSection {
    double kappa_x = 1.0;
    double dt = 0.01;
    int steps_per_observation = 1;
};

struct ControllerSection {
    double kappa_u = 1.0;
    double dt = 0.01;
    JacobianStrategy strategy = JacobianStrategy::exact;
};

struct PidSection {
    double kp = 0.0, ki = 0.0, kd = 0.0;
};

struct PlannerSection {
    int horizon = 2;
    double extrinsic_weight = 1.0;
    double intrinsic_weight = 1.0;
    double beta = 1.0;             // Boltzmann preference temperature
    int episodes = 1;
    int max_episode_steps = 200;
    int population = 64;
    double elite_frac = 0.125;
    int iterations = 6;
    double init_std = 1.0;
    int replan_stride = 1;
    int grid_bins = 24;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::estimate;
    std::vector<std::uint64_t> seeds;
    int horizon = 0;
    std::string output_dir;
    PlantSection plant;
    ModelSection model;
    EstimatorSection estimator;
    ControllerSection controller;
    PidSection pid;
    PlannerSection planner;
    json echo;  // the raw config, replayed into the report
};

struct ValidationResult {
    std::optional<ExperimentConfig> config;
    std::vector<std::string> errors;

    bool ok() const { return errors.empty() && config.has_value(); }
};

namespace detail {

inline bool read_matrix(const json& node, const std::string& field, Eigen::MatrixXd* out,
                        std::vector<std::string>* errors, const std::string& label_prefix = "") {
    const std::string label = label_prefix.empty() ? field : label_prefix + "." + field;
    if (!node.contains(field)) {
        errors->push_back(label + ": missing required matrix");
        return false;
    }
    const json& m = node.at(field);
    if (!m.is_array() || m.empty() || !m[0].is_array()) {
        errors->push_back(label + ": expected a nested array of numbers");
        return false;
    }
    const std::size_t rows = m.size(), cols = m[0].size();
    out->resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!m[r].is_array() || m[r].size() != cols) {
            errors->push_back(label + ": ragged rows");
            return false;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            if (!m[r][c].is_number()) {
                errors->push_back(label + ": non-numeric entry");
                return false;
            }
            (*out)(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m[r][c];
        }
    }
    return true;
}

inline bool read_vector(const json& node, const std::string& field, Eigen::VectorXd* out,
                        std::vector<std::string>* errors) {
    if (!node.contains(field)) {
        errors->push_back(field + ": missing required vector");
        return false;
    }
    const json& v = node.at(field);
    if (!v.is_array() || v.empty()) {
        errors->push_back(field + ": expected a non-empty array of numbers");
        return false;
    }
    out->resize(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) {
            errors->push_back(field + ": non-numeric entry");
            return false;
        }
        (*out)(static_cast<Eigen::Index>(i)) = v[i];
    }
    return true;
}

inline double read_number(const json& node, const std::string& field, double fallback,
                          std::vector<std::string>* errors, bool required = false) {
    if (!node.contains(field)) {
        if (required) errors->push_back(field + ": missing required number");
        return fallback;
    }
    if (!node.at(field).is_number()) {
        errors->push_back(field + ": expected a number");
        return fallback;
    }
    return node.at(field);
}

inline bool read_noise(const json& node, const std::string& prefix, NoiseSection* out,
                       std::vector<std::string>* errors) {
    if (!node.contains(prefix)) {
        errors->push_back(prefix + ": missing noise section");
        return false;
    }
    const json& n = node.at(prefix);
    bool ok = read_matrix(n, "covariance", &out->covariance, errors, prefix);
    out->sigma = read_number(n, "sigma", 0.0, errors);
    if (out->sigma < 0.0) {
        errors->push_back(prefix + ".sigma: must be >= 0");
        ok = false;
    }
    return ok;
}

inline void write_csv_row(std::FILE* f, const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i)
        std::fprintf(f, "%s%.17g", i == 0 ? "" : ",", values[i]);
    std::fprintf(f, "\n");
}

}  // namespace detail

// Parses and cross-validates a raw JSON config. All problems are reported at
// once, each naming the offending field.
inline ValidationResult validate_config(const json& raw) {
    ValidationResult result;
    std::vector<std::string>& errors = result.errors;
    ExperimentConfig cfg;
    cfg.echo = raw;

    const std::string kind = raw.value("experiment", "");
    if (kind == "estimate") cfg.kind = ExperimentKind::estimate;
    else if (kind == "control") cfg.kind = ExperimentKind::control;
    else if (kind == "plan") cfg.kind = ExperimentKind::plan;
    else if (kind == "noise") cfg.kind = ExperimentKind::noise;
    else if (kind == "compare_kf") cfg.kind = ExperimentKind::compare_kf;
    else if (kind == "compare_pid") cfg.kind = ExperimentKind::compare_pid;
    else errors.push_back("experiment: must be one of estimate, control, plan, noise, compare_kf, compare_pid");

    if (!raw.contains("seeds") || !raw.at("seeds").is_array() || raw.at("seeds").empty()) {
        errors.push_back("seeds: seed required (non-empty array of integers)");
    } else {
        for (const auto& s : raw.at("seeds")) {
            if (!s.is_number_integer())
                errors.push_back("seeds: entries must be integers");
            else
                cfg.seeds.push_back(s.get<std::uint64_t>());
        }
    }

    cfg.horizon = static_cast<int>(detail::read_number(raw, "horizon", 0, &errors,
                                                       cfg.kind != ExperimentKind::plan));
    if (cfg.horizon < 0) errors.push_back("horizon: must be >= 0");
    cfg.output_dir = raw.value("output_dir", "");

    const bool needs_plant = cfg.kind != ExperimentKind::noise;
    if (needs_plant) {
        if (!raw.contains("plant")) {
            errors.push_back("plant: missing section");
        } else {
            const json& plant = raw.at("plant");
            cfg.plant.type = plant.value("type", "lti");
            cfg.plant.dt = detail::read_number(plant, "dt", 0.01, &errors);
            if (cfg.plant.dt <= 0.0) errors.push_back("plant.dt: must be > 0");
            if (cfg.plant.type == "lti") {
                detail::read_matrix(plant, "A", &cfg.plant.a, &errors);
                detail::read_matrix(plant, "B", &cfg.plant.b, &errors);
                detail::read_matrix(plant, "C", &cfg.plant.c, &errors);
                detail::read_vector(plant, "x0", &cfg.plant.x0, &errors);
                detail::read_noise(plant, "process_noise", &cfg.plant.process_noise, &errors);
                detail::read_noise(plant, "observation_noise", &cfg.plant.observation_noise,
                                   &errors);
                if (cfg.plant.a.size() > 0) {
                    if (cfg.plant.a.rows() != cfg.plant.a.cols())
                        errors.push_back("plant.A: must be square");
                    if (cfg.plant.b.size() > 0 && cfg.plant.b.rows() != cfg.plant.a.rows())
                        errors.push_back("plant.B: row count must match plant.A");
                    if (cfg.plant.c.size() > 0 && cfg.plant.c.cols() != cfg.plant.a.rows())
                        errors.push_back("plant.C: column count must match plant.A");
                    if (cfg.plant.x0.size() > 0 && cfg.plant.x0.size() != cfg.plant.a.rows())
                        errors.push_back("plant.x0: length must match plant.A");
                    if (cfg.plant.process_noise.covariance.size() > 0 &&
                        cfg.plant.process_noise.covariance.rows() != cfg.plant.a.rows())
                        errors.push_back("plant.process_noise.covariance: dim must match plant.A");
                    if (cfg.plant.c.size() > 0 &&
                        cfg.plant.observation_noise.covariance.size() > 0 &&
                        cfg.plant.observation_noise.covariance.rows() != cfg.plant.c.rows())
                        errors.push_back(
                            "plant.observation_noise.covariance: dim must match plant.C");
                }
            } else if (cfg.plant.type != "mountain_car" && cfg.plant.type != "tmaze") {
                errors.push_back("plant.type: must be lti, mountain_car, or tmaze");
            }
        }
    } else {
        // noise experiment reuses the plant.process_noise shape at top level
        if (!raw.contains("noise")) {
            errors.push_back("noise: missing section");
        } else {
            detail::read_noise(raw, "noise", &cfg.plant.process_noise, &errors);
            cfg.plant.dt = detail::read_number(raw.at("noise"), "dt", 0.01, &errors);
            if (cfg.plant.dt <= 0.0) errors.push_back("noise.dt: must be > 0");
        }
    }

    const bool needs_model = cfg.kind == ExperimentKind::estimate ||
                             cfg.kind == ExperimentKind::control ||
                             cfg.kind == ExperimentKind::compare_kf ||
                             cfg.kind == ExperimentKind::compare_pid;
    if (needs_model) {
        if (!raw.contains("model")) {
            errors.push_back("model: missing section");
        } else {
            const json& model = raw.at("model");
            cfg.model.type = model.value("type", "linear");
            cfg.model.order = static_cast<int>(detail::read_number(model, "order", 0, &errors));
            if (cfg.model.order < 0 || cfg.model.order > 6)
                errors.push_back("model.order: must be in [0, 6]");
            detail::read_noise(model, "process_noise", &cfg.model.process_noise, &errors);
            detail::read_noise(model, "observation_noise", &cfg.model.observation_noise, &errors);
            if (cfg.model.type == "linear") {
                detail::read_matrix(model, "A", &cfg.model.a, &errors);
                detail::read_matrix(model, "B", &cfg.model.b, &errors);
                detail::read_matrix(model, "C", &cfg.model.c, &errors);
                if (cfg.model.a.size() > 0 && cfg.model.a.rows() != cfg.model.a.cols())
                    errors.push_back("model.A: must be square");
                if (cfg.model.a.size() > 0 && cfg.model.c.size() > 0 &&
                    cfg.model.c.cols() != cfg.model.a.rows())
                    errors.push_back("model.C: column count must match model.A");
            } else if (cfg.model.type == "attractor") {
                detail::read_vector(model, "target", &cfg.model.target, &errors);
                cfg.model.tau = detail::read_number(model, "tau", 1.0, &errors);
                if (cfg.model.tau <= 0.0) errors.push_back("model.tau: must be > 0");
            } else {
                errors.push_back("model.type: must be linear or attractor");
            }
            // Cross-checks against the plant.
            if (cfg.plant.type == "lti" && cfg.plant.c.size() > 0) {
                const Eigen::Index obs_dim = cfg.plant.c.rows();
                if (cfg.model.type == "linear" && cfg.model.c.size() > 0 &&
                    cfg.model.c.rows() != obs_dim)
                    errors.push_back("model.C: row count must match plant.C (observation dims)");
                if (cfg.model.type == "attractor" && cfg.model.target.size() > 0 &&
                    cfg.model.target.size() != obs_dim)
                    errors.push_back("model.target: length must match plant observation dim");
            }
        }
    }

    if (cfg.kind == ExperimentKind::estimate || cfg.kind == ExperimentKind::control ||
        cfg.kind == ExperimentKind::compare_kf || cfg.kind == ExperimentKind::compare_pid) {
        if (raw.contains("estimator")) {
            const json& est = raw.at("estimator");
            cfg.estimator.kappa_x = detail::read_number(est, "kappa_x", 1.0, &errors);
            cfg.estimator.dt = detail::read_number(est, "dt", cfg.plant.dt, &errors);
            cfg.estimator.steps_per_observation =
                static_cast<int>(detail::read_number(est, "steps_per_observation", 1, &errors));
            if (cfg.estimator.kappa_x <= 0.0) errors.push_back("estimator.kappa_x: must be > 0");
            if (cfg.estimator.dt <= 0.0) errors.push_back("estimator.dt: must be > 0");
            if (cfg.estimator.steps_per_observation < 1)
                errors.push_back("estimator.steps_per_observation: must be >= 1");
        } else {
            cfg.estimator.dt = cfg.plant.dt;
        }
    }

    if (cfg.kind == ExperimentKind::control || cfg.kind == ExperimentKind::compare_pid) {
        if (raw.contains("controller")) {
            const json& ctrl = raw.at("controller");
            cfg.controller.kappa_u = detail::read_number(ctrl, "kappa_u", 1.0, &errors);
            cfg.controller.dt = detail::read_number(ctrl, "dt", cfg.plant.dt, &errors);
            const std::string strategy = ctrl.value("jacobian_strategy", "exact");
            if (strategy == "exact") cfg.controller.strategy = JacobianStrategy::exact;
            else if (strategy == "sign_only") cfg.controller.strategy = JacobianStrategy::sign_only;
            else errors.push_back("controller.jacobian_strategy: must be exact or sign_only");
            if (cfg.controller.kappa_u < 0.0) errors.push_back("controller.kappa_u: must be >= 0");
            if (cfg.controller.dt <= 0.0) errors.push_back("controller.dt: must be > 0");
        } else {
            cfg.controller.dt = cfg.plant.dt;
        }
    }

    if (cfg.kind == ExperimentKind::compare_pid) {
        if (!raw.contains("pid")) {
            errors.push_back("pid: missing section");
        } else {
            const json& pid = raw.at("pid");
            cfg.pid.kp = detail::read_number(pid, "kp", 0.0, &errors);
            cfg.pid.ki = detail::read_number(pid, "ki", 0.0, &errors);
            cfg.pid.kd = detail::read_number(pid, "kd", 0.0, &errors);
            if (cfg.pid.kp < 0.0 || cfg.pid.ki < 0.0 || cfg.pid.kd < 0.0)
                errors.push_back("pid: gains must be >= 0");
        }
    }

    if (cfg.kind == ExperimentKind::plan) {
        if (!raw.contains("planner")) {
            errors.push_back("planner: missing section");
        } else {
            const json& planner = raw.at("planner");
            cfg.planner.horizon =
                static_cast<int>(detail::read_number(planner, "horizon", 2, &errors));
            cfg.planner.extrinsic_weight =
                detail::read_number(planner, "extrinsic_weight", 1.0, &errors);
            cfg.planner.intrinsic_weight =
                detail::read_number(planner, "intrinsic_weight", 1.0, &errors);
            cfg.planner.beta = detail::read_number(planner, "beta", 1.0, &errors);
            cfg.planner.episodes =
                static_cast<int>(detail::read_number(planner, "episodes", 1, &errors));
            cfg.planner.max_episode_steps = static_cast<int>(
                detail::read_number(planner, "max_episode_steps", 200, &errors));
            cfg.planner.population =
                static_cast<int>(detail::read_number(planner, "population", 64, &errors));
            cfg.planner.elite_frac = detail::read_number(planner, "elite_frac", 0.125, &errors);
            cfg.planner.iterations =
                static_cast<int>(detail::read_number(planner, "iterations", 6, &errors));
            cfg.planner.init_std = detail::read_number(planner, "init_std", 1.0, &errors);
            cfg.planner.replan_stride =
                static_cast<int>(detail::read_number(planner, "replan_stride", 1, &errors));
            cfg.planner.grid_bins =
                static_cast<int>(detail::read_number(planner, "grid_bins", 24, &errors));
            if (cfg.planner.horizon < 1) errors.push_back("planner.horizon: must be >= 1");
            if (cfg.planner.beta <= 0.0) errors.push_back("planner.beta: must be > 0");
            if (cfg.planner.episodes < 1) errors.push_back("planner.episodes: must be >= 1");
        }
        if (cfg.plant.type == "lti")
            errors.push_back("plant.type: plan experiments need mountain_car or tmaze");
    }

    if (errors.empty()) result.config = std::move(cfg);
    return result;
}

struct SeedMetrics {
    std::uint64_t seed = 0;
    json values;
};

struct RunReport {
    std::string experiment;
    json config_echo;
    std::vector<SeedMetrics> per_seed;
    double wall_clock_sec = 0.0;
    std::string version = kVersion;

    json to_json() const {
        json out;
        out["experiment"] = experiment;
        out["version"] = version;
        out["wall_clock_sec"] = wall_clock_sec;
        out["config"] = config_echo;
        out["per_seed"] = json::array();
        for (const auto& m : per_seed) {
            json entry;
            entry["seed"] = m.seed;
            entry["metrics"] = m.values;
            out["per_seed"].push_back(entry);
        }
        return out;
    }
};

namespace detail {

struct CsvWriter {
    std::FILE* file = nullptr;

    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) {
        file = std::fopen(path.string().c_str(), "wb");
        if (!file) throw std::runtime_error("cannot open trace file " + path.string());
        for (std::size_t i = 0; i < header.size(); ++i)
            std::fprintf(file, "%s%s", i == 0 ? "" : ",", header[i].c_str());
        std::fprintf(file, "\n");
    }
    ~CsvWriter() {
        if (file) std::fclose(file);
    }
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<double>& values) { write_csv_row(file, values); }
};

inline std::vector<std::string> dim_headers(const std::string& prefix, Eigen::Index n) {
    std::vector<std::string> out;
    for (Eigen::Index i = 0; i < n; ++i) out.push_back(prefix + "." + std::to_string(i));
    return out;
}

inline ColoredNoiseConfig to_noise_cfg(const NoiseSection& section, std::uint64_t seed) {
    return ColoredNoiseConfig{section.sigma, section.covariance, seed};
}

inline NoiseSpec to_noise_spec(const NoiseSection& section, int order) {
    return NoiseSpec{section.covariance, {section.sigma > 0.0 ? section.sigma : 1.0, order}};
}

inline LTIPlant make_lti_plant(const ExperimentConfig& cfg, std::uint64_t seed) {
    return LTIPlant(cfg.plant.a, cfg.plant.b, cfg.plant.c,
                    to_noise_cfg(cfg.plant.process_noise, mix_seed(seed, 0x9e1)),
                    to_noise_cfg(cfg.plant.observation_noise, mix_seed(seed, 0x9e2)),
                    cfg.plant.x0, cfg.plant.dt);
}

inline std::unique_ptr<GenerativeModel> make_model(const ExperimentConfig& cfg) {
    const int p = cfg.model.order;
    if (cfg.model.type == "attractor")
        return std::make_unique<AttractorModel>(AttractorGoal{cfg.model.target, cfg.model.tau},
                                                to_noise_spec(cfg.model.process_noise, p),
                                                to_noise_spec(cfg.model.observation_noise, p));
    return std::make_unique<LinearModel>(cfg.model.a, cfg.model.b, cfg.model.c,
                                         to_noise_spec(cfg.model.process_noise, p),
                                         to_noise_spec(cfg.model.observation_noise, p));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-kind experiment drivers. Each writes trace_<seed>.csv rows and returns
// the metrics JSON for the report.

inline json run_estimate_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::filesystem::path& trace_path) {
    LTIPlant plant = detail::make_lti_plant(cfg, seed);
    auto model = detail::make_model(cfg);
    const int p = cfg.model.order;
    const int n = plant.state_dim(), q = plant.obs_dim();

    std::vector<Eigen::VectorXd> observations, truth;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(plant.input_dim());
    for (int t = 0; t < cfg.horizon; ++t) {
        observations.push_back(plant.step(u));
        truth.push_back(plant.state());
    }
    EstimatorConfig est{cfg.estimator.kappa_x, cfg.estimator.dt, cfg.estimator.steps_per_observation};
    std::vector<Beliefs> beliefs;
    if (!observations.empty())
        beliefs = run_filter(*model, observations, {}, est, Beliefs::zero(n, p));

    std::vector<std::string> header{"t"};
    auto append = [&](const std::vector<std::string>& cols) {
        header.insert(header.end(), cols.begin(), cols.end());
    };
    append(detail::dim_headers("y", q));
    append(detail::dim_headers("x", n));
    append(detail::dim_headers("mu", static_cast<Eigen::Index>(n) * (p + 1)));
    header.push_back("F");
    detail::CsvWriter csv(trace_path, header);

    double mse = 0.0, mean_f = 0.0;
    int settled = 0;
    std::vector<Eigen::VectorXd> window(p + 1, observations.empty() ? Eigen::VectorXd::Zero(q)
                                                                    : observations.front());
    const double sample_dt = est.dt * est.steps_per_observation;
    for (int t = 0; t < cfg.horizon; ++t) {
        window.erase(window.begin());
        window.push_back(observations[t]);
        const double f =
            vfe(*model, beliefs[t], embed_taylor(window, sample_dt, p), GeneralizedVector(1, 0));
        std::vector<double> row{static_cast<double>(t)};
        for (int i = 0; i < q; ++i) row.push_back(observations[t](i));
        for (int i = 0; i < n; ++i) row.push_back(truth[t](i));
        for (Eigen::Index i = 0; i < beliefs[t].mean.flat().size(); ++i)
            row.push_back(beliefs[t].mean.flat()(i));
        row.push_back(f);
        csv.row(row);
        mean_f += f / cfg.horizon;
        if (t >= cfg.horizon / 2) {
            mse += (beliefs[t].mean.block(0) - truth[t]).squaredNorm();
            ++settled;
        }
    }
    json metrics;
    metrics["mse"] = settled > 0 ? mse / settled : 0.0;
    metrics["mean_F"] = mean_f;
    if (!beliefs.empty())
        metrics["final_abs_error"] = (beliefs.back().mean.block(0) - truth.back()).norm();
    return metrics;
}

inline json run_compare_kf_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                const std::filesystem::path& trace_path) {
    LTIPlant plant = detail::make_lti_plant(cfg, seed);
    auto model = detail::make_model(cfg);
    const int p = cfg.model.order;
    const int n = plant.state_dim(), q = plant.obs_dim();

    std::vector<Eigen::VectorXd> observations, truth;
    Eigen::VectorXd u = Eigen::VectorXd::Zero(plant.input_dim());
    for (int t = 0; t < cfg.horizon; ++t) {
        observations.push_back(plant.step(u));
        truth.push_back(plant.state());
    }

    EstimatorConfig est{cfg.estimator.kappa_x, cfg.estimator.dt, cfg.estimator.steps_per_observation};
    std::vector<Beliefs> beliefs;
    if (!observations.empty())
        beliefs = run_filter(*model, observations, {}, est, Beliefs::zero(n, p));

    // Discrete-time Kalman oracle on the same observation stream.
    const Eigen::MatrixXd a_d =
        Eigen::MatrixXd::Identity(n, n) + cfg.plant.dt * cfg.plant.a;
    oracles::KalmanState kf{Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n)};
    std::vector<Eigen::VectorXd> kf_means;
    for (int t = 0; t < cfg.horizon; ++t) {
        kf = oracles::kalman_step(a_d, cfg.plant.dt * cfg.plant.b, cfg.plant.c,
                                  cfg.plant.process_noise.covariance,
                                  cfg.plant.observation_noise.covariance, kf,
                                  Eigen::VectorXd::Zero(plant.input_dim()), observations[t]);
        kf_means.push_back(kf.mean);
    }

    std::vector<std::string> header{"t"};
    auto append = [&](const std::vector<std::string>& cols) {
        header.insert(header.end(), cols.begin(), cols.end());
    };
    append(detail::dim_headers("y", q));
    append(detail::dim_headers("x", n));
    append(detail::dim_headers("mu", static_cast<Eigen::Index>(n) * (p + 1)));
    append(detail::dim_headers("kf", n));
    detail::CsvWriter csv(trace_path, header);

    double mse_aif = 0.0, mse_kf = 0.0;
    int settled = 0;
    for (int t = 0; t < cfg.horizon; ++t) {
        std::vector<double> row{static_cast<double>(t)};
        for (int i = 0; i < q; ++i) row.push_back(observations[t](i));
        for (int i = 0; i < n; ++i) row.push_back(truth[t](i));
        for (Eigen::Index i = 0; i < beliefs[t].mean.flat().size(); ++i)
            row.push_back(beliefs[t].mean.flat()(i));
        for (int i = 0; i < n; ++i) row.push_back(kf_means[t](i));
        csv.row(row);
        if (t >= cfg.horizon / 2) {
            mse_aif += (beliefs[t].mean.block(0) - truth[t]).squaredNorm();
            mse_kf += (kf_means[t] - truth[t]).squaredNorm();
            ++settled;
        }
    }
    json metrics;
    metrics["mse_aif"] = settled > 0 ? mse_aif / settled : 0.0;
    metrics["mse_kf"] = settled > 0 ? mse_kf / settled : 0.0;
    metrics["mse_ratio"] =
        metrics["mse_kf"].get<double>() > 0.0
            ? metrics["mse_aif"].get<double>() / metrics["mse_kf"].get<double>()
            : 0.0;
    return metrics;
}

inline json run_control_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                             const std::filesystem::path& trace_path) {
    LTIPlant plant = detail::make_lti_plant(cfg, seed);
    auto model = detail::make_model(cfg);
    const int p = cfg.model.order;
    const int q = plant.obs_dim();

    EstimatorConfig est{cfg.estimator.kappa_x, cfg.estimator.dt, cfg.estimator.steps_per_observation};
    ControllerConfig ctrl{cfg.controller.kappa_u, cfg.controller.dt, cfg.controller.strategy};
    AicTrace trace = run_aic(plant, *model, est, ctrl, cfg.horizon,
                             Beliefs::zero(model->state_dim(), p),
                             Eigen::VectorXd::Zero(plant.input_dim()));

    std::vector<std::string> header{"t"};
    auto append = [&](const std::vector<std::string>& cols) {
        header.insert(header.end(), cols.begin(), cols.end());
    };
    append(detail::dim_headers("y", q));
    append(detail::dim_headers("mu", static_cast<Eigen::Index>(model->state_dim()) * (p + 1)));
    append(detail::dim_headers("u", plant.input_dim()));
    header.push_back("F");
    detail::CsvWriter csv(trace_path, header);

    const Eigen::VectorXd target = cfg.model.target;
    double first_f = 0.0, last_f = 0.0;
    const std::size_t tenth = std::max<std::size_t>(1, trace.steps.size() / 10);
    int steps_to_goal = -1;
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
        const auto& step = trace.steps[t];
        std::vector<double> row{static_cast<double>(t)};
        for (Eigen::Index i = 0; i < step.y.size(); ++i) row.push_back(step.y(i));
        for (Eigen::Index i = 0; i < step.mu.size(); ++i) row.push_back(step.mu(i));
        for (Eigen::Index i = 0; i < step.u.size(); ++i) row.push_back(step.u(i));
        row.push_back(step.free_energy);
        csv.row(row);
        if (t < tenth) first_f += step.free_energy / tenth;
        if (t >= trace.steps.size() - tenth) last_f += step.free_energy / tenth;
        if (steps_to_goal < 0 && target.size() == step.y.size() &&
            (step.y - target).norm() < 0.02)
            steps_to_goal = static_cast<int>(t);
    }
    json metrics;
    if (!trace.steps.empty() && target.size() == trace.steps.back().y.size())
        metrics["final_abs_error"] = (trace.steps.back().y - target).norm();
    metrics["mean_F_first_tenth"] = first_f;
    metrics["mean_F_last_tenth"] = last_f;
    metrics["steps_to_goal"] = steps_to_goal;
    return metrics;
}

// The free-energy control law integrates K_p eps' + K_i eps, so its per-step
// increments are compared against the PI increments evaluated on the same
// error stream (the closed AIF loop's). A separate PID-driven loop provides
// the classical trajectory for reference.
inline json run_compare_pid_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                                 const std::filesystem::path& trace_path) {
    LTIPlant aif_plant = detail::make_lti_plant(cfg, seed);
    LTIPlant pid_plant = detail::make_lti_plant(cfg, seed);  // same noise stream
    auto model = detail::make_model(cfg);
    const int p = cfg.model.order;
    const double target = cfg.model.target.size() > 0 ? cfg.model.target(0) : 0.0;

    EstimatorConfig est{cfg.estimator.kappa_x, cfg.estimator.dt, cfg.estimator.steps_per_observation};
    ControllerConfig ctrl{cfg.controller.kappa_u, cfg.controller.dt, cfg.controller.strategy};

    Beliefs beliefs = Beliefs::zero(1, p);
    Eigen::VectorXd pinned(p + 1);
    pinned.setZero();
    pinned(0) = target;
    beliefs.mean = GeneralizedVector(1, p, pinned);

    PidController pid_own_loop({cfg.pid.kp, cfg.pid.ki, cfg.pid.kd}, target, cfg.controller.dt);

    detail::CsvWriter csv(trace_path, {"t", "y_aif", "u_aif", "y_pid", "u_pid", "du_aif", "du_pi"});
    double u_aif = 0.0, u_pid = 0.0;
    double max_rel_mismatch = 0.0;
    double prev_error = 0.0;
    bool first = true;
    std::vector<Eigen::VectorXd> window;
    const Eigen::MatrixXd jac = Eigen::MatrixXd::Ones(1, 1);
    const double sample_dt = est.dt * est.steps_per_observation;
    for (int t = 0; t < cfg.horizon; ++t) {
        const double y_aif = aif_plant.step(Eigen::VectorXd::Constant(1, u_aif))(0);
        if (window.empty()) window.assign(p + 1, Eigen::VectorXd::Constant(1, y_aif));
        window.erase(window.begin());
        window.push_back(Eigen::VectorXd::Constant(1, y_aif));
        const GeneralizedVector y_gen = embed_taylor(window, sample_dt, p);
        beliefs = step_estimate(*model, beliefs, y_gen, GeneralizedVector(1, 0), est, t);
        const double u_before = u_aif;
        u_aif = step_action(*model, beliefs, y_gen, Eigen::VectorXd::Constant(1, u_before), ctrl,
                            jac, t)
                    .u(0);
        const double du_aif = u_aif - u_before;

        // PI increments on the AIF loop's error signal.
        const double error = target - y_aif;
        const double d_error = first ? 0.0 : error - prev_error;
        first = false;
        prev_error = error;
        const double du_pi = cfg.pid.ki * error * cfg.controller.dt + cfg.pid.kp * d_error;
        max_rel_mismatch = std::max(max_rel_mismatch,
                                    std::abs(du_aif - du_pi) / std::max(std::abs(du_pi), 1e-10));

        // Reference PID running its own loop on an identical plant.
        const double y_pid = pid_plant.step(Eigen::VectorXd::Constant(1, u_pid))(0);
        u_pid = pid_own_loop.step(y_pid);

        csv.row({static_cast<double>(t), y_aif, u_aif, y_pid, u_pid, du_aif, du_pi});
    }
    json metrics;
    metrics["max_rel_increment_mismatch"] = max_rel_mismatch;
    metrics["final_abs_error_aif"] = std::abs(target - aif_plant.c()(0, 0) * aif_plant.state()(0));
    metrics["final_abs_error_pid"] = std::abs(target - pid_plant.c()(0, 0) * pid_plant.state()(0));
    return metrics;
}

inline json run_noise_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                           const std::filesystem::path& trace_path) {
    ColoredNoiseConfig noise = detail::to_noise_cfg(cfg.plant.process_noise, seed);
    Eigen::MatrixXd samples = colored_noise(cfg.horizon, noise, cfg.plant.dt);
    detail::CsvWriter csv(trace_path,
                          [&] {
                              std::vector<std::string> h{"t"};
                              auto d = detail::dim_headers("w", samples.rows());
                              h.insert(h.end(), d.begin(), d.end());
                              return h;
                          }());
    for (int t = 0; t < samples.cols(); ++t) {
        std::vector<double> row{static_cast<double>(t)};
        for (Eigen::Index i = 0; i < samples.rows(); ++i) row.push_back(samples(i, t));
        csv.row(row);
    }
    json metrics;
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        const double mean = samples.row(i).mean();
        metrics["empirical_variance"].push_back(
            (samples.row(i).array() - mean).square().mean());
    }
    return metrics;
}

inline json run_plan_seed(const ExperimentConfig& cfg, std::uint64_t seed,
                          const std::filesystem::path& trace_path) {
    json metrics;
    if (cfg.plant.type == "tmaze") {
        TMazeEnv env(seed);
        DiscretePOMDP pomdp = tmaze_as_pomdp();
        DiscretePlannerConfig planner;
        planner.horizon = cfg.planner.horizon;
        planner.extrinsic_weight = cfg.planner.extrinsic_weight;
        planner.intrinsic_weight = cfg.planner.intrinsic_weight;
        planner.selection.seed = seed;
        const int steps = cfg.planner.max_episode_steps;
        DiscreteTrace trace = plan_act_loop(pomdp, env, planner, steps);

        detail::CsvWriter csv(trace_path, {"t", "action", "observation", "p_best_plan"});
        int cue_step = -1, arm_step = -1, reward_step = -1;
        for (std::size_t t = 0; t < trace.steps.size(); ++t) {
            const auto& step = trace.steps[t];
            csv.row({static_cast<double>(t), static_cast<double>(step.action),
                     static_cast<double>(step.observation),
                     step.plan_probabilities.maxCoeff()});
            const int obs = step.observation;
            if (cue_step < 0 &&
                (obs == TMazeEnv::kObsCueLeft || obs == TMazeEnv::kObsCueRight))
                cue_step = static_cast<int>(t);
            if (arm_step < 0 &&
                (obs == TMazeEnv::kObsLeftReward || obs == TMazeEnv::kObsLeftEmpty ||
                 obs == TMazeEnv::kObsRightReward || obs == TMazeEnv::kObsRightEmpty))
                arm_step = static_cast<int>(t);
            if (reward_step < 0 &&
                (obs == TMazeEnv::kObsLeftReward || obs == TMazeEnv::kObsRightReward))
                reward_step = static_cast<int>(t);
        }
        metrics["cue_step"] = cue_step;
        metrics["arm_step"] = arm_step;
        metrics["reward_step"] = reward_step;
        metrics["cue_before_arm"] =
            cue_step >= 0 && (arm_step < 0 || cue_step < arm_step);
    } else {
        MountainCarPlant plant(seed);
        MountainCarTask task(plant);
        VisitationGrid grid(
            Eigen::Vector2d(MountainCarPlant::kMinPosition, -MountainCarPlant::kMaxSpeed),
            Eigen::Vector2d(MountainCarPlant::kMaxPosition, MountainCarPlant::kMaxSpeed),
            Eigen::Vector2i(cfg.planner.grid_bins, cfg.planner.grid_bins));
        PreferenceModel preference = boltzmann_preference(
            [&plant](const Eigen::VectorXd& y) { return plant.reward(y(0)); },
            cfg.planner.beta);
        ContinuousPlannerConfig planner;
        planner.plan_horizon = cfg.planner.horizon;
        planner.replan_stride = cfg.planner.replan_stride;
        planner.extrinsic_weight = cfg.planner.extrinsic_weight;
        planner.intrinsic_weight = cfg.planner.intrinsic_weight;
        planner.population = cfg.planner.population;
        planner.elite_frac = cfg.planner.elite_frac;
        planner.iterations = cfg.planner.iterations;
        planner.init_std = cfg.planner.init_std;
        planner.seed = seed;

        detail::CsvWriter csv(trace_path, {"episode", "steps", "reached_goal", "total_reward"});
        int first_success = -1;
        for (int ep = 0; ep < cfg.planner.episodes; ++ep) {
            plant.reset(mix_seed(seed, static_cast<std::uint64_t>(ep)));
            ContinuousEpisode episode = run_continuous_efe_episode(
                task, grid, preference.log_density, planner, cfg.planner.max_episode_steps,
                static_cast<std::uint64_t>(ep));
            csv.row({static_cast<double>(ep), static_cast<double>(episode.steps_taken),
                     episode.reached_goal ? 1.0 : 0.0, episode.total_reward});
            if (first_success < 0 && episode.reached_goal) first_success = ep;
        }
        metrics["episodes_to_goal"] = first_success;
        metrics["reached_goal"] = first_success >= 0;
    }
    return metrics;
}

// Runs the configured experiment for every seed, writing trace_<seed>.csv and
// report.json into the output directory. Returns the report.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const auto start = std::chrono::steady_clock::now();

    fs::path out_dir = cfg.output_dir;
    if (out_dir.empty()) {
        if (const char* env = std::getenv("FEA_OUT_DIR")) out_dir = env;
        else out_dir = ".";
    }
    fs::create_directories(out_dir);

    RunReport report;
    report.experiment = kind_name(cfg.kind);
    report.config_echo = cfg.echo;
    for (std::uint64_t seed : cfg.seeds) {
        const fs::path trace_path = out_dir / ("trace_" + std::to_string(seed) + ".csv");
        json metrics;
        switch (cfg.kind) {
            case ExperimentKind::estimate: metrics = run_estimate_seed(cfg, seed, trace_path); break;
            case ExperimentKind::control: metrics = run_control_seed(cfg, seed, trace_path); break;
            case ExperimentKind::plan: metrics = run_plan_seed(cfg, seed, trace_path); break;
            case ExperimentKind::noise: metrics = run_noise_seed(cfg, seed, trace_path); break;
            case ExperimentKind::compare_kf:
                metrics = run_compare_kf_seed(cfg, seed, trace_path);
                break;
            case ExperimentKind::compare_pid:
                metrics = run_compare_pid_seed(cfg, seed, trace_path);
                break;
        }
        report.per_seed.push_back({seed, metrics});
    }
    report.wall_clock_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    std::ofstream report_file(out_dir / "report.json");
    report_file << report.to_json().dump(2) << "\n";
    return report;
}

}  // namespace fea::harness
