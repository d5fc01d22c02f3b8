#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "netsar/scene.hpp"

namespace netsar::hcrb {

/// Geometry and parametrization of one hybrid Cramer-Rao bound evaluation.
/// The reference sensor doubles as the gauge: its position and phase offset are
/// excluded from the parameter set. Deterministic parameter ordering (the public
/// block contract):
///   [ s_n (x, y) for every sensor except the reference, ascending;
///     alpha_n for every sensor except the reference, ascending;
///     (x_p, y_p) for targets p_prime..P-1, except y of the last target ].
/// Random parameters: (x_p, y_p) of the first p_prime targets; when
/// p_prime == P the gauge-fixed y of the last target is excluded from the
/// random set as well (M_r = 2 P - 1 in that edge case).
struct Problem {
    std::vector<Vec2> sensors;     // phase centers
    std::vector<double> carriers;  // f_n
    std::vector<double> betas;     // beta_n entering 2 pi f_n (1 + beta_n)
    std::vector<Vec2> targets;     // calibration target positions
    int p_prime = 0;
    int ref_sensor = -1;  // index; defaults to the last sensor

    int n_sensors() const { return int(sensors.size()); }
    int n_targets() const { return int(targets.size()); }
    int ref() const { return ref_sensor < 0 ? n_sensors() - 1 : ref_sensor; }
    int rows() const { return (n_sensors() * n_sensors() - 1) * n_targets(); }
};

struct ParamRef {
    enum class Kind { sensor_x, sensor_y, alpha, target_x, target_y };
    Kind kind;
    int index;
};

std::vector<ParamRef> deterministic_params(const Problem& p);
std::vector<ParamRef> random_params(const Problem& p);

/// Stacked phase differences Delta phi_nm,p (pair-major over all (n, m) except
/// the reference pair, target-minor) under the measurement model
/// delta_phi = -2 pi f_n (1+beta_n) tau_nm(x_p) + (alpha_n - alpha_m), reference
/// row subtracted. Used by the finite-difference oracle in tests.
Eigen::VectorXd stack_delta_phi(const Problem& p, const std::vector<Vec2>& sensors,
                                const std::vector<double>& alphas,
                                const std::vector<Vec2>& targets);

struct Jacobians {
    Eigen::MatrixXd g_d;  // rows() x M_d
    Eigen::MatrixXd g_r;  // rows() x M_r
    double condition_number = 0.0;  // of g_d, from its singular values
};

/// Analytic derivatives of the stacked phase differences.
Jacobians phase_jacobians(const Problem& p);

struct Deterministic {
    Eigen::MatrixXd c_d;
    bool used_pseudo_inverse = false;
    double condition_number = 0.0;
};

/// C_d = (G_d^T (C_phi + G_r Xi_r G_r^T)^{-1} G_d)^{-1} with
/// C_phi = sigma^2 (I + 1 1^T), sigma^2 = 1 / (2 snr). Falls back to a
/// pseudo-inverse (relative singular value cutoff 1e-12) with a warning when
/// the information matrix is singular.
Deterministic hcrb_deterministic(const Eigen::MatrixXd& g_d, const Eigen::MatrixXd& g_r,
                                 const Eigen::MatrixXd& xi_r, double snr_linear);

struct CalibrationBound {
    Eigen::MatrixXd c_cal;  // (N^2-1) x (N^2-1)
    double sigma_cal = 0.0;  // radians
};

/// Covariance of the per-pair calibration phases at the point of interest:
/// C_cal = G_dcal C_dcal G_dcal^T with C_dcal the leading 3(N-1) x 3(N-1) block
/// of C_d and G_dcal the phase-model derivatives w.r.t. sensor positions and
/// phase offsets. sigma_cal = sqrt(trace(C_cal) / (N^2 - 1)).
CalibrationBound calibration_covariance(const Eigen::MatrixXd& c_d, const Problem& p,
                                        const Vec2& point_of_interest);

struct Config {
    int n_sensors = 5;
    int p_targets = 5;
    int p_prime = 0;
    double prior_std = 0.20;  // meters, per axis
    double snr_db = 20.0;
    int trials = 500;
    ScenarioParams geometry;  // sensor/target placement; counts overridden
    Vec2 point_of_interest{0.0, 0.0};
    /// The linearized bound is local: fine synchronization searches a box of a
    /// fraction of a wavelength, so a position prior wider than the phase
    /// ambiguity scale carries no additional local information. The prior std
    /// entering Xi_r is therefore capped at lambda/8 of the base carrier
    /// (<= 0 recomputes the default; set very large to disable).
    double prior_basin_cap = 0.0;
};

struct EcdfResult {
    std::vector<double> sigma_cal_deg;  // sorted ascending
    std::vector<double> cdf;            // (i+1)/trials
    int retries = 0;
    double p10 = 0.0, p50 = 0.0, p90 = 0.0;

    double fraction_below(double threshold_deg) const;
};

/// Monte Carlo over random scenarios: scenario -> Jacobians -> C_d -> sigma_cal.
/// Deterministic per seed; singular trials retried with a derived sub-seed.
EcdfResult ecdf_monte_carlo(const Config& config, std::uint64_t rng_seed, int threads = 1);

}  // namespace netsar::hcrb
