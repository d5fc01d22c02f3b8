#pragma once

#include <cstdint>
#include <vector>

#include "netsar/geometry.hpp"

namespace netsar {

/// Per-sensor clock error model: eps_n(t) = kappa_n + beta_n * t.
///
/// Pairwise offsets follow the Tx-minus-Rx convention throughout the toolkit:
///   kappa_nm = kappa_n - kappa_m,  alpha_nm = alpha_n - alpha_m,
///   beta_nm  = beta_n  - beta_m,
/// so all of them vanish for n == m and the residual demodulation phase ramp is
/// exp(+j 2 pi f_n beta_nm t).
struct ClockModel {
    double kappa = 0.0;  // time offset, seconds
    double beta = 0.0;   // normalized frequency offset, dimensionless
    double alpha = 0.0;  // carrier phase offset, radians

    ClockModel() = default;

    /// Free-alpha constructor (used by the HCRB studies where alpha is a
    /// standalone parameter).
    ClockModel(double kappa_s, double beta_, double alpha_rad)
        : kappa(kappa_s), beta(beta_), alpha(alpha_rad) {}

    /// Physically tied constructor: alpha_n = 2 pi f_n kappa_n.
    static ClockModel from_kappa(double kappa_s, double beta_, double carrier_hz) {
        return ClockModel(kappa_s, beta_, 2.0 * kPi * carrier_hz * kappa_s);
    }
};

struct Sensor {
    int id = 0;
    Vec2 phase_center;                  // s_n
    double orientation = 0.0;           // Psi_n, radians
    std::vector<Vec2> element_offsets;  // sensor-local frame, meters
    double carrier = 0.0;               // f_n, Hz
    double bandwidth = 0.0;             // B, Hz
    ClockModel clock;

    std::size_t element_count() const { return element_offsets.size(); }
};

struct Target {
    Vec2 position;           // x_q
    double magnitude = 1.0;  // rho_q >= 0
    double phase = 0.0;      // theta_q in [-pi, pi)
};

struct Scene {
    std::vector<Sensor> sensors;
    std::vector<Target> targets;
    double noise_psd = 0.0;  // N_0; per-sample noise variance is noise_psd * sample_rate

    /// Throws ConfigError on any violated invariant (empty lists, duplicate ids,
    /// overlapping FDM bands, nonpositive carrier/bandwidth, ...).
    void validate() const;

    const Sensor& sensor_by_id(int id) const;
    std::size_t sensor_index(int id) const;

    // Pairwise clock offsets, Tx-minus-Rx convention (zero for n == m).
    double pairwise_kappa(int tx_id, int rx_id) const;
    double pairwise_beta(int tx_id, int rx_id) const;
    double pairwise_alpha(int tx_id, int rx_id) const;
};

/// Two-way time of flight Tx -> point -> Rx.
double tof(const Vec2& tx_element, const Vec2& rx_element, const Vec2& point,
           double wave_speed = kWaveSpeed);

/// Apparent (clock-distorted) TOF: (1 + beta_n) * tof + kappa_nm.
double apparent_tof(double tof_s, const ClockModel& tx_clock, double pair_kappa);

/// Element positions in the global frame: phase_center + R(Psi_n) * offset.
std::vector<Vec2> element_positions(const Sensor& sensor);

/// Parameters of the randomized vehicular scenario used by the HCRB and
/// synchronization studies. Vehicles sit on the line y = sensor_y, spread along
/// x with a minimum pairwise spacing; targets fall uniformly in a rectangle.
struct ScenarioParams {
    int n_sensors = 5;
    double sensor_span_x = 50.0;      // meters
    double sensor_min_spacing = 7.0;  // meters
    double sensor_y = 0.0;
    int n_targets = 5;
    double target_x_min = -20.0, target_x_max = 20.0;
    double target_y_min = 20.0, target_y_max = 30.0;
    double target_min_separation = 0.0;  // 0 disables the constraint
    double carrier_base = 76.5e9;        // Hz; sensor n gets carrier_base + n * carrier_step
    double carrier_step = 100.0e6;       // Hz; >= bandwidth keeps FDM bands disjoint
    double bandwidth = 100.0e6;          // Hz
    int elements_per_sensor = 1;
    double element_spacing = 0.0;  // meters; 0 with one element collapses to the phase center
    double sensor_orientation = 0.0;
    double target_magnitude = 1.0;
    double strong_target_boost = 1.0;  // magnitude factor for the first target
    bool random_target_phase = true;
    double noise_psd = 0.0;
    int max_attempts = 10000;  // rejection sampling budget
};

/// Deterministic random scenario draw. Throws FeasibilityError when the spacing
/// constraints cannot be met (n * min_spacing > span) or the attempt budget is
/// exhausted.
Scene random_scenario(std::uint64_t rng_seed, const ScenarioParams& params);

}  // namespace netsar
