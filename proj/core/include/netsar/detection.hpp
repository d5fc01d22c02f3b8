#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "netsar/geometry.hpp"

namespace netsar::detection {

using cdouble = std::complex<double>;

enum class Allocation { contiguous, random_in_btot };
enum class GlrtMode { known, unknown };

struct Config {
    int acquisitions = 1;     // U
    double bandwidth = 1e8;   // B per acquisition, Hz
    double df = 1e6;          // frequency sampling interval, Hz
    Allocation allocation = Allocation::contiguous;
    double b_tot = 1e9;       // random-allocation span, Hz
    double snr1_db = 20.0;    // |eta_1|^2 / sigma_z^2
    double amp_ratio = 0.1;   // |eta_2 / eta_1|, in (0, 1]
    double pfa = 1e-2;
    int trials = 2000;        // per PCD point
    int cfar_trials = 5000;   // H0 trials for the threshold
    double phase_err_std_deg = 0.0;  // residual calibration error per acquisition
    double search_halfwidth_rho = 4.0;  // estimation window, units of rho_single
    double search_step_rho = 0.05;      // estimation grid step, units of rho_single
    double noise_sigma2 = 1.0;          // sigma_z^2 per complex sample

    void validate() const;
};

/// Sampled 1D spectrum: U non-overlapping bands, each sampled at step df
/// (half-open bins), mapped to two-way wavenumbers k = 4 pi f / c.
struct SpectrumPlan {
    std::vector<double> band_starts;  // Hz
    double band_width = 0.0;
    int samples_per_band = 0;
    std::vector<double> k;  // rad/m, band-major
    double rho_single = 0.0;  // c / (2 B)
    double rho_fused = 0.0;   // c / (2 * occupied span)

    std::size_t size() const { return k.size(); }
};

SpectrumPlan allocate_spectrum(const Config& config, std::uint64_t rng_seed);

/// Unit-modulus steering vector, entries exp(-j k_i x).
std::vector<cdouble> steering(const std::vector<double>& k, double x);

/// One independent zero-mean Gaussian phase draw per acquisition, replicated
/// over that acquisition's samples. Applied to the data-generating steering
/// vectors only; the detector keeps the nominal model.
std::vector<double> acquisition_phase_errors(const SpectrumPlan& plan, double sigma_rad,
                                             std::uint64_t rng_seed);
std::vector<cdouble> apply_phase_errors(const std::vector<cdouble>& d,
                                        const std::vector<double>& sample_phases);

struct Observation {
    std::vector<cdouble> y;
    bool h1 = false;
    double x1 = 0.0, x2 = 0.0;
    cdouble eta1, eta2;
};

/// H0: eta_1 d(x1) + z; H1 adds eta_2 d(x2) with x2 = x1 + dx_norm * rho_single.
/// Target phases are uniform per trial, noise is circular Gaussian with
/// sigma_z^2 = 1 per sample.
Observation simulate_observation(const SpectrumPlan& plan, const Config& config, bool h1,
                                 double dx_norm, std::uint64_t rng_seed);

/// Precomputed steering vectors over the estimation grid around x1 = 0.
struct DetectorWorkspace {
    std::vector<double> grid_x;
    std::vector<std::vector<cdouble>> grid_steering;
};
DetectorWorkspace make_workspace(const SpectrumPlan& plan, const Config& config);

struct GlrtOutcome {
    double statistic = 0.0;
    double x1_hat = 0.0;
    double x2_hat = 0.0;
};

/// Gaussian log-likelihood-ratio on the residual energy after removing the
/// strong target (amplitudes treated as nuisance; moments of the quadratic form
/// are mean ||signal||^2 + sigma^2 M and variance 2 sigma^2 ||signal||^2 +
/// sigma^4 M). known mode conditions on the true positions; unknown mode runs
/// two-stage successive cancellation with a least-squares amplitude refit.
GlrtOutcome glrt_statistic(const Observation& obs, const SpectrumPlan& plan, const Config& config,
                           GlrtMode mode, const DetectorWorkspace* workspace = nullptr);

/// k-th order statistic with k = ceil(q n): the empirical q-quantile used by
/// the CFAR calibration.
double empirical_quantile(std::vector<double> values, double q);

/// Monte Carlo CFAR threshold: empirical (1 - PFA) quantile of the statistic
/// under H0 (estimation in the loop for unknown mode).
double cfar_threshold(const SpectrumPlan& plan, const Config& config, GlrtMode mode,
                      std::uint64_t rng_seed, int threads = 1);

struct PcdPoint {
    double dx_norm = 0.0;
    int acquisitions = 0;
    GlrtMode mode = GlrtMode::known;
    double pcd = 0.0;
};

/// PCD at the CFAR threshold over a grid of normalized inter-target distances.
/// In unknown mode a detection counts only when the weak target is also
/// localized within rho_fused / 2.
std::vector<PcdPoint> pcd_curve(const Config& config, const std::vector<double>& dx_grid,
                                std::uint64_t rng_seed, int threads = 1);

struct RocPoint {
    double pfa = 0.0;
    double pcd = 0.0;
    int acquisitions = 0;
};

/// ROC at a fixed inter-target distance (unknown mode).
std::vector<RocPoint> roc_curve(const Config& config, double dx_norm,
                                const std::vector<double>& pfa_grid, std::uint64_t rng_seed,
                                int threads = 1);

}  // namespace netsar::detection
