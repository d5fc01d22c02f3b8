#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "netsar/imaging.hpp"
#include "netsar/scene.hpp"

namespace netsar {

struct PairKey {
    int tx_id = 0;
    int rx_id = 0;
    bool operator==(const PairKey&) const = default;
    bool monostatic() const { return tx_id == rx_id; }
};

enum class SyncStage { prior, coarse, fine };

/// Evolving estimate set across the synchronization stages. kappa and alpha are
/// antisymmetric N x N matrices with zero diagonal, indexed by sensor position
/// in `sensor_ids`. alpha holds the per-pair additive phase corrections used by
/// the calibration field (for an injected physical offset a the correction
/// converges to -a; end-to-end closure is what the tests pin down).
struct SyncState {
    std::vector<int> sensor_ids;
    std::vector<double> carriers;                     // f_n
    std::vector<Vec2> sensor_positions;               // phase centers
    std::vector<std::vector<Vec2>> element_offsets;   // global-frame, rigid per sensor
    std::vector<double> beta;                         // beta_bar_n
    std::vector<std::vector<double>> kappa;           // seconds
    std::vector<std::vector<double>> alpha;           // radians
    std::vector<Vec2> cal_targets;
    SyncStage stage = SyncStage::prior;

    std::size_t n_sensors() const { return sensor_positions.size(); }
    std::vector<Vec2> elements_of(std::size_t sensor_index) const;
};

/// Wrapped phase-difference measurements Delta phi_nm,p for every pair except
/// the reference one, rows ordered pair-major ((n, m) ascending), targets minor.
struct PhaseMeasurements {
    std::vector<PairKey> pairs;               // N^2 - 1 rows
    std::vector<std::vector<double>> values;  // [row][p], wrapped to [-pi, pi)
    PairKey ref_pair;
    std::vector<Vec2> cal_positions;  // x_bar_p
    double snr = 0.0;                 // linear, estimated from peak-to-background
    int low_amplitude_count = 0;
};

// ---------------------------------------------------------------------------
// coarse synchronization

struct CoregSearch {
    double psi_min = 0.0, psi_max = 0.0;  // radians
    int psi_steps = 1;
    double delta_max = 1.0;  // meters, per axis
};

struct CoregResult {
    double psi = 0.0;   // content rotation of the slave w.r.t. the master, about grid center
    Vec2 delta;         // content translation of the slave w.r.t. the master
    double score = 0.0;
    bool on_boundary = false;
};

/// Intensity-based rigid registration: coarse grid over (psi, delta) via FFT
/// cross-correlation, then local quadratic refinement, bilinear resampling.
CoregResult coregister(const ComplexImage& master, const ComplexImage& slave,
                       const CoregSearch& search);

/// Corrected positions: s_bar = R_psi (s_hat - phase_center) - delta + phase_center.
std::vector<Vec2> correct_positions(const std::vector<Vec2>& prior, const Vec2& phase_center,
                                    double psi, const Vec2& delta);

/// Timing-offset estimate from the brightest peak of the reference monostatic
/// image and of one bistatic image, both focused on the common grid with
/// kappa = 0. Uses phase-center parametric TOFs.
double estimate_kappa(const ComplexImage& ref_image, const ComplexImage& bistatic_image,
                      const Vec2& tx_center, const Vec2& rx_center, double beta_tx,
                      double wave_speed = kWaveSpeed);

/// Greedy selection of up to P local maxima of the minimum-across-images
/// intensity map, separated by at least min_separation. May return fewer.
std::vector<Vec2> select_calibration_targets(const std::vector<ComplexImage>& images, int p_count,
                                             double min_separation);

/// Interferometric phase extraction at the calibration points (bilinear on real
/// and imaginary parts), reference row subtracted, wrapped.
PhaseMeasurements measure_phases(const std::vector<ComplexImage>& images,
                                 const std::vector<Vec2>& cal_positions, const PairKey& ref_pair,
                                 double low_amplitude_ratio = 3.0);

// ---------------------------------------------------------------------------
// fine synchronization

struct FineSyncOptions {
    double cost_threshold = 0.95;
    int max_outer_iters = 20;
    Vec2 sensor_box{0.15, 0.35};  // half-widths of the search box around coarse positions
    Vec2 target_box{0.15, 0.35};
    double grid_step = 0.0;     // <= 0: lambda_min / 16
    int scan_iters = 4;         // outer iterations that re-run the sensor grid scan
    int target_scan_iters = 2;  // outer iterations that re-run the target grid scan
    int ascent_iters = 40;
    bool fix_last_target_y = true;  // gauge: y of target P frozen
    // Optional target-estimation pass before the first sensor pass, for
    // callers whose calibration anchors are much cruder than their sensor
    // positions. With peak-anchored measurements the paper's 1-2-3 order
    // captures directly, so this is off by default.
    bool initial_target_pass = false;
};

struct FineSyncResult {
    SyncState state;
    bool converged = false;
    int iterations = 0;
    double final_cost = 0.0;          // mean over rows of cos(residual); peaks at 1
    std::vector<double> cost_trace;   // cost after each accepted outer iteration
    std::vector<PairKey> row_pairs;   // per-pair diagnostics at the final state
    std::vector<double> row_costs;
};

/// Alternating maximization: (1) sensor positions from monostatic rows,
/// (2) closed-form per-pair phase corrections (circular mean), (3) calibration
/// target positions from all rows; iterated until the cost exceeds
/// cost_threshold or max_outer_iters. The position of the reference sensor and
/// the y coordinate of the last target are frozen (gauge). Never decreases the
/// cost across outer iterations (best state is kept).
FineSyncResult fine_sync(const PhaseMeasurements& meas, const SyncState& coarse,
                         const FineSyncOptions& opts);

/// Mean over measurement rows of cos(measured - model); peaks at 1.
double sync_cost(const PhaseMeasurements& meas, const SyncState& state,
                 const std::vector<Vec2>& coarse_positions);

/// Wrapped per-row, per-target residuals (measured - model) at a given state.
std::vector<std::vector<double>> sync_residuals(const PhaseMeasurements& meas,
                                                const SyncState& state,
                                                const std::vector<Vec2>& coarse_positions);

/// Space-varying calibration phase for one pair:
/// -2 pi f_n (1 + beta_bar_n) [tau_bar(x) - tau_tilde(x)] + alpha_nm,
/// with tau_bar from the coarse phase centers and tau_tilde from the fine ones.
CalibrationField calibration_field(const SyncState& fine_state,
                                   const std::vector<Vec2>& coarse_positions, const PairKey& pair,
                                   const PixelGrid& grid, double wave_speed = kWaveSpeed);

struct Identifiability {
    bool solvable = false;
    int margin = 0;  // (N-1) P - (2 (N-1) + 2 P - 1)
};

/// Sufficient condition (N-1) P >= 2 (N-1) + 2 P - 1.
Identifiability identifiability_check(int n_sensors, int p_targets);

/// Best-fit rigid transform (rotation + translation) mapping `from` onto `to`,
/// used for gauge-aware error reporting.
struct RigidFit {
    double psi = 0.0;
    Vec2 translation;
    double rms = 0.0;
};
RigidFit fit_rigid(const std::vector<Vec2>& from, const std::vector<Vec2>& to);

}  // namespace netsar
