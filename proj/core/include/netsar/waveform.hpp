#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "netsar/scene.hpp"

namespace netsar {

using cdouble = std::complex<double>;

enum class PulseKind { flat_spectrum, linear_chirp };

/// Baseband Tx waveform description. flat_spectrum is a truncated sinc whose
/// compressed pulse is (close to) E_g * sinc(pi B t); linear_chirp compresses to
/// nearly the same mainlobe.
struct WaveformSpec {
    double bandwidth = 100.0e6;  // B, Hz
    double duration = 2.0e-7;    // T, seconds
    double energy = 1.0;         // E_g
    double sample_rate = 400e6;  // Hz, complex baseband
    PulseKind pulse_kind = PulseKind::flat_spectrum;

    static WaveformSpec make(double bandwidth_hz, double duration_s, double energy = 1.0,
                             double oversample = 4.0,
                             PulseKind kind = PulseKind::flat_spectrum);

    void validate() const;  // sample_rate >= 2 B, duration * bandwidth >= 1
    double dt() const { return 1.0 / sample_rate; }
};

/// Continuous evaluation of the baseband Tx pulse (zero outside |t| <= T/2).
cdouble pulse_value(const WaveformSpec& spec, double t);

struct PairIndex {
    int tx_id = 0;       // n
    int rx_id = 0;       // m
    int tx_element = 0;  // l, 0-based
    int rx_element = 0;  // k, 0-based

    bool monostatic() const { return tx_id == rx_id; }
};

struct TimeWindow {
    double t0 = 0.0;
    double t1 = 0.0;
};

/// Raw received baseband signal for one Tx-element/Rx-element pair. The nominal
/// carrier f_n has been removed; clock errors leave the residual phase ramp
/// exp(+j 2 pi f_n beta_nm t) plus the apparent TOF shift in the envelope.
struct RawSignal {
    PairIndex pair;
    std::vector<cdouble> samples;
    double t0 = 0.0;
    double dt = 0.0;
    double carrier = 0.0;         // f_n of the Tx sensor
    double true_pair_beta = 0.0;  // simulation metadata, used by the surrogate estimator
};

/// Range-compressed signal: demodulated by the beta_nm estimate and matched
/// filtered. Echo of target q peaks at the apparent TOF with residual phase
/// -(2 pi f_n (1+beta_n) tau_q - alpha_nm + theta_q).
struct RangeProfile {
    PairIndex pair;
    std::vector<cdouble> samples;
    double t0 = 0.0;
    double dt = 0.0;
    double carrier = 0.0;
    double beta_hat_applied = 0.0;

    /// Band-limited interpolation (16-tap Hann-windowed sinc), zero outside support.
    cdouble value_at(double t) const;
};

/// 16-tap windowed-sinc interpolation of a uniformly sampled complex sequence.
cdouble sinc_interp(const std::vector<cdouble>& samples, double t0, double dt, double t);

/// Simulates the received echo of every target for one element pair, following
/// the clock-error model (apparent TOF (1+beta_n) tau + kappa_nm, phase
/// -(2 pi f_n (1+beta_n) tau - alpha_nm + theta_q), residual ramp
/// exp(+j 2 pi f_n beta_nm t)) plus circular white Gaussian noise of per-sample
/// variance noise_psd * sample_rate. Deterministic given rng_seed.
RawSignal synthesize_rx(const Scene& scene, const PairIndex& pair, const WaveformSpec& spec,
                        std::uint64_t rng_seed,
                        const std::optional<TimeWindow>& window = std::nullopt);

/// Window that covers every target echo of a pair (plus a small guard).
TimeWindow default_window(const Scene& scene, const PairIndex& pair, const WaveformSpec& spec);

enum class BetaEstimatorMode { signal, surrogate };

/// Pairwise normalized frequency-offset estimate beta_nm.
/// signal mode: weighted phase-ramp fit (pulse-pair) on the strongest echo.
/// surrogate mode: true beta_nm + Gaussian error with std 1/(f_n T), the
/// accuracy bound of the short-observation estimate.
double estimate_beta_pair(const RawSignal& raw, const WaveformSpec& spec, BetaEstimatorMode mode,
                          std::uint64_t rng_seed);

/// Demodulate by exp(-j 2 pi f_n beta_hat t) and convolve with the conjugate
/// time-reversed pulse. The discrete convolution is scaled by dt so the peak of
/// a unit-magnitude echo is ~E_g independent of the sample rate.
RangeProfile range_compress(const RawSignal& raw, double beta_hat, const WaveformSpec& spec);

/// Anchored linear least squares for the absolute frequency offsets: solves
/// beta_nm = beta_n - beta_m over all available pairs with the gauge
/// beta_bar[0] = 0. Unavailable entries are NaN. Throws NumericalError when the
/// available pairs do not connect all sensors.
std::vector<double> solve_absolute_beta(const std::vector<std::vector<double>>& pairwise);

}  // namespace netsar
