#include "netsar/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "netsar/errors.hpp"
#include "netsar/fft.hpp"
#include "netsar/random.hpp"

namespace netsar {

namespace {

double sinc(double x) {
    if (std::abs(x) < 1e-12) return 1.0;
    return std::sin(x) / x;
}

}  // namespace

WaveformSpec WaveformSpec::make(double bandwidth_hz, double duration_s, double energy,
                                double oversample, PulseKind kind) {
    WaveformSpec s;
    s.bandwidth = bandwidth_hz;
    s.duration = duration_s;
    s.energy = energy;
    s.sample_rate = oversample * bandwidth_hz;
    s.pulse_kind = kind;
    s.validate();
    return s;
}

void WaveformSpec::validate() const {
    if (bandwidth <= 0.0 || duration <= 0.0 || energy <= 0.0 || sample_rate <= 0.0)
        throw ConfigError("waveform: bandwidth, duration, energy and sample_rate must be > 0");
    if (sample_rate < 2.0 * bandwidth)
        throw ConfigError("waveform: sample_rate must be >= 2 * bandwidth");
    if (duration * bandwidth < 1.0)
        throw ConfigError("waveform: time-bandwidth product must be >= 1");
}

cdouble pulse_value(const WaveformSpec& spec, double t) {
    if (std::abs(t) > spec.duration / 2) return {0.0, 0.0};
    switch (spec.pulse_kind) {
        case PulseKind::flat_spectrum:
            return {std::sqrt(spec.energy * spec.bandwidth) * sinc(kPi * spec.bandwidth * t), 0.0};
        case PulseKind::linear_chirp: {
            const double rate = spec.bandwidth / spec.duration;
            const double phase = kPi * rate * t * t;
            const double amp = std::sqrt(spec.energy / spec.duration);
            return {amp * std::cos(phase), amp * std::sin(phase)};
        }
    }
    return {0.0, 0.0};
}

cdouble sinc_interp(const std::vector<cdouble>& samples, double t0, double dt, double t) {
    constexpr int kTaps = 16;
    constexpr int kHalf = kTaps / 2;
    const double u = (t - t0) / dt;
    const auto n = static_cast<long>(samples.size());
    const long i0 = static_cast<long>(std::floor(u));
    cdouble acc(0.0, 0.0);
    for (long i = i0 - kHalf + 1; i <= i0 + kHalf; ++i) {
        if (i < 0 || i >= n) continue;
        const double x = u - double(i);  // in (-kHalf, kHalf]
        const double w = 0.5 * (1.0 + std::cos(kPi * x / kHalf));
        acc += samples[static_cast<std::size_t>(i)] * (sinc(kPi * x) * w);
    }
    return acc;
}

cdouble RangeProfile::value_at(double t) const { return sinc_interp(samples, t0, dt, t); }

TimeWindow default_window(const Scene& scene, const PairIndex& pair, const WaveformSpec& spec) {
    const Sensor& tx = scene.sensor_by_id(pair.tx_id);
    const Sensor& rx = scene.sensor_by_id(pair.rx_id);
    const Vec2 tx_pos = element_positions(tx).at(pair.tx_element);
    const Vec2 rx_pos = element_positions(rx).at(pair.rx_element);
    const double kappa = scene.pairwise_kappa(pair.tx_id, pair.rx_id);

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& tgt : scene.targets) {
        const double tau = tof(tx_pos, rx_pos, tgt.position);
        const double t_app = apparent_tof(tau, tx.clock, kappa);
        lo = std::min(lo, t_app);
        hi = std::max(hi, t_app);
    }
    const double guard = 4.0 / spec.bandwidth;
    return {lo - spec.duration / 2 - guard, hi + spec.duration / 2 + guard};
}

RawSignal synthesize_rx(const Scene& scene, const PairIndex& pair, const WaveformSpec& spec,
                        std::uint64_t rng_seed, const std::optional<TimeWindow>& window) {
    spec.validate();
    const Sensor& tx = scene.sensor_by_id(pair.tx_id);
    const Sensor& rx = scene.sensor_by_id(pair.rx_id);
    if (pair.tx_element < 0 || pair.tx_element >= int(tx.element_count()))
        throw ConfigError("synthesize_rx: tx element index out of range");
    if (pair.rx_element < 0 || pair.rx_element >= int(rx.element_count()))
        throw ConfigError("synthesize_rx: rx element index out of range");

    const Vec2 tx_pos = element_positions(tx).at(pair.tx_element);
    const Vec2 rx_pos = element_positions(rx).at(pair.rx_element);
    const double kappa_nm = scene.pairwise_kappa(pair.tx_id, pair.rx_id);
    const double alpha_nm = scene.pairwise_alpha(pair.tx_id, pair.rx_id);
    const double beta_nm = scene.pairwise_beta(pair.tx_id, pair.rx_id);
    const double f_n = tx.carrier;

    const TimeWindow win = window ? *window : default_window(scene, pair, spec);
    const double dt = spec.dt();
    const auto n_samples = static_cast<std::size_t>(std::ceil((win.t1 - win.t0) / dt)) + 1;

    RawSignal out;
    out.pair = pair;
    out.t0 = win.t0;
    out.dt = dt;
    out.carrier = f_n;
    out.true_pair_beta = beta_nm;
    out.samples.assign(n_samples, cdouble(0.0, 0.0));

    for (const auto& tgt : scene.targets) {
        const double tau = tof(tx_pos, rx_pos, tgt.position);
        const double t_app = apparent_tof(tau, tx.clock, kappa_nm);
        if (t_app - spec.duration / 2 < win.t0 || t_app + spec.duration / 2 > win.t1)
            throw FeasibilityError("synthesize_rx: time window truncates a target echo");
        if (tgt.magnitude == 0.0) continue;

        // phase constant of this echo (Tx-minus-Rx pairwise convention)
        const double phi0 = 2.0 * kPi * f_n * (1.0 + tx.clock.beta) * tau - alpha_nm + tgt.phase;
        const double stretch = 1.0 + beta_nm;

        const auto i_lo = static_cast<std::size_t>(std::max(
            0.0, std::floor((t_app - spec.duration / 2 - win.t0) / dt)));
        const auto i_hi = std::min<std::size_t>(
            n_samples - 1,
            static_cast<std::size_t>(std::ceil((t_app + spec.duration / 2 - win.t0) / dt)));
        for (std::size_t i = i_lo; i <= i_hi; ++i) {
            const double t = win.t0 + double(i) * dt;
            const cdouble env = pulse_value(spec, stretch * (t - t_app));
            if (env == cdouble(0.0, 0.0)) continue;
            const double phase = 2.0 * kPi * f_n * beta_nm * t - phi0;
            out.samples[i] += tgt.magnitude * env * cdouble(std::cos(phase), std::sin(phase));
        }
    }

    const double sigma_w2 = scene.noise_psd * spec.sample_rate;
    if (sigma_w2 > 0.0) {
        Rng rng(rng_seed);
        const double s = std::sqrt(sigma_w2 / 2.0);
        for (auto& v : out.samples) v += cdouble(s * rng.normal(), s * rng.normal());
    }
    return out;
}

double estimate_beta_pair(const RawSignal& raw, const WaveformSpec& spec, BetaEstimatorMode mode,
                          std::uint64_t rng_seed) {
    if (mode == BetaEstimatorMode::surrogate) {
        Rng rng(rng_seed);
        const double sigma = 1.0 / (raw.carrier * spec.duration);
        return raw.true_pair_beta + sigma * rng.normal();
    }

    // Weighted phase-ramp fit (pulse-pair) restricted to the energetic part of
    // the strongest echo. Assumes one dominant scatterer in the window.
    double max_pow = 0.0;
    for (const auto& v : raw.samples) max_pow = std::max(max_pow, std::norm(v));
    if (max_pow == 0.0) throw NumericalError("estimate_beta_pair: empty signal");

    // crude noise floor from the median power; robust while echoes are sparse
    std::vector<double> pows(raw.samples.size());
    for (std::size_t i = 0; i < raw.samples.size(); ++i) pows[i] = std::norm(raw.samples[i]);
    std::vector<double> sorted = pows;
    std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
    const double noise_est = sorted[sorted.size() / 2] / std::log(2.0);
    constexpr double kSnrFloor = 10.0;
    if (noise_est > 0.0 && max_pow / noise_est < kSnrFloor)
        throw NumericalError("estimate_beta_pair: no echo clears the SNR floor");

    const double threshold = 0.0625 * max_pow;  // amplitude >= max/4
    cdouble acc(0.0, 0.0);
    for (std::size_t i = 0; i + 1 < raw.samples.size(); ++i) {
        if (pows[i] < threshold || pows[i + 1] < threshold) continue;
        acc += raw.samples[i + 1] * std::conj(raw.samples[i]);
    }
    if (acc == cdouble(0.0, 0.0))
        throw NumericalError("estimate_beta_pair: echo support too short for a ramp fit");
    const double omega = std::arg(acc) / raw.dt;  // rad/s
    return omega / (2.0 * kPi * raw.carrier);
}

RangeProfile range_compress(const RawSignal& raw, double beta_hat, const WaveformSpec& spec) {
    // residual demodulation by exp(-j 2 pi f_n beta_hat t)
    std::vector<cdouble> demod(raw.samples.size());
    for (std::size_t i = 0; i < raw.samples.size(); ++i) {
        const double t = raw.t0 + double(i) * raw.dt;
        const double phase = -2.0 * kPi * raw.carrier * beta_hat * t;
        demod[i] = raw.samples[i] * cdouble(std::cos(phase), std::sin(phase));
    }

    // matched filter kernel: conj(g(-t)) * dt, centered so output keeps the time axis
    const double dt = raw.dt;
    auto half = static_cast<long>(std::ceil(spec.duration / 2 / dt));
    std::vector<cdouble> kernel(2 * half + 1);
    for (long j = -half; j <= half; ++j)
        kernel[static_cast<std::size_t>(j + half)] = std::conj(pulse_value(spec, -double(j) * dt)) * dt;

    const auto conv = fft_convolve(demod, kernel);
    RangeProfile out;
    out.pair = raw.pair;
    out.dt = dt;
    out.t0 = raw.t0 - double(half) * dt;
    out.carrier = raw.carrier;
    out.beta_hat_applied = beta_hat;
    out.samples = conv;
    return out;
}

namespace {

int uf_find(std::vector<int>& parent, int i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

}  // namespace

std::vector<double> solve_absolute_beta(const std::vector<std::vector<double>>& pairwise) {
    const auto n = pairwise.size();
    if (n == 0) throw ConfigError("solve_absolute_beta: empty input");
    for (const auto& row : pairwise)
        if (row.size() != n) throw ConfigError("solve_absolute_beta: matrix must be square");

    struct Edge {
        std::size_t a, b;
        double value;  // beta_a - beta_b
    };
    std::vector<Edge> edges;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            if (a == b) continue;
            if (std::isnan(pairwise[a][b])) continue;
            edges.push_back({a, b, pairwise[a][b]});
        }

    std::vector<int> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = int(i);
    for (const auto& e : edges) {
        const int ra = uf_find(parent, int(e.a));
        const int rb = uf_find(parent, int(e.b));
        if (ra != rb) parent[ra] = rb;
    }
    const int root = uf_find(parent, 0);
    for (std::size_t i = 1; i < n; ++i)
        if (uf_find(parent, int(i)) != root)
            throw NumericalError("solve_absolute_beta: available pairs do not connect all sensors");

    if (n == 1) return {0.0};

    // Normal equations of the anchored incidence system (unknowns beta_2..beta_N,
    // gauge beta_1 = 0). Small and well conditioned once connectivity holds.
    const std::size_t m = n - 1;
    std::vector<std::vector<double>> ata(m, std::vector<double>(m, 0.0));
    std::vector<double> atb(m, 0.0);
    auto idx = [](std::size_t sensor) { return sensor - 1; };  // sensor>=1
    for (const auto& e : edges) {
        // row: x_a - x_b = value, with x_0 fixed to 0
        double coeff_a = e.a >= 1 ? 1.0 : 0.0;
        double coeff_b = e.b >= 1 ? -1.0 : 0.0;
        if (e.a >= 1) {
            ata[idx(e.a)][idx(e.a)] += coeff_a * coeff_a;
            atb[idx(e.a)] += coeff_a * e.value;
        }
        if (e.b >= 1) {
            ata[idx(e.b)][idx(e.b)] += coeff_b * coeff_b;
            atb[idx(e.b)] += coeff_b * e.value;
        }
        if (e.a >= 1 && e.b >= 1) {
            ata[idx(e.a)][idx(e.b)] += coeff_a * coeff_b;
            ata[idx(e.b)][idx(e.a)] += coeff_a * coeff_b;
        }
    }

    // Gaussian elimination with partial pivoting.
    std::vector<std::vector<double>> a = ata;
    std::vector<double> b = atb;
    for (std::size_t col = 0; col < m; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < m; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-300)
            throw NumericalError("solve_absolute_beta: singular system");
        std::swap(a[piv], a[col]);
        std::swap(b[piv], b[col]);
        for (std::size_t r = col + 1; r < m; ++r) {
            const double f = a[r][col] / a[col][col];
            for (std::size_t c = col; c < m; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(m, 0.0);
    for (std::size_t r = m; r-- > 0;) {
        double s = b[r];
        for (std::size_t c = r + 1; c < m; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }

    std::vector<double> beta(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) beta[i] = x[i - 1];
    return beta;
}

}  // namespace netsar
