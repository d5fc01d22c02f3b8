#include "netsar/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "netsar/errors.hpp"
#include "netsar/log.hpp"
#include "netsar/parallel.hpp"
#include "netsar/random.hpp"

namespace netsar::detection {

void Config::validate() const {
    if (acquisitions < 1) throw ConfigError("detection: U must be >= 1");
    if (df <= 0.0 || df > bandwidth) throw ConfigError("detection: need 0 < df <= B");
    if (pfa <= 0.0 || pfa >= 1.0) throw ConfigError("detection: PFA must lie in (0, 1)");
    if (amp_ratio <= 0.0 || amp_ratio > 1.0)
        throw ConfigError("detection: amplitude ratio must lie in (0, 1]");
    if (allocation == Allocation::random_in_btot && acquisitions * bandwidth > b_tot)
        throw FeasibilityError("detection: U * B exceeds B_tot for random allocation");
    const int m = acquisitions * int(std::ceil(bandwidth / df));
    if (2 * m <= 100)
        throw ConfigError("detection: Gaussian approximation needs 2 |K| > 100 samples");
}

SpectrumPlan allocate_spectrum(const Config& config, std::uint64_t rng_seed) {
    config.validate();
    const int u_count = config.acquisitions;
    SpectrumPlan plan;
    plan.band_width = config.bandwidth;
    plan.samples_per_band = int(std::ceil(config.bandwidth / config.df));

    if (config.allocation == Allocation::contiguous) {
        // f_u = (u - 1) B - U B / 2, u = 1..U: adjacent bands tiling U * B
        for (int u = 1; u <= u_count; ++u)
            plan.band_starts.push_back((u - 1) * config.bandwidth -
                                       u_count * config.bandwidth / 2);
    } else {
        // non-overlapping uniform placement over [-B_tot/2, B_tot/2]
        Rng rng(derive_seed(rng_seed, 0xa110cULL));
        const double slack = config.b_tot - u_count * config.bandwidth;
        std::vector<double> offsets(u_count);
        for (auto& o : offsets) o = rng.uniform(0.0, slack);
        std::sort(offsets.begin(), offsets.end());
        for (int u = 0; u < u_count; ++u)
            plan.band_starts.push_back(-config.b_tot / 2 + offsets[u] + u * config.bandwidth);
    }

    for (double f0 : plan.band_starts)
        for (int i = 0; i < plan.samples_per_band; ++i)
            plan.k.push_back(4.0 * kPi * (f0 + i * config.df) / kWaveSpeed);

    plan.rho_single = kWaveSpeed / (2.0 * config.bandwidth);
    const double f_lo = *std::min_element(plan.band_starts.begin(), plan.band_starts.end());
    const double f_hi = *std::max_element(plan.band_starts.begin(), plan.band_starts.end()) +
                        config.bandwidth;
    plan.rho_fused = kWaveSpeed / (2.0 * (f_hi - f_lo));
    return plan;
}

std::vector<cdouble> steering(const std::vector<double>& k, double x) {
    std::vector<cdouble> d(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) d[i] = cdouble(std::cos(k[i] * x), -std::sin(k[i] * x));
    return d;
}

std::vector<double> acquisition_phase_errors(const SpectrumPlan& plan, double sigma_rad,
                                             std::uint64_t rng_seed) {
    std::vector<double> phases(plan.size(), 0.0);
    if (sigma_rad <= 0.0) return phases;
    Rng rng(rng_seed);
    std::size_t i = 0;
    for (std::size_t u = 0; u < plan.band_starts.size(); ++u) {
        const double phi = sigma_rad * rng.normal();
        for (int s = 0; s < plan.samples_per_band && i < phases.size(); ++s) phases[i++] = phi;
    }
    return phases;
}

std::vector<cdouble> apply_phase_errors(const std::vector<cdouble>& d,
                                        const std::vector<double>& sample_phases) {
    std::vector<cdouble> out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        out[i] = d[i] * cdouble(std::cos(sample_phases[i]), std::sin(sample_phases[i]));
    return out;
}

Observation simulate_observation(const SpectrumPlan& plan, const Config& config, bool h1,
                                 double dx_norm, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    const double noise_s = std::sqrt(config.noise_sigma2 / 2.0);
    Observation obs;
    obs.h1 = h1;
    obs.x1 = 0.0;
    obs.x2 = obs.x1 + dx_norm * plan.rho_single;

    const double a1 = std::pow(10.0, config.snr1_db / 20.0);  // sigma_z = 1
    const double th1 = rng.uniform(-kPi, kPi);
    const double th2 = rng.uniform(-kPi, kPi);
    obs.eta1 = a1 * cdouble(std::cos(th1), std::sin(th1));
    obs.eta2 = config.amp_ratio * a1 * cdouble(std::cos(th2), std::sin(th2));

    auto d1 = steering(plan.k, obs.x1);
    auto d2 = steering(plan.k, obs.x2);
    if (config.phase_err_std_deg > 0.0) {
        const auto phases = acquisition_phase_errors(
            plan, config.phase_err_std_deg * kPi / 180.0, derive_seed(rng_seed, 0x9eULL));
        d1 = apply_phase_errors(d1, phases);
        d2 = apply_phase_errors(d2, phases);
    }

    obs.y.resize(plan.size());
    for (std::size_t i = 0; i < plan.size(); ++i) {
        cdouble v = obs.eta1 * d1[i];
        if (h1) v += obs.eta2 * d2[i];
        if (noise_s > 0.0) v += cdouble(noise_s * rng.normal(), noise_s * rng.normal());
        obs.y[i] = v;
    }
    return obs;
}

DetectorWorkspace make_workspace(const SpectrumPlan& plan, const Config& config) {
    DetectorWorkspace ws;
    const double half = config.search_halfwidth_rho * plan.rho_single;
    const double step = config.search_step_rho * plan.rho_single;
    for (double x = -half; x <= half + step / 2; x += step) ws.grid_x.push_back(x);
    ws.grid_steering.reserve(ws.grid_x.size());
    for (double x : ws.grid_x) ws.grid_steering.push_back(steering(plan.k, x));
    return ws;
}

namespace {

cdouble projection(const std::vector<cdouble>& d, const std::vector<cdouble>& y) {
    cdouble acc(0, 0);
    for (std::size_t i = 0; i < d.size(); ++i) acc += std::conj(d[i]) * y[i];
    return acc;
}

double log_gaussian(double v, double mean, double var) {
    return -0.5 * std::log(var) - (v - mean) * (v - mean) / (2.0 * var);
}

// Gaussian log-ratio for the residual energy v given the projected weak-target
// signal energy under H1. Moments of the quadratic form:
// mean = ||s||^2 + sigma^2 M, variance = 2 sigma^2 ||s||^2 + sigma^4 M.
double residual_log_ratio(double v, double s2_perp, double m_eff, double sigma2) {
    const double floor2 = std::max(sigma2, 1e-30);
    const double mu0 = floor2 * m_eff;
    const double var0 = floor2 * floor2 * m_eff;
    const double mu1 = s2_perp + floor2 * m_eff;
    const double var1 = 2.0 * floor2 * s2_perp + floor2 * floor2 * m_eff;
    return log_gaussian(v, mu1, var1) - log_gaussian(v, mu0, var0);
}

struct GridPeak {
    int index = 0;
    double x = 0.0;
    cdouble amplitude;
};

GridPeak matched_filter_peak(const DetectorWorkspace& ws, const std::vector<cdouble>& y) {
    GridPeak best;
    double best_mag = -1.0;
    std::vector<double> mags(ws.grid_x.size());
    for (std::size_t i = 0; i < ws.grid_x.size(); ++i) {
        const cdouble p = projection(ws.grid_steering[i], y);
        mags[i] = std::abs(p);
        if (mags[i] > best_mag) {
            best_mag = mags[i];
            best.index = int(i);
        }
    }
    best.x = ws.grid_x[best.index];
    // parabolic sub-grid refinement
    if (best.index > 0 && best.index + 1 < int(mags.size())) {
        const double ym = mags[best.index - 1], y0 = mags[best.index], yp = mags[best.index + 1];
        const double denom = ym - 2 * y0 + yp;
        if (denom < 0.0) {
            const double off = std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
            best.x += off * (ws.grid_x[1] - ws.grid_x[0]);
        }
    }
    best.amplitude = projection(ws.grid_steering[best.index], y) / double(y.size());
    return best;
}

}  // namespace

GlrtOutcome glrt_statistic(const Observation& obs, const SpectrumPlan& plan, const Config& config,
                           GlrtMode mode, const DetectorWorkspace* workspace) {
    const double m = double(plan.size());
    const double m_eff = m - 1.0;  // one complex dimension removed with the strong target
    GlrtOutcome out;

    if (mode == GlrtMode::known) {
        const auto d1 = steering(plan.k, obs.x1);
        const auto d2 = steering(plan.k, obs.x2);
        const cdouble eta1_hat = projection(d1, obs.y) / m;
        double v = 0.0;
        for (std::size_t i = 0; i < obs.y.size(); ++i) v += std::norm(obs.y[i] - eta1_hat * d1[i]);
        const double cross = std::abs(projection(d1, d2));
        const double s2_perp = std::norm(obs.eta2) * (m - cross * cross / m);
        out.statistic = residual_log_ratio(v, s2_perp, m_eff, config.noise_sigma2);
        out.x1_hat = obs.x1;
        out.x2_hat = obs.x2;
        return out;
    }

    if (!workspace) throw ConfigError("glrt_statistic: unknown mode needs a workspace");
    const auto& ws = *workspace;

    // stage 1: strong target
    const GridPeak p1 = matched_filter_peak(ws, obs.y);
    const auto& d1 = ws.grid_steering[p1.index];
    std::vector<cdouble> resid(obs.y.size());
    for (std::size_t i = 0; i < obs.y.size(); ++i) resid[i] = obs.y[i] - p1.amplitude * d1[i];
    double v = 0.0;
    for (const auto& r : resid) v += std::norm(r);

    // stage 2: weak target on the residual
    const GridPeak p2 = matched_filter_peak(ws, resid);
    const auto& d2 = ws.grid_steering[p2.index];

    // joint least-squares amplitude refit at the estimated positions
    const cdouble g12 = projection(d1, d2);
    const cdouble b1 = projection(d1, obs.y);
    const cdouble b2 = projection(d2, obs.y);
    const double det = m * m - std::norm(g12);
    cdouble eta2_hat = p2.amplitude;
    if (det > 1e-9 * m * m) eta2_hat = (m * b2 - std::conj(g12) * b1) / det;

    const double cross = std::abs(g12);
    const double s2_perp = std::norm(eta2_hat) * (m - cross * cross / m);
    out.statistic = residual_log_ratio(v, s2_perp, m_eff, config.noise_sigma2);
    out.x1_hat = p1.x;
    out.x2_hat = p2.x;
    return out;
}

double cfar_threshold(const SpectrumPlan& plan, const Config& config, GlrtMode mode,
                      std::uint64_t rng_seed, int threads) {
    const int n = config.cfar_trials;
    if (double(n) < 50.0 / config.pfa)
        log_info("cfar_threshold: fewer than 50/PFA calibration trials, quantile may be unstable");
    const DetectorWorkspace ws = mode == GlrtMode::unknown ? make_workspace(plan, config)
                                                           : DetectorWorkspace{};
    std::vector<double> stats(std::size_t(n), 0.0);
    parallel_for(std::size_t(n), threads, [&](std::size_t t) {
        const Observation obs =
            simulate_observation(plan, config, false, 0.0, derive_seed(rng_seed, 0xcfa0ULL, t));
        stats[t] = glrt_statistic(obs, plan, config, mode,
                                  mode == GlrtMode::unknown ? &ws : nullptr).statistic;
    });
    return empirical_quantile(std::move(stats), 1.0 - config.pfa);
}

double empirical_quantile(std::vector<double> values, double q) {
    if (values.empty()) throw ConfigError("empirical_quantile: no samples");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    const auto idx = std::min<std::size_t>(
        n - 1, std::size_t(std::max(1.0, std::ceil(q * double(n)))) - 1);
    return values[idx];
}

std::vector<PcdPoint> pcd_curve(const Config& config, const std::vector<double>& dx_grid,
                                std::uint64_t rng_seed, int threads) {
    const SpectrumPlan plan = allocate_spectrum(config, rng_seed);
    const DetectorWorkspace ws = make_workspace(plan, config);

    std::vector<PcdPoint> out;
    for (GlrtMode mode : {GlrtMode::known, GlrtMode::unknown}) {
        const double threshold =
            cfar_threshold(plan, config, mode, derive_seed(rng_seed, mode == GlrtMode::known),
                           threads);
        for (std::size_t di = 0; di < dx_grid.size(); ++di) {
            const double dx = dx_grid[di];
            std::vector<char> hits(std::size_t(config.trials), 0);
            parallel_for(std::size_t(config.trials), threads, [&](std::size_t t) {
                const Observation obs = simulate_observation(
                    plan, config, true, dx,
                    derive_seed(rng_seed, 0xbcd0ULL + (mode == GlrtMode::known), di, t));
                const GlrtOutcome g = glrt_statistic(obs, plan, config, mode,
                                                     mode == GlrtMode::unknown ? &ws : nullptr);
                bool hit = g.statistic > threshold;
                if (mode == GlrtMode::unknown)
                    hit = hit && std::abs(g.x2_hat - obs.x2) <= plan.rho_fused / 2;
                hits[t] = hit ? 1 : 0;
            });
            double count = 0;
            for (char h : hits) count += h;
            out.push_back({dx, config.acquisitions, mode, count / double(config.trials)});
        }
    }
    return out;
}

std::vector<RocPoint> roc_curve(const Config& config, double dx_norm,
                                const std::vector<double>& pfa_grid, std::uint64_t rng_seed,
                                int threads) {
    const SpectrumPlan plan = allocate_spectrum(config, rng_seed);
    const DetectorWorkspace ws = make_workspace(plan, config);

    const int n0 = config.cfar_trials;
    const int n1 = config.trials;
    std::vector<double> h0_stats(std::size_t(n0), 0.0);
    parallel_for(std::size_t(n0), threads, [&](std::size_t t) {
        const Observation obs =
            simulate_observation(plan, config, false, 0.0, derive_seed(rng_seed, 0x0c0ULL, t));
        h0_stats[t] = glrt_statistic(obs, plan, config, GlrtMode::unknown, &ws).statistic;
    });
    std::sort(h0_stats.begin(), h0_stats.end());

    std::vector<double> h1_stats(std::size_t(n1), 0.0);
    std::vector<char> h1_gate(std::size_t(n1), 0);
    parallel_for(std::size_t(n1), threads, [&](std::size_t t) {
        const Observation obs =
            simulate_observation(plan, config, true, dx_norm, derive_seed(rng_seed, 0x1c1ULL, t));
        const GlrtOutcome g = glrt_statistic(obs, plan, config, GlrtMode::unknown, &ws);
        h1_stats[t] = g.statistic;
        h1_gate[t] = std::abs(g.x2_hat - obs.x2) <= plan.rho_fused / 2 ? 1 : 0;
    });

    std::vector<RocPoint> out;
    for (double pfa : pfa_grid) {
        double threshold;
        if (pfa >= 1.0) {
            threshold = -std::numeric_limits<double>::infinity();
        } else {
            threshold = empirical_quantile(h0_stats, 1.0 - pfa);
        }
        double count = 0;
        for (std::size_t t = 0; t < std::size_t(n1); ++t)
            if (h1_stats[t] > threshold && h1_gate[t]) count += 1;
        out.push_back({pfa, count / double(n1), config.acquisitions});
    }
    return out;
}

}  // namespace netsar::detection
