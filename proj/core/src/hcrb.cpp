#include "netsar/hcrb.hpp"

#include <algorithm>
#include <cmath>

#include "netsar/errors.hpp"
#include "netsar/log.hpp"
#include "netsar/parallel.hpp"
#include "netsar/random.hpp"

namespace netsar::hcrb {

namespace {

struct PairList {
    std::vector<std::pair<int, int>> pairs;  // all (n, m) except (ref, ref)
};

PairList make_pairs(const Problem& p) {
    PairList out;
    const int N = p.n_sensors();
    const int r = p.ref();
    for (int n = 0; n < N; ++n)
        for (int m = 0; m < N; ++m) {
            if (n == r && m == r) continue;
            out.pairs.push_back({n, m});
        }
    return out;
}

void check_problem(const Problem& p) {
    const int N = p.n_sensors();
    const int P = p.n_targets();
    if (N < 2) throw ConfigError("hcrb: need at least two sensors");
    if (P < 1) throw ConfigError("hcrb: need at least one calibration target");
    if (int(p.carriers.size()) != N || int(p.betas.size()) != N)
        throw ConfigError("hcrb: carriers/betas size mismatch");
    if (p.p_prime < 0 || p.p_prime > P) throw ConfigError("hcrb: p_prime out of range");
    if (p.ref() < 0 || p.ref() >= N) throw ConfigError("hcrb: reference sensor out of range");
}

}  // namespace

std::vector<ParamRef> deterministic_params(const Problem& p) {
    check_problem(p);
    const int N = p.n_sensors();
    const int P = p.n_targets();
    const int r = p.ref();
    std::vector<ParamRef> out;
    for (int n = 0; n < N; ++n) {
        if (n == r) continue;
        out.push_back({ParamRef::Kind::sensor_x, n});
        out.push_back({ParamRef::Kind::sensor_y, n});
    }
    for (int n = 0; n < N; ++n) {
        if (n == r) continue;
        out.push_back({ParamRef::Kind::alpha, n});
    }
    for (int q = p.p_prime; q < P; ++q) {
        out.push_back({ParamRef::Kind::target_x, q});
        if (q != P - 1) out.push_back({ParamRef::Kind::target_y, q});
    }
    return out;
}

std::vector<ParamRef> random_params(const Problem& p) {
    check_problem(p);
    const int P = p.n_targets();
    std::vector<ParamRef> out;
    for (int q = 0; q < p.p_prime; ++q) {
        out.push_back({ParamRef::Kind::target_x, q});
        // the gauge-fixed y of the last target never becomes a random parameter
        if (!(p.p_prime == P && q == P - 1)) out.push_back({ParamRef::Kind::target_y, q});
    }
    return out;
}

Eigen::VectorXd stack_delta_phi(const Problem& p, const std::vector<Vec2>& sensors,
                                const std::vector<double>& alphas,
                                const std::vector<Vec2>& targets) {
    check_problem(p);
    const int P = p.n_targets();
    const int r = p.ref();
    const PairList pl = make_pairs(p);

    auto tau = [&](int n, int m, int q) {
        return (distance(targets[q], sensors[n]) + distance(sensors[m], targets[q])) / kWaveSpeed;
    };
    auto coef = [&](int n) { return 2.0 * kPi * p.carriers[n] * (1.0 + p.betas[n]); };

    Eigen::VectorXd out(p.rows());
    int row = 0;
    for (const auto& [n, m] : pl.pairs) {
        const double a_nm = n == m ? 0.0 : alphas[n] - alphas[m];
        for (int q = 0; q < P; ++q) {
            const double d_nm = -coef(n) * tau(n, m, q) + a_nm;
            const double d_ref = -coef(r) * tau(r, r, q);
            out(row++) = d_nm - d_ref;
        }
    }
    return out;
}

namespace {

// derivative of the stacked model w.r.t. one scalar parameter, one row
double row_derivative(const Problem& p, int n, int m, int q, const ParamRef& ref) {
    const int r = p.ref();
    auto coef = [&](int k) { return 2.0 * kPi * p.carriers[k] * (1.0 + p.betas[k]); };
    auto unit_from_sensor = [&](int k, int tgt) { return unit_towards(p.sensors[k], p.targets[tgt]); };
    const double c = kWaveSpeed;

    switch (ref.kind) {
        case ParamRef::Kind::sensor_x:
        case ParamRef::Kind::sensor_y: {
            const int k = ref.index;
            // d tau / d s_k = -u(s_k -> x_q)/c per appearance of sensor k in the pair
            double scale = 0.0;
            if (n == k) scale += coef(n) / c;  // -C * (-u) = +C u / c
            if (m == k) scale += coef(n) / c;
            double val = 0.0;
            if (scale != 0.0) {
                const Vec2 u = unit_from_sensor(k, q);
                val += scale * (ref.kind == ParamRef::Kind::sensor_x ? u.x : u.y);
            }
            if (k == r) {  // reference row subtraction, tau_rr depends on s_r
                const Vec2 u = unit_from_sensor(r, q);
                const double s = -2.0 * coef(r) / c;  // -(-C_r * -2u/c)
                val += s * (ref.kind == ParamRef::Kind::sensor_x ? u.x : u.y);
            }
            return val;
        }
        case ParamRef::Kind::alpha: {
            if (n == m) return 0.0;
            double val = 0.0;
            if (n == ref.index) val += 1.0;
            if (m == ref.index) val -= 1.0;
            return val;
        }
        case ParamRef::Kind::target_x:
        case ParamRef::Kind::target_y: {
            if (q != ref.index) return 0.0;
            // d tau_nm / d x_q = (u_n + u_m)/c, d tau_rr / d x_q = 2 u_r / c
            const Vec2 un = unit_from_sensor(n, q);
            const Vec2 um = unit_from_sensor(m, q);
            const Vec2 ur = unit_from_sensor(r, q);
            const Vec2 v = (un + um) * (-coef(n) / c) + ur * (2.0 * coef(r) / c);
            return ref.kind == ParamRef::Kind::target_x ? v.x : v.y;
        }
    }
    return 0.0;
}

Eigen::MatrixXd build_jacobian(const Problem& p, const std::vector<ParamRef>& params) {
    const PairList pl = make_pairs(p);
    const int P = p.n_targets();
    Eigen::MatrixXd g(p.rows(), int(params.size()));
    int row = 0;
    for (const auto& [n, m] : pl.pairs) {
        for (int q = 0; q < P; ++q) {
            for (int j = 0; j < int(params.size()); ++j)
                g(row, j) = row_derivative(p, n, m, q, params[j]);
            ++row;
        }
    }
    return g;
}

}  // namespace

Jacobians phase_jacobians(const Problem& p) {
    check_problem(p);
    Jacobians out;
    out.g_d = build_jacobian(p, deterministic_params(p));
    out.g_r = build_jacobian(p, random_params(p));
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(out.g_d);
    const auto& sv = svd.singularValues();
    out.condition_number = sv.size() ? sv(0) / std::max(sv(sv.size() - 1), 1e-300) : 0.0;
    return out;
}

Deterministic hcrb_deterministic(const Eigen::MatrixXd& g_d, const Eigen::MatrixXd& g_r,
                                 const Eigen::MatrixXd& xi_r, double snr_linear) {
    if (snr_linear <= 0.0) throw ConfigError("hcrb: snr must be > 0");
    const Eigen::Index rows = g_d.rows();
    if (g_r.rows() != rows) throw ConfigError("hcrb: G_d and G_r row mismatch");
    if (xi_r.rows() != g_r.cols() || xi_r.cols() != g_r.cols())
        throw ConfigError("hcrb: Xi_r dimension mismatch");

    const double sigma2 = 1.0 / (2.0 * snr_linear);
    Eigen::MatrixXd inner = Eigen::MatrixXd::Constant(rows, rows, sigma2);
    inner.diagonal().array() += sigma2;
    if (g_r.cols() > 0) inner += g_r * xi_r * g_r.transpose();

    const Eigen::LDLT<Eigen::MatrixXd> ldlt(inner);
    if (ldlt.info() != Eigen::Success)
        throw NumericalError("hcrb: phase covariance not positive definite");
    const Eigen::MatrixXd fisher = g_d.transpose() * ldlt.solve(g_d);

    Deterministic out;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(fisher, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv(0) : 0.0;
    const double cutoff = 1e-12 * smax;
    out.condition_number = smax / std::max(sv(sv.size() - 1), 1e-300);
    Eigen::VectorXd inv_sv(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff) {
            inv_sv(i) = 1.0 / sv(i);
        } else {
            inv_sv(i) = 0.0;
            out.used_pseudo_inverse = true;
        }
    }
    if (out.used_pseudo_inverse)
        log_info("hcrb: singular information matrix, pseudo-inverse used (condition " +
                 std::to_string(out.condition_number) + ")");
    out.c_d = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    // symmetrize against round-off
    out.c_d = 0.5 * (out.c_d + out.c_d.transpose()).eval();
    return out;
}

CalibrationBound calibration_covariance(const Eigen::MatrixXd& c_d, const Problem& p,
                                        const Vec2& point_of_interest) {
    check_problem(p);
    const int N = p.n_sensors();
    const int block = 3 * (N - 1);
    if (c_d.rows() < block || c_d.cols() < block)
        throw ConfigError("hcrb: C_d smaller than the sensor/alpha block");

    // phase-model derivatives at the point of interest: same rows, one "target"
    Problem poi = p;
    poi.targets = {point_of_interest};
    poi.p_prime = 0;
    std::vector<ParamRef> cols;
    for (const auto& pr : deterministic_params(p)) {
        if (pr.kind == ParamRef::Kind::sensor_x || pr.kind == ParamRef::Kind::sensor_y ||
            pr.kind == ParamRef::Kind::alpha)
            cols.push_back(pr);
    }
    if (int(cols.size()) != block) throw NumericalError("hcrb: unexpected sensor/alpha block size");
    const Eigen::MatrixXd g_cal = build_jacobian(poi, cols);  // (N^2-1) x 3(N-1)

    CalibrationBound out;
    out.c_cal = g_cal * c_d.topLeftCorner(block, block) * g_cal.transpose();
    out.sigma_cal = std::sqrt(std::max(0.0, out.c_cal.trace() / double(N * N - 1)));
    return out;
}

double EcdfResult::fraction_below(double threshold_deg) const {
    std::size_t count = 0;
    for (double v : sigma_cal_deg)
        if (v <= threshold_deg) ++count;
    return sigma_cal_deg.empty() ? 0.0 : double(count) / double(sigma_cal_deg.size());
}

EcdfResult ecdf_monte_carlo(const Config& config, std::uint64_t rng_seed, int threads) {
    if (config.trials < 1) throw ConfigError("hcrb: trials must be >= 1");
    ScenarioParams geom = config.geometry;
    geom.n_sensors = config.n_sensors;
    geom.n_targets = config.p_targets;

    const double cap = config.prior_basin_cap > 0.0
                           ? config.prior_basin_cap
                           : kWaveSpeed / geom.carrier_base / 8.0;
    const double prior_eff = std::min(config.prior_std, cap);
    const double snr = std::pow(10.0, config.snr_db / 10.0);
    std::vector<double> sigmas(config.trials, 0.0);
    std::vector<int> retries(config.trials, 0);

    parallel_for(std::size_t(config.trials), threads, [&](std::size_t t) {
        for (int attempt = 0;; ++attempt) {
            try {
                const Scene scene =
                    random_scenario(derive_seed(rng_seed, t, std::uint64_t(attempt)), geom);
                Problem prob;
                prob.p_prime = config.p_prime;
                for (const auto& s : scene.sensors) {
                    prob.sensors.push_back(s.phase_center);
                    prob.carriers.push_back(s.carrier);
                    prob.betas.push_back(0.0);
                }
                for (const auto& tgt : scene.targets) prob.targets.push_back(tgt.position);

                const Jacobians jac = phase_jacobians(prob);
                Eigen::MatrixXd xi = Eigen::MatrixXd::Identity(jac.g_r.cols(), jac.g_r.cols()) *
                                     (prior_eff * prior_eff);
                const Deterministic det = hcrb_deterministic(jac.g_d, jac.g_r, xi, snr);
                if (det.used_pseudo_inverse) throw NumericalError("singular trial");
                const CalibrationBound cal =
                    calibration_covariance(det.c_d, prob, config.point_of_interest);
                sigmas[t] = cal.sigma_cal * 180.0 / kPi;
                retries[t] = attempt;
                break;
            } catch (const NumericalError&) {
                if (attempt >= 8) throw;
            } catch (const FeasibilityError&) {
                if (attempt >= 8) throw;
            }
        }
    });

    EcdfResult out;
    out.sigma_cal_deg = sigmas;
    std::sort(out.sigma_cal_deg.begin(), out.sigma_cal_deg.end());
    out.cdf.resize(out.sigma_cal_deg.size());
    for (std::size_t i = 0; i < out.cdf.size(); ++i)
        out.cdf[i] = double(i + 1) / double(out.cdf.size());
    for (int r : retries) out.retries += r;
    auto quantile = [&](double q) {
        const std::size_t i = std::min(out.sigma_cal_deg.size() - 1,
                                       std::size_t(q * double(out.sigma_cal_deg.size())));
        return out.sigma_cal_deg[i];
    };
    out.p10 = quantile(0.10);
    out.p50 = quantile(0.50);
    out.p90 = quantile(0.90);
    return out;
}

}  // namespace netsar::hcrb
