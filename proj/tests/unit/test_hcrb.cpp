#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <netsar/errors.hpp>
#include <netsar/hcrb.hpp>
#include <netsar/random.hpp>

#include <cmath>

using namespace netsar;
using namespace netsar::hcrb;

namespace {

Problem random_problem(std::uint64_t seed, int n_sensors, int p_targets, int p_prime) {
    ScenarioParams params;
    params.n_sensors = n_sensors;
    params.n_targets = p_targets;
    const Scene scene = random_scenario(seed, params);
    Problem prob;
    prob.p_prime = p_prime;
    for (const auto& s : scene.sensors) {
        prob.sensors.push_back(s.phase_center);
        prob.carriers.push_back(s.carrier);
        prob.betas.push_back(0.0);
    }
    for (const auto& t : scene.targets) prob.targets.push_back(t.position);
    return prob;
}

// central finite differences of the stacked phase model w.r.t. one parameter
Eigen::VectorXd fd_column(const Problem& prob, const ParamRef& ref, double h) {
    auto eval = [&](double delta) {
        std::vector<Vec2> sensors = prob.sensors;
        std::vector<Vec2> targets = prob.targets;
        std::vector<double> alphas(prob.sensors.size(), 0.0);
        switch (ref.kind) {
            case ParamRef::Kind::sensor_x: sensors[ref.index].x += delta; break;
            case ParamRef::Kind::sensor_y: sensors[ref.index].y += delta; break;
            case ParamRef::Kind::alpha: alphas[ref.index] += delta; break;
            case ParamRef::Kind::target_x: targets[ref.index].x += delta; break;
            case ParamRef::Kind::target_y: targets[ref.index].y += delta; break;
        }
        return stack_delta_phi(prob, sensors, alphas, targets);
    };
    return (eval(h) - eval(-h)) / (2 * h);
}

double max_rel_error(const Eigen::MatrixXd& analytic, const Problem& prob,
                     const std::vector<ParamRef>& params, double h) {
    double worst = 0.0;
    const double scale = analytic.cwiseAbs().maxCoeff();
    for (std::size_t j = 0; j < params.size(); ++j) {
        const Eigen::VectorXd fd = fd_column(prob, params[j], h);
        const double err = (analytic.col(Eigen::Index(j)) - fd).cwiseAbs().maxCoeff();
        worst = std::max(worst, err / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("jacobian shapes for N=5, P=10, P'=1") {
    const Problem prob = random_problem(3, 5, 10, 1);
    const Jacobians jac = phase_jacobians(prob);
    CHECK(jac.g_d.rows() == 240);
    CHECK(jac.g_d.cols() == 29);  // 3(N-1) + 2(P-P') - 1
    CHECK(jac.g_r.rows() == 240);
    CHECK(jac.g_r.cols() == 2);
}

TEST_CASE("parameter bookkeeping at the P' = P edge keeps the total count") {
    // gauge-fixed y of the last target leaves the random set: M_r = 2P - 1
    const Problem prob = random_problem(4, 3, 5, 5);
    const Jacobians jac = phase_jacobians(prob);
    CHECK(jac.g_d.cols() == 6);   // 3(N-1)
    CHECK(jac.g_r.cols() == 9);   // 2P - 1
    CHECK(jac.g_d.cols() + jac.g_r.cols() == 3 * (3 - 1) + 2 * 5 - 1);
}

TEST_CASE("analytic jacobians match central finite differences") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Problem prob = random_problem(seed, 4, 6, 2);
        const Jacobians jac = phase_jacobians(prob);
        CHECK(max_rel_error(jac.g_d, prob, deterministic_params(prob), 1e-5) < 1e-6);
        CHECK(max_rel_error(jac.g_r, prob, random_params(prob), 1e-5) < 1e-6);
    }
}

TEST_CASE("degenerate geometry is visible in the condition number") {
    Problem good = random_problem(11, 3, 4, 0);
    const double cond_good = phase_jacobians(good).condition_number;

    Problem bad;
    bad.p_prime = 0;
    bad.sensors = {{-10.0, 0.0}, {10.0, 0.0}, {30.0, 0.0}};
    bad.carriers = {76.5e9, 76.6e9, 76.7e9};
    bad.betas = {0, 0, 0};
    // all targets collinear with the sensor baseline
    bad.targets = {{0.0, 0.0}, {5.0, 0.0}, {15.0, 0.0}, {20.0, 0.0}};
    const double cond_bad = phase_jacobians(bad).condition_number;
    CHECK(cond_bad > 100 * cond_good);
    CHECK(cond_bad > 1e8);
}

TEST_CASE("hcrb_deterministic implements the closed form") {
    SUBCASE("identity jacobian returns the phase covariance itself") {
        // C_d = (I (C_phi)^-1 I)^-1 = sigma^2 (I + 1 1^T); SNR 20 dB -> sigma^2 = 0.005
        const int m = 6;
        const Eigen::MatrixXd g_d = Eigen::MatrixXd::Identity(m, m);
        const Eigen::MatrixXd g_r(m, 0);
        const Eigen::MatrixXd xi(0, 0);
        const Deterministic det = hcrb_deterministic(g_d, g_r, xi, 100.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                CHECK(det.c_d(i, j) == doctest::Approx(i == j ? 0.010 : 0.005).epsilon(1e-9));
    }
    SUBCASE("doubling the SNR halves C_d without priors") {
        const Problem prob = random_problem(5, 4, 5, 0);
        const Jacobians jac = phase_jacobians(prob);
        const Eigen::MatrixXd xi(0, 0);
        const auto c1 = hcrb_deterministic(jac.g_d, jac.g_r, xi, 100.0);
        const auto c2 = hcrb_deterministic(jac.g_d, jac.g_r, xi, 200.0);
        CHECK((c1.c_d - 2.0 * c2.c_d).cwiseAbs().maxCoeff() < 1e-9 * c1.c_d.cwiseAbs().maxCoeff());
    }
    SUBCASE("perfect priors never hurt") {
        const Problem prob = random_problem(6, 4, 5, 2);
        const Jacobians jac = phase_jacobians(prob);
        const Eigen::Index mr = jac.g_r.cols();
        const auto tight = hcrb_deterministic(jac.g_d, jac.g_r,
                                              Eigen::MatrixXd::Identity(mr, mr) * 1e-12, 100.0);
        const auto loose = hcrb_deterministic(jac.g_d, jac.g_r,
                                              Eigen::MatrixXd::Identity(mr, mr) * 10.0, 100.0);
        for (Eigen::Index i = 0; i < tight.c_d.rows(); ++i)
            CHECK(tight.c_d(i, i) <= loose.c_d(i, i) * (1 + 1e-9));
    }
    SUBCASE("C_d is symmetric positive semidefinite") {
        for (std::uint64_t seed = 30; seed < 40; ++seed) {
            const Problem prob = random_problem(seed, 4, 6, 2);
            const Jacobians jac = phase_jacobians(prob);
            const Eigen::Index mr = jac.g_r.cols();
            const auto det = hcrb_deterministic(jac.g_d, jac.g_r,
                                                Eigen::MatrixXd::Identity(mr, mr) * 0.04, 100.0);
            CHECK((det.c_d - det.c_d.transpose()).cwiseAbs().maxCoeff() <
                  1e-8 * det.c_d.cwiseAbs().maxCoeff());
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(det.c_d);
            CHECK(es.eigenvalues().minCoeff() >= -1e-8 * det.c_d.trace());
        }
    }
}

TEST_CASE("calibration covariance") {
    SUBCASE("zero C_d gives zero accuracy bound") {
        const Problem prob = random_problem(7, 3, 4, 0);
        const int block = 3 * (prob.n_sensors() - 1);
        const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(block + 3, block + 3);
        const CalibrationBound cal = calibration_covariance(zero, prob, {0.0, 0.0});
        CHECK(cal.sigma_cal == doctest::Approx(0.0));
    }
    SUBCASE("two sensors give a 3 x 3 calibration covariance") {
        const Problem prob = random_problem(8, 2, 4, 0);
        const Jacobians jac = phase_jacobians(prob);
        const Eigen::MatrixXd xi(0, 0);
        const auto det = hcrb_deterministic(jac.g_d, jac.g_r, xi, 100.0);
        const CalibrationBound cal = calibration_covariance(det.c_d, prob, {0.0, 0.0});
        CHECK(cal.c_cal.rows() == 3);
        CHECK(cal.c_cal.cols() == 3);
    }
    SUBCASE("sigma_cal scales as 1/sqrt(SNR) without priors") {
        const Problem prob = random_problem(9, 4, 6, 0);
        const Jacobians jac = phase_jacobians(prob);
        const Eigen::MatrixXd xi(0, 0);
        const auto lo = hcrb_deterministic(jac.g_d, jac.g_r, xi, 100.0);
        const auto hi = hcrb_deterministic(jac.g_d, jac.g_r, xi, 1000.0);
        const double s_lo = calibration_covariance(lo.c_d, prob, {0.0, 0.0}).sigma_cal;
        const double s_hi = calibration_covariance(hi.c_d, prob, {0.0, 0.0}).sigma_cal;
        CHECK(s_lo / s_hi == doctest::Approx(std::sqrt(10.0)).epsilon(0.01));
    }
    SUBCASE("C_cal is positive semidefinite") {
        const Problem prob = random_problem(10, 4, 5, 1);
        const Jacobians jac = phase_jacobians(prob);
        const Eigen::Index mr = jac.g_r.cols();
        const auto det = hcrb_deterministic(jac.g_d, jac.g_r,
                                            Eigen::MatrixXd::Identity(mr, mr) * 0.04, 100.0);
        const CalibrationBound cal = calibration_covariance(det.c_d, prob, {0.0, 0.0});
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cal.c_cal);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * cal.c_cal.trace());
    }
}

TEST_CASE("an extra well-placed target never hurts in the deterministic limit") {
    for (std::uint64_t seed = 50; seed < 56; ++seed) {
        Problem small = random_problem(seed, 4, 5, 0);
        Problem big = small;
        big.targets.push_back({small.targets[0].x + 7.0, small.targets[0].y + 4.0});
        const Eigen::MatrixXd xi(0, 0);
        const auto cs = hcrb_deterministic(phase_jacobians(small).g_d,
                                           phase_jacobians(small).g_r, xi, 100.0);
        const auto cb = hcrb_deterministic(phase_jacobians(big).g_d, phase_jacobians(big).g_r,
                                           xi, 100.0);
        const double ss = calibration_covariance(cs.c_d, small, {0.0, 0.0}).sigma_cal;
        const double sb = calibration_covariance(cb.c_d, big, {0.0, 0.0}).sigma_cal;
        CHECK(sb <= ss * (1 + 1e-9));
    }
}

TEST_CASE("ecdf study is deterministic and sane") {
    Config cfg;
    cfg.n_sensors = 3;
    cfg.p_targets = 5;
    cfg.p_prime = 5;
    cfg.snr_db = 20.0;
    cfg.trials = 60;
    cfg.point_of_interest = {0.0, 0.0};
    const EcdfResult a = ecdf_monte_carlo(cfg, 42, 2);
    const EcdfResult b = ecdf_monte_carlo(cfg, 42, 1);
    REQUIRE(a.sigma_cal_deg.size() == 60);
    CHECK(a.cdf.back() == doctest::Approx(1.0));
    for (std::size_t i = 0; i < a.sigma_cal_deg.size(); ++i) {
        CHECK(a.sigma_cal_deg[i] == b.sigma_cal_deg[i]);  // thread count must not matter
        CHECK(a.sigma_cal_deg[i] > 0.0);
        if (i > 0) CHECK(a.sigma_cal_deg[i] >= a.sigma_cal_deg[i - 1]);
    }
    CHECK(a.p10 <= a.p50);
    CHECK(a.p50 <= a.p90);
}
