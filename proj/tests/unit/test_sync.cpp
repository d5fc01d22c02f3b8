#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <netsar/errors.hpp>
#include <netsar/hcrb.hpp>
#include <netsar/pipeline.hpp>
#include <netsar/random.hpp>
#include <netsar/sync.hpp>

#include <algorithm>
#include <cmath>

using namespace netsar;

namespace {

PixelGrid make_grid(Vec2 center, double half_x, double half_y, double dx, double dy) {
    PixelGrid g;
    g.dx = dx;
    g.dy = dy;
    g.x0 = center.x - half_x;
    g.y0 = center.y - half_y;
    g.nx = int(std::ceil(2 * half_x / dx)) + 1;
    g.ny = int(std::ceil(2 * half_y / dy)) + 1;
    return g;
}

// smooth multi-blob intensity pattern for registration tests
ComplexImage blob_image(const PixelGrid& g, const std::vector<Vec2>& blobs, Vec2 shift = {0, 0},
                        double rot = 0.0) {
    const Vec2 center{g.x0 + (g.nx - 1) * g.dx / 2, g.y0 + (g.ny - 1) * g.dy / 2};
    ComplexImage img;
    img.grid = g;
    img.values.resize(g.size());
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            // content transform T(y) = R_rot(y - c) + c + shift applied to the blobs
            const Vec2 p = g.position(ix, iy);
            double v = 0.0;
            for (const auto& b : blobs) {
                const Vec2 moved = rotate(b - center, rot) + center + shift;
                const double d2 = (p - moved).squared_norm();
                v += std::exp(-d2 / (2 * 0.18 * 0.18));
            }
            img.at(ix, iy) = {v, 0.0};
        }
    return img;
}

const std::vector<Vec2> kBlobs{{-2.1, 1.3},  {1.7, -0.6}, {0.4, 2.2},  {-1.2, -1.9},
                               {2.3, 1.8},   {-3.1, -0.4}, {3.2, -2.6}, {-0.6, 3.4}};

// two-sensor scene with aperture, used for the kappa closed loop
Scene kappa_scene(double kappa1) {
    Scene s;
    for (int i = 0; i < 2; ++i) {
        Sensor sen;
        sen.id = i + 1;
        sen.phase_center = {i * 8.0 - 4.0, -30.0};
        sen.carrier = 76.5e9 + i * 100e6;
        sen.bandwidth = 100e6;
        const double spacing = kWaveSpeed / sen.carrier / 2;
        for (int e = 0; e < 6; ++e) sen.element_offsets.push_back({(e - 2.5) * spacing, 0.0});
        s.sensors.push_back(sen);
    }
    s.sensors[0].clock = ClockModel::from_kappa(kappa1, 0.0, s.sensors[0].carrier);
    s.targets.push_back({{0.5, 0.3}, 2.0, 0.4});
    s.targets.push_back({{-3.5, 4.0}, 1.0, -0.8});
    // image SNR 30 dB for the strong target: N0 = L^2 rho^2 E / SNR
    s.noise_psd = 36.0 * 4.0 / 1000.0;
    return s;
}

}  // namespace

TEST_CASE("coregister recovers synthetic transforms") {
    const PixelGrid g = make_grid({0, 0}, 4.0, 4.0, 0.1, 0.1);
    const ComplexImage master = blob_image(g, kBlobs);

    SUBCASE("identity for identical images, within the search quantization") {
        CoregSearch search{-0.02, 0.02, 5, 1.0};
        const CoregResult r = coregister(master, master, search);
        CHECK(std::abs(r.psi) < 0.01);  // psi sample spacing
        CHECK(std::abs(r.delta.x) < g.dx / 5);
        CHECK(std::abs(r.delta.y) < g.dy / 5);
    }
    SUBCASE("pure translation recovered within dx / 5") {
        const ComplexImage slave = blob_image(g, kBlobs, {0.4, -0.2});
        CoregSearch search{0.0, 0.0, 1, 1.0};
        const CoregResult r = coregister(master, slave, search);
        CHECK(r.delta.x == doctest::Approx(0.4).epsilon(0.05));
        CHECK(r.delta.y == doctest::Approx(-0.2).epsilon(0.1));
        CHECK(std::abs(r.delta.x - 0.4) < g.dx / 5);
        CHECK(std::abs(r.delta.y + 0.2) < g.dy / 5);
    }
    SUBCASE("one degree rotation about the grid center within 0.1 degree") {
        // rotation sensing needs denser sampling than translation
        const PixelGrid fine = make_grid({0, 0}, 4.0, 4.0, 0.05, 0.05);
        const ComplexImage master_fine = blob_image(fine, kBlobs);
        const double rot = 1.0 * kPi / 180;
        const ComplexImage slave = blob_image(fine, kBlobs, {0, 0}, rot);
        CoregSearch search{-2.5 * kPi / 180, 2.5 * kPi / 180, 11, 0.6};
        const CoregResult r = coregister(master_fine, slave, search);
        CHECK(std::abs(r.psi - rot) < 0.1 * kPi / 180);
    }
    SUBCASE("boundary optimum is flagged") {
        const ComplexImage slave = blob_image(g, kBlobs, {0.8, 0.0});
        CoregSearch search{0.0, 0.0, 1, 0.5};  // true shift just beyond the lag range
        const CoregResult r = coregister(master, slave, search);
        CHECK(r.on_boundary);
    }
}

TEST_CASE("correct_positions") {
    const std::vector<Vec2> prior{{1.0, 2.0}, {1.1, 2.0}, {0.9, 2.0}};
    SUBCASE("identity") {
        const auto out = correct_positions(prior, {1.0, 2.0}, 0.0, {0, 0});
        for (std::size_t i = 0; i < prior.size(); ++i) CHECK(distance(out[i], prior[i]) < 1e-15);
    }
    SUBCASE("pure translation shifts by minus delta") {
        const auto out = correct_positions(prior, {1.0, 2.0}, 0.0, {0.3, -0.1});
        for (std::size_t i = 0; i < prior.size(); ++i) {
            CHECK(out[i].x == doctest::Approx(prior[i].x - 0.3));
            CHECK(out[i].y == doctest::Approx(prior[i].y + 0.1));
        }
    }
    SUBCASE("rigid: pairwise distances preserved") {
        const auto out = correct_positions(prior, {1.0, 2.0}, 0.3, {0.5, 0.7});
        for (std::size_t i = 0; i < prior.size(); ++i)
            for (std::size_t j = i + 1; j < prior.size(); ++j)
                CHECK(distance(out[i], out[j]) ==
                      doctest::Approx(distance(prior[i], prior[j])).epsilon(1e-12));
    }
}

TEST_CASE("kappa estimation closed loop") {
    const auto spec = WaveformSpec::make(100e6, 3.2e-7);
    const PixelGrid grid = make_grid({-1.0, 1.5}, 7.0, 6.0, 0.3, 0.3);

    auto images_for = [&](double kappa1) {
        const Scene scene = kappa_scene(kappa1);
        const PairKey mono{1, 1}, bist{1, 2};
        PairEstimates em = pipeline::true_estimates(scene, mono);
        em.beta_tx = 0.0;
        PairEstimates eb = pipeline::true_estimates(scene, bist);
        eb.beta_tx = 0.0;
        eb.kappa = 0.0;  // deliberately uncompensated
        const TimeWindow wm = pipeline::window_for_grid(scene, mono, spec, grid, 3e-9);
        const TimeWindow wb = pipeline::window_for_grid(scene, bist, spec, grid, 3e-9);
        return std::pair{pipeline::focus_pair(scene, mono, spec, em, grid, 11, 1, wm),
                         pipeline::focus_pair(scene, bist, spec, eb, grid, 12, 1, wb)};
    };

    SUBCASE("zero offset estimates near zero") {
        const auto [ref, bist] = images_for(0.0);
        const Scene scene = kappa_scene(0.0);
        const double k = estimate_kappa(ref, bist, scene.sensors[0].phase_center,
                                        scene.sensors[1].phase_center, 0.0);
        CHECK(std::abs(k) < 0.2e-9);
    }
    SUBCASE("one nanosecond recovered within 0.2 ns at SNR 30 dB") {
        const auto [ref, bist] = images_for(1e-9);
        const Scene scene = kappa_scene(1e-9);
        const double k = estimate_kappa(ref, bist, scene.sensors[0].phase_center,
                                        scene.sensors[1].phase_center, 0.0);
        CHECK(k == doctest::Approx(1e-9).epsilon(0.2));
        CHECK(std::abs(k - 1e-9) < 0.2e-9);
    }
    SUBCASE("beta factor scales the estimate exactly") {
        const auto [ref, bist] = images_for(1e-9);
        const Scene scene = kappa_scene(1e-9);
        const double k0 = estimate_kappa(ref, bist, scene.sensors[0].phase_center,
                                         scene.sensors[1].phase_center, 0.0);
        const double k1 = estimate_kappa(ref, bist, scene.sensors[0].phase_center,
                                         scene.sensors[1].phase_center, 1e-6);
        CHECK(k1 == doctest::Approx(k0 / (1.0 + 1e-6)).epsilon(1e-12));
    }
}

TEST_CASE("measure_phases") {
    const PixelGrid g = make_grid({0, 0}, 2.0, 2.0, 0.25, 0.25);
    auto const_image = [&](int n, int m, double phase, double mag = 1.0) {
        ComplexImage img;
        img.grid = g;
        img.tx_id = n;
        img.rx_id = m;
        img.values.assign(g.size(), mag * cdouble(std::cos(phase), std::sin(phase)));
        return img;
    };
    const std::vector<Vec2> cal{{0.3, -0.4}, {-1.0, 1.0}};

    SUBCASE("matched phases measure zero") {
        const std::vector<ComplexImage> images{const_image(1, 1, 0.25), const_image(1, 2, 0.25),
                                               const_image(2, 1, 0.25), const_image(2, 2, 0.25)};
        const PhaseMeasurements meas = measure_phases(images, cal, {1, 1});
        REQUIRE(meas.pairs.size() == 3);
        for (const auto& row : meas.values)
            for (double v : row) CHECK(std::abs(v) < 1e-12);
    }
    SUBCASE("a 30 degree pair offset reads +30 degrees on that row") {
        const double a = 30.0 * kPi / 180;
        const std::vector<ComplexImage> images{const_image(1, 1, -0.3), const_image(1, 2, -0.3 + a),
                                               const_image(2, 1, -0.3), const_image(2, 2, -0.3)};
        const PhaseMeasurements meas = measure_phases(images, cal, {1, 1});
        for (std::size_t r = 0; r < meas.pairs.size(); ++r) {
            const double expect = (meas.pairs[r] == PairKey{1, 2}) ? a : 0.0;
            for (double v : meas.values[r]) CHECK(v == doctest::Approx(expect).epsilon(1e-9));
        }
    }
    SUBCASE("370 degrees wraps to 10") {
        const double a = 370.0 * kPi / 180;
        const std::vector<ComplexImage> images{const_image(1, 1, 0.0), const_image(1, 2, a),
                                               const_image(2, 1, 0.0), const_image(2, 2, 0.0)};
        const PhaseMeasurements meas = measure_phases(images, cal, {1, 1});
        for (std::size_t r = 0; r < meas.pairs.size(); ++r) {
            if (!(meas.pairs[r] == PairKey{1, 2})) continue;
            for (double v : meas.values[r])
                CHECK(v == doctest::Approx(10.0 * kPi / 180).epsilon(1e-9));
        }
    }
    SUBCASE("calibration point outside the grid is rejected") {
        const std::vector<ComplexImage> images{const_image(1, 1, 0.0), const_image(1, 2, 0.0),
                                               const_image(2, 1, 0.0), const_image(2, 2, 0.0)};
        CHECK_THROWS_AS(measure_phases(images, {{10.0, 0.0}}, {1, 1}), ConfigError);
    }
}

TEST_CASE("select_calibration_targets") {
    const PixelGrid g = make_grid({0, 0}, 4.0, 4.0, 0.1, 0.1);
    const std::vector<Vec2> truth{{-2.0, 1.0}, {1.5, -0.5}, {0.5, 2.5}};
    const ComplexImage a = blob_image(g, truth);
    const ComplexImage b = blob_image(g, truth);

    SUBCASE("finds the true peaks within a pixel") {
        const auto sel = select_calibration_targets({a, b}, 3, 1.0);
        REQUIRE(sel.size() == 3);
        for (const auto& t : truth) {
            double best = 1e9;
            for (const auto& s : sel) best = std::min(best, distance(s, t));
            CHECK(best < 1.5 * g.dx);
        }
    }
    SUBCASE("asking for more targets than maxima returns fewer") {
        const auto sel = select_calibration_targets({a, b}, 10, 1.0);
        CHECK(sel.size() >= 3);
        CHECK(sel.size() < 10);
    }
    SUBCASE("huge separation returns a single target") {
        const auto sel = select_calibration_targets({a, b}, 3, 50.0);
        CHECK(sel.size() == 1);
    }
}

namespace {

// measurement rows generated directly from the image-phase model, used to probe
// fine_sync in isolation
PhaseMeasurements model_measurements(const SyncState& coarse, const std::vector<Vec2>& s_true,
                                     const std::vector<Vec2>& x_true,
                                     const std::vector<std::vector<double>>& alpha_true,
                                     const std::vector<double>& beta_true, double noise_std,
                                     std::uint64_t seed) {
    const int n = int(coarse.n_sensors());
    const int p = int(coarse.cal_targets.size());
    Rng rng(seed);
    PhaseMeasurements meas;
    meas.ref_pair = {coarse.sensor_ids[0], coarse.sensor_ids[0]};
    meas.cal_positions = coarse.cal_targets;
    meas.snr = noise_std > 0 ? 1.0 / (2 * noise_std * noise_std) : 1e12;

    auto tau = [](const Vec2& a, const Vec2& b, const Vec2& x) {
        return (distance(x, a) + distance(b, x)) / kWaveSpeed;
    };
    auto delta_phi = [&](int i, int j, int q) {
        const double c_bar = 2 * kPi * coarse.carriers[i] * (1 + coarse.beta[i]);
        const double c_true = 2 * kPi * coarse.carriers[i] * (1 + beta_true[i]);
        const double c_bar_r = 2 * kPi * coarse.carriers[0] * (1 + coarse.beta[0]);
        const double c_true_r = 2 * kPi * coarse.carriers[0] * (1 + beta_true[0]);
        const double d_nm = -c_true * tau(s_true[i], s_true[j], x_true[q]) + alpha_true[i][j] +
                            c_bar * tau(coarse.sensor_positions[i], coarse.sensor_positions[j],
                                        coarse.cal_targets[q]);
        const double d_ref = -c_true_r * tau(s_true[0], s_true[0], x_true[q]) +
                             c_bar_r * tau(coarse.sensor_positions[0], coarse.sensor_positions[0],
                                           coarse.cal_targets[q]);
        return d_nm - d_ref;
    };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == 0 && j == 0) continue;
            std::vector<double> row(p);
            for (int q = 0; q < p; ++q)
                row[q] = wrap_angle(delta_phi(i, j, q) + noise_std * rng.normal());
            meas.pairs.push_back({coarse.sensor_ids[i], coarse.sensor_ids[j]});
            meas.values.push_back(std::move(row));
        }
    return meas;
}

SyncState demo_state() {
    SyncState st;
    st.stage = SyncStage::coarse;
    const int n = 5;
    for (int i = 0; i < n; ++i) {
        st.sensor_ids.push_back(i + 1);
        st.carriers.push_back(76.5e9 + i * 100e6);
        st.sensor_positions.push_back({-20.0 + 10.0 * i, -25.0});
        st.element_offsets.push_back({{0, 0}});
    }
    st.beta.assign(n, 0.0);
    st.kappa.assign(n, std::vector<double>(n, 0.0));
    st.alpha.assign(n, std::vector<double>(n, 0.0));
    st.cal_targets = {{-8.0, 2.0}, {5.0, -1.0}, {0.0, 4.0}, {9.0, 3.0}, {-3.0, -3.0}};
    return st;
}

}  // namespace

TEST_CASE("fine_sync on model-generated measurements") {
    const SyncState coarse = demo_state();
    const int n = int(coarse.n_sensors());
    std::vector<std::vector<double>> alpha_true(n, std::vector<double>(n, 0.0));
    const std::vector<double> beta_zero(n, 0.0);

    SUBCASE("truth-initialized noiseless data gives cost 1 at iteration 0") {
        const PhaseMeasurements meas =
            model_measurements(coarse, coarse.sensor_positions, coarse.cal_targets, alpha_true,
                               beta_zero, 0.0, 1);
        FineSyncOptions opts;
        const FineSyncResult res = fine_sync(meas, coarse, opts);
        CHECK(res.converged);
        CHECK(res.iterations == 0);
        CHECK(res.final_cost == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("single calibration point: alpha equals minus the measured residual") {
        SyncState one = coarse;
        one.cal_targets = {coarse.cal_targets[0]};
        const std::vector<double> a_sensor{0.0, 0.35, -0.8, 1.4, 0.6};
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                alpha_true[i][j] = (i != j) ? wrap_angle(a_sensor[i] - a_sensor[j]) : 0.0;
        const PhaseMeasurements meas = model_measurements(
            one, one.sensor_positions, one.cal_targets, alpha_true, beta_zero, 0.0, 1);
        FineSyncOptions opts;
        opts.cost_threshold = 2.0;  // force one full iteration
        opts.max_outer_iters = 1;
        opts.fix_last_target_y = true;
        // exactness check: hold every position at the (true) initialization
        opts.initial_target_pass = false;
        opts.sensor_box = {1e-12, 1e-12};
        opts.target_box = {1e-12, 1e-12};
        const FineSyncResult res = fine_sync(meas, one, opts);
        // with P = 1 the closed form is exact: correction = -(measured - model)
        for (std::size_t r = 0; r < meas.pairs.size(); ++r) {
            const auto& pk = meas.pairs[r];
            if (pk.tx_id == pk.rx_id) continue;
            const int i = pk.tx_id - 1, j = pk.rx_id - 1;
            // positions did not move (truth-initialized), so the model residual is alpha_true
            CHECK(wrap_angle(res.state.alpha[i][j] + alpha_true[i][j]) ==
                  doctest::Approx(0.0).epsilon(1e-6));
        }
    }

    SUBCASE("recovers injected alphas and the cost trace never decreases") {
        const std::vector<double> a_sensor{0.0, 1.1, -0.7, 2.2, -1.6};
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                alpha_true[i][j] = (i != j) ? wrap_angle(a_sensor[i] - a_sensor[j]) : 0.0;
        const PhaseMeasurements meas =
            model_measurements(coarse, coarse.sensor_positions, coarse.cal_targets, alpha_true,
                               beta_zero, 0.02, 3);
        FineSyncOptions opts;
        opts.sensor_box = {0.05, 0.1};
        opts.target_box = {0.05, 0.1};
        const FineSyncResult res = fine_sync(meas, coarse, opts);
        CHECK(res.converged);
        CHECK(res.final_cost > 0.95);
        for (std::size_t i = 1; i < res.cost_trace.size(); ++i)
            CHECK(res.cost_trace[i] >= res.cost_trace[i - 1] - 1e-9);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                CHECK(std::abs(wrap_angle(res.state.alpha[i][j] + alpha_true[i][j])) < 0.1);
            }
    }

    SUBCASE("recovers wavelength-scale position errors") {
        std::vector<Vec2> s_true = coarse.sensor_positions;
        Rng rng(5);
        const double lambda = kWaveSpeed / 76.5e9;
        for (int i = 1; i < n; ++i)
            s_true[i] += Vec2{rng.uniform(-3 * lambda, 3 * lambda),
                              rng.uniform(-3 * lambda, 3 * lambda)};
        const PhaseMeasurements meas = model_measurements(coarse, s_true, coarse.cal_targets,
                                                          alpha_true, beta_zero, 0.02, 7);
        FineSyncOptions opts;
        opts.sensor_box = {0.08, 0.08};
        opts.target_box = {0.08, 0.08};
        opts.cost_threshold = 0.99;
        const FineSyncResult res = fine_sync(meas, coarse, opts);
        // the data is explained at the injected noise level...
        CHECK(res.final_cost > 0.99);
        // ...and positions are recovered, allowing a rare equivalent-phase
        // impostor among the sensors (median is robust to one)
        std::vector<double> errs;
        for (int i = 1; i < n; ++i)
            errs.push_back(distance(res.state.sensor_positions[i], s_true[i]));
        std::sort(errs.begin(), errs.end());
        CHECK(errs[errs.size() / 2] < lambda / 4);
        CHECK(errs.front() < lambda / 8);
    }
}

TEST_CASE("calibration_field") {
    SyncState st = demo_state();
    st.stage = SyncStage::fine;
    const std::vector<Vec2> coarse_pos = st.sensor_positions;
    const PixelGrid g = make_grid({0, 0}, 5.0, 5.0, 0.5, 0.5);

    SUBCASE("unmoved sensors give a constant field equal to alpha") {
        st.alpha[0][1] = 0.4;
        const CalibrationField f = calibration_field(st, coarse_pos, {1, 2}, g);
        for (double v : f.phases) CHECK(v == doctest::Approx(0.4));
    }
    SUBCASE("zero alpha and matching TOFs give a zero field") {
        const CalibrationField f = calibration_field(st, coarse_pos, {2, 3}, g);
        for (double v : f.phases) CHECK(v == doctest::Approx(0.0));
    }
    SUBCASE("millimeter-scale refinement produces order-90-degree swings") {
        st.sensor_positions[1] += Vec2{0.002, 0.001};
        const CalibrationField f = calibration_field(st, coarse_pos, {2, 1}, g);
        // pointwise oracle
        double lo = 1e9, hi = -1e9;
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) {
                const Vec2 x = g.position(ix, iy);
                const double coef = 2 * kPi * st.carriers[1] * (1 + st.beta[1]);
                const double tb = (distance(x, coarse_pos[1]) + distance(coarse_pos[0], x)) /
                                  kWaveSpeed;
                const double tt = (distance(x, st.sensor_positions[1]) +
                                   distance(st.sensor_positions[0], x)) / kWaveSpeed;
                const double expect = -coef * (tb - tt) + st.alpha[1][0];
                CHECK(f.at(ix, iy) == doctest::Approx(expect).epsilon(1e-12));
                lo = std::min(lo, f.at(ix, iy));
                hi = std::max(hi, f.at(ix, iy));
            }
        CHECK(hi - lo > kPi / 4);  // tens of degrees across the scene
    }
    SUBCASE("requires a fine-stage state") {
        st.stage = SyncStage::coarse;
        CHECK_THROWS_AS(calibration_field(st, coarse_pos, {1, 2}, g), ConfigError);
    }
}

TEST_CASE("identifiability condition") {
    CHECK_FALSE(identifiability_check(3, 5).solvable);
    CHECK(identifiability_check(3, 5).margin == -3);
    CHECK(identifiability_check(5, 5).solvable);
    CHECK(identifiability_check(5, 5).margin == 3);
    for (int p : {1, 2, 5, 50}) CHECK_FALSE(identifiability_check(2, p).solvable);
}

TEST_CASE("phase differences are invariant under a common rigid motion") {
    hcrb::Problem prob;
    prob.sensors = {{-20, -25}, {-5, -25}, {8, -25}, {21, -25}};
    prob.carriers = {76.5e9, 76.6e9, 76.7e9, 76.8e9};
    prob.betas = {0, 0, 0, 0};
    prob.targets = {{-8, 2}, {5, -1}, {0, 4}, {9, 3}, {-3, -3}};
    prob.p_prime = 0;
    const std::vector<double> alphas{0.1, -0.4, 0.7, 0.2};

    const Eigen::VectorXd base = hcrb::stack_delta_phi(prob, prob.sensors, alphas, prob.targets);
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const double angle = rng.uniform(-kPi, kPi);
        const Vec2 shift{rng.uniform(-100, 100), rng.uniform(-100, 100)};
        auto move = [&](const Vec2& v) { return rotate(v, angle) + shift; };
        std::vector<Vec2> s2, t2;
        for (const auto& s : prob.sensors) s2.push_back(move(s));
        for (const auto& t : prob.targets) t2.push_back(move(t));
        const Eigen::VectorXd moved = hcrb::stack_delta_phi(prob, s2, alphas, t2);
        CHECK((moved - base).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("rigid fit recovers synthetic transforms") {
    Rng rng(3);
    std::vector<Vec2> from;
    for (int i = 0; i < 8; ++i) from.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
    const double angle = 0.3;
    const Vec2 shift{1.5, -2.0};
    std::vector<Vec2> to;
    for (const auto& p : from) to.push_back(rotate(p, angle) + shift);
    const RigidFit fit = fit_rigid(from, to);
    CHECK(fit.psi == doctest::Approx(angle).epsilon(1e-12));
    CHECK(fit.translation.x == doctest::Approx(shift.x).epsilon(1e-12));
    CHECK(fit.rms < 1e-12);
}
