#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <netsar/errors.hpp>
#include <netsar/imaging.hpp>
#include <netsar/pipeline.hpp>
#include <netsar/random.hpp>
#include <netsar/wavenumber.hpp>

#include <cmath>

using namespace netsar;

namespace {

Scene aperture_scene(int n_sensors, double sensor_dx, int elements, Vec2 target = {0, 0},
                     double theta = 0.0, double carrier0 = 76.5e9) {
    Scene s;
    for (int i = 0; i < n_sensors; ++i) {
        Sensor sen;
        sen.id = i + 1;
        sen.phase_center = {i * sensor_dx - sensor_dx * (n_sensors - 1) / 2.0, -40.0};
        sen.carrier = carrier0 + i * 100e6;
        sen.bandwidth = 100e6;
        const double spacing = kWaveSpeed / carrier0 / 2.0;
        const double half = spacing * (elements - 1) / 2;
        for (int e = 0; e < elements; ++e) sen.element_offsets.push_back({e * spacing - half, 0.0});
        s.sensors.push_back(sen);
    }
    s.targets.push_back({target, 1.0, theta});
    return s;
}

PixelGrid grid_around(Vec2 center, double half_x, double half_y, double dx, double dy) {
    PixelGrid g;
    g.dx = dx;
    g.dy = dy;
    g.x0 = center.x - half_x;
    g.y0 = center.y - half_y;
    g.nx = int(std::ceil(2 * half_x / dx)) + 1;
    g.ny = int(std::ceil(2 * half_y / dy)) + 1;
    return g;
}

}  // namespace

TEST_CASE("backprojected point target peaks at the target with phase -theta") {
    const double theta = 0.7;
    const Scene scene = aperture_scene(1, 0.0, 4, {0, 0}, theta);
    const auto spec = WaveformSpec::make(100e6, 3.2e-7);
    const PixelGrid grid = grid_around({0, 0}, 3.0, 3.0, 0.25, 0.25);
    const PairKey key{1, 1};
    const ComplexImage img = pipeline::focus_pair(scene, key, spec,
                                                  pipeline::true_estimates(scene, key), grid, 1, 1);
    const ImageMetrics m = image_metrics(img, {0, 0});
    CHECK(std::abs(m.peak_pos.x) < grid.dx);
    CHECK(std::abs(m.peak_pos.y) < grid.dy);
    CHECK(std::abs(std::remainder(std::arg(m.peak_val) + theta, 2 * kPi)) < 2.0 * kPi / 180);
}

TEST_CASE("noise image variance scales with the number of element pairs") {
    const auto spec = WaveformSpec::make(100e6, 3.2e-7);
    const PixelGrid grid = grid_around({0, 0}, 25.0, 25.0, 1.5, 1.5);
    double mean_power[2] = {0, 0};
    const int elem_counts[2] = {1, 2};  // 1 vs 4 element pairs
    for (int c = 0; c < 2; ++c) {
        Scene scene = aperture_scene(1, 0.0, elem_counts[c]);
        scene.targets[0].magnitude = 0.0;
        scene.noise_psd = 1e-9;
        const PairKey key{1, 1};
        const ComplexImage img = pipeline::focus_pair(
            scene, key, spec, pipeline::true_estimates(scene, key), grid, 7, 1);
        double acc = 0.0;
        for (const auto& v : img.values) acc += std::norm(v);
        mean_power[c] = acc / double(img.values.size());
    }
    CHECK(mean_power[1] / mean_power[0] == doctest::Approx(4.0).epsilon(0.25));
}

TEST_CASE("uncompensated timing offset displaces the bistatic peak by c kappa / 2") {
    Scene scene = aperture_scene(2, 4.0, 2);  // sensors 4 m apart, nearly monostatic pair
    const double kappa = 1.0 / (2 * 100e6);   // 5 ns
    scene.sensors[0].clock = ClockModel(kappa, 0.0, 0.0);  // kappa_12 = +5 ns
    const auto spec = WaveformSpec::make(100e6, 3.2e-7);
    const PixelGrid grid = grid_around({0, 0}, 2.0, 3.0, 0.15, 0.15);
    const PairKey key{1, 2};
    PairEstimates est = pipeline::true_estimates(scene, key);
    est.kappa = 0.0;  // estimate misses the offset
    const TimeWindow win = pipeline::window_for_grid(scene, key, spec, grid, 2 * kappa);
    const ComplexImage img =
        pipeline::focus_pair(scene, key, spec, est, grid, 3, 1, win);
    const ImageMetrics m = image_metrics(img, {0, 0});
    const double displacement = distance(m.peak_pos, {0, 0});
    CHECK(displacement == doctest::Approx(kWaveSpeed * kappa / 2).epsilon(0.07));
    // a positive kappa delays the echo: the peak walks away from the sensors
    CHECK(m.peak_pos.y > 0.0);
    CHECK(std::abs(m.peak_pos.x) < 0.1);
}

TEST_CASE("fuse") {
    PixelGrid g = grid_around({0, 0}, 1.0, 1.0, 0.5, 0.5);
    ComplexImage a;
    a.grid = g;
    a.values.assign(g.size(), {1.0, 0.5});
    SUBCASE("single image with zero alpha is the identity") {
        const ComplexImage f = fuse({a}, {0.0});
        for (std::size_t i = 0; i < f.values.size(); ++i)
            CHECK(std::abs(f.values[i] - a.values[i]) < 1e-15);
    }
    SUBCASE("opposite phases cancel") {
        const ComplexImage f = fuse({a, a}, {0.0, kPi});
        for (const auto& v : f.values) CHECK(std::abs(v) < 1e-12);
    }
    SUBCASE("linear and permutation invariant") {
        ComplexImage b = a;
        Rng rng(4);
        for (auto& v : b.values) v = {rng.normal(), rng.normal()};
        const ComplexImage f1 = fuse({a, b}, {0.3, -1.2});
        const ComplexImage f2 = fuse({b, a}, {-1.2, 0.3});
        for (std::size_t i = 0; i < f1.values.size(); ++i)
            CHECK(std::abs(f1.values[i] - f2.values[i]) < 1e-14);
    }
    SUBCASE("grid mismatch rejected") {
        ComplexImage c = a;
        c.grid.nx += 1;
        c.values.resize(c.grid.size());
        CHECK_THROWS_AS(fuse({a, c}, {0.0, 0.0}), ConfigError);
    }
}

TEST_CASE("apply_calibration") {
    PixelGrid g = grid_around({0, 0}, 1.0, 1.0, 0.5, 0.5);
    ComplexImage a;
    a.grid = g;
    a.tx_id = 1;
    a.rx_id = 2;
    a.values.assign(g.size(), {0.6, -0.8});
    CalibrationField field;
    field.grid = g;
    field.tx_id = 1;
    field.rx_id = 2;
    field.phases.assign(g.size(), 0.0);

    SUBCASE("zero field is the identity") {
        const ComplexImage out = apply_calibration(a, field);
        for (std::size_t i = 0; i < out.values.size(); ++i)
            CHECK(std::abs(out.values[i] - a.values[i]) < 1e-15);
    }
    SUBCASE("constant field rotates uniformly") {
        for (auto& p : field.phases) p = 0.9;
        const ComplexImage out = apply_calibration(a, field);
        const cdouble rot(std::cos(0.9), std::sin(0.9));
        for (std::size_t i = 0; i < out.values.size(); ++i)
            CHECK(std::abs(out.values[i] - a.values[i] * rot) < 1e-15);
    }
    SUBCASE("pair mismatch rejected") {
        field.rx_id = 3;
        CHECK_THROWS_AS(apply_calibration(a, field), ConfigError);
    }
}

TEST_CASE("image metrics") {
    const Scene scene = aperture_scene(1, 0.0, 4);
    const auto spec = WaveformSpec::make(100e6, 6.4e-7, 1.0, 8.0);
    const PixelGrid grid = grid_around({0, 0}, 4.0, 4.0, 0.2, 0.2);
    const PairKey key{1, 1};
    const ComplexImage img = pipeline::focus_pair(scene, key, spec,
                                                  pipeline::true_estimates(scene, key), grid, 1, 1);
    const ImageMetrics m = image_metrics(img, {0, 0});

    SUBCASE("range mainlobe width near 0.886 c / (2B)") {
        CHECK(m.width_y_3db == doctest::Approx(0.886 * kWaveSpeed / (2 * 100e6)).epsilon(0.15));
    }
    SUBCASE("peak on a grid node is recovered to better than dx / 10") {
        CHECK(std::abs(m.peak_pos.x) < grid.dx / 10);
        CHECK(std::abs(m.peak_pos.y) < grid.dy / 10);
    }
    SUBCASE("pure noise has no distinct peak") {
        ComplexImage noise;
        noise.grid = grid;
        noise.values.resize(grid.size());
        Rng rng(9);
        for (auto& v : noise.values) v = {rng.normal(), rng.normal()};
        CHECK_THROWS_AS(image_metrics(noise, {0, 0}), NumericalError);
    }
}

TEST_CASE("coherent gain: fused peak equals the sum of single-image peaks") {
    const Scene scene = aperture_scene(2, 10.0, 2);
    const auto spec = WaveformSpec::make(100e6, 3.2e-7);
    const PixelGrid grid = grid_around({0, 0}, 2.0, 2.0, 0.2, 0.2);  // target on a node
    std::vector<ComplexImage> images;
    double sum_mag = 0.0;
    for (int n = 1; n <= 2; ++n)
        for (int m = 1; m <= 2; ++m) {
            const PairKey key{n, m};
            images.push_back(pipeline::focus_pair(scene, key, spec,
                                                  pipeline::true_estimates(scene, key), grid,
                                                  derive_seed(1, n, m), 1));
            sum_mag += std::abs(images.back().interp({0, 0}));
        }
    const ComplexImage fused = fuse(images, std::vector<double>(images.size(), 0.0));
    // images agree in phase exactly at the target, so magnitudes add coherently
    const double fused_mag = std::abs(fused.interp({0, 0}));
    CHECK(fused_mag == doctest::Approx(sum_mag).epsilon(0.02));
    const ImageMetrics m = image_metrics(fused, {0, 0});
    CHECK(distance(m.peak_pos, {0, 0}) < grid.dx);
}

TEST_CASE("measured widths track the wavenumber-domain bounds") {
    // three co-located FDM sensors triple the radial coverage
    const Scene scene = aperture_scene(3, 0.0, 4);
    const auto spec = WaveformSpec::make(100e6, 3.2e-7);
    const auto bounds = resolution_bounds(total_coverage(scene, {0, 0}, 64));
    const PixelGrid grid = grid_around({0, 0}, 2.0, 2.0, bounds.rho_x / 5, bounds.rho_y / 5);
    std::vector<ComplexImage> images;
    for (int n = 1; n <= 3; ++n)
        for (int m = 1; m <= 3; ++m) {
            const PairKey key{n, m};
            images.push_back(pipeline::focus_pair(scene, key, spec,
                                                  pipeline::true_estimates(scene, key), grid,
                                                  derive_seed(2, n, m), 1));
        }
    const ComplexImage fused = fuse(images, std::vector<double>(images.size(), 0.0));
    const ImageMetrics m = image_metrics(fused, {0, 0});
    CHECK(m.width_y_3db > 0.8 * bounds.rho_y);
    CHECK(m.width_y_3db < 1.2 * bounds.rho_y);
}

TEST_CASE("out of window pixels are zeroed and counted") {
    const Scene scene = aperture_scene(1, 0.0, 1);
    const auto spec = WaveformSpec::make(100e6, 3.2e-7);
    // grid much larger than the echo support
    const PixelGrid grid = grid_around({0, 0}, 90.0, 90.0, 5.0, 5.0);
    const PairKey key{1, 1};
    const TimeWindow tight = default_window(scene, {1, 1, 0, 0}, spec);
    std::vector<RangeProfile> profiles{
        range_compress(synthesize_rx(scene, {1, 1, 0, 0}, spec, 1, tight), 0.0, spec)};
    const ComplexImage img = backproject(profiles, pipeline::true_estimates(scene, key), grid);
    CHECK(img.out_of_window > 0);
}
