#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <netsar/fft.hpp>
#include <netsar/geometry.hpp>
#include <netsar/parallel.hpp>
#include <netsar/random.hpp>

#include <atomic>
#include <cmath>
#include <vector>

using namespace netsar;

TEST_CASE("fft convolution matches direct evaluation") {
    Rng rng(7);
    std::vector<cdouble> a(37), b(12);
    for (auto& v : a) v = {rng.normal(), rng.normal()};
    for (auto& v : b) v = {rng.normal(), rng.normal()};
    const auto fast = fft_convolve(a, b);
    REQUIRE(fast.size() == a.size() + b.size() - 1);
    for (std::size_t k = 0; k < fast.size(); ++k) {
        cdouble direct(0, 0);
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (k < i || k - i >= b.size()) continue;
            direct += a[i] * b[k - i];
        }
        CHECK(std::abs(fast[k] - direct) < 1e-9);
    }
}

TEST_CASE("fft round trip") {
    Rng rng(3);
    std::vector<cdouble> x(256);
    for (auto& v : x) v = {rng.normal(), rng.normal()};
    auto y = x;
    fft_pow2(y, false);
    fft_pow2(y, true);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(x[i] - y[i]) < 1e-12);
}

TEST_CASE("rng normal moments") {
    Rng rng(11);
    const int n = 200000;
    double mean = 0, m2 = 0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        mean += v;
        m2 += v * v;
    }
    mean /= n;
    m2 /= n;
    CHECK(std::abs(mean) < 0.01);
    CHECK(m2 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("derived seeds differ per stream") {
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0, 0) != derive_seed(2, 0, 0));
    CHECK(derive_seed(5, 3, 2) == derive_seed(5, 3, 2));
}

TEST_CASE("parallel_for covers every index exactly once, any thread count") {
    for (int threads : {1, 2, 5}) {
        std::vector<std::atomic<int>> hits(257);
        parallel_for(hits.size(), threads, [&](std::size_t i) { hits[i]++; });
        for (const auto& h : hits) CHECK(h.load() == 1);
    }
}

TEST_CASE("wrap_angle maps into [-pi, pi)") {
    CHECK(wrap_angle(370.0 * kPi / 180.0) == doctest::Approx(10.0 * kPi / 180.0));
    CHECK(wrap_angle(-kPi) == doctest::Approx(-kPi));
    CHECK(wrap_angle(3 * kPi) == doctest::Approx(-kPi));
    CHECK(wrap_angle(0.25) == doctest::Approx(0.25));
}

TEST_CASE("rotation helpers") {
    const Vec2 v = rotate({1.0, 0.0}, kPi / 2);
    CHECK(v.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(v.y == doctest::Approx(1.0));
    const Vec2 w = rotate_about({2.0, 0.0}, kPi, {1.0, 0.0});
    CHECK(w.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(w.y == doctest::Approx(0.0).epsilon(1e-12));
}
