#include "netsar/wavenumber.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "netsar/errors.hpp"

namespace netsar {

Wavevectors wavevectors(const Vec2& tx, const Vec2& rx, const Vec2& point, double freq,
                        double wave_speed) {
    if (distance(point, tx) == 0.0 || distance(point, rx) == 0.0)
        throw NumericalError("wavevectors: point coincides with a sensor");
    const double k0 = 2.0 * kPi * freq / wave_speed;
    Wavevectors w;
    w.k_tx = k0 * unit_towards(tx, point);
    w.k_rx = (-k0) * unit_towards(rx, point);
    w.k = w.k_tx - w.k_rx;
    return w;
}

WavenumberTile tile(const Vec2& tx, const Vec2& rx, const Vec2& point, double f_c, double bandwidth,
                    int n_freq, double wave_speed) {
    if (n_freq < 2) throw ConfigError("tile: n_freq must be >= 2");
    WavenumberTile t;
    t.points.reserve(static_cast<std::size_t>(n_freq));
    for (int i = 0; i < n_freq; ++i) {
        const double f = f_c - bandwidth / 2 + bandwidth * double(i) / double(n_freq - 1);
        t.points.push_back(wavevectors(tx, rx, point, f, wave_speed).k);
    }
    return t;
}

std::size_t CoverageSet::point_count() const {
    std::size_t n = 0;
    for (const auto& t : tiles) n += t.points.size();
    return n;
}

CoverageSet pair_coverage(const Scene& scene, int tx_id, int rx_id, const Vec2& point, int n_freq) {
    const Sensor& tx = scene.sensor_by_id(tx_id);
    const Sensor& rx = scene.sensor_by_id(rx_id);
    const auto tx_elems = element_positions(tx);
    const auto rx_elems = element_positions(rx);

    CoverageSet cov;
    cov.target = point;
    for (std::size_t l = 0; l < tx_elems.size(); ++l) {
        for (std::size_t k = 0; k < rx_elems.size(); ++k) {
            auto t = tile(tx_elems[l], rx_elems[k], point, tx.carrier, tx.bandwidth, n_freq);
            t.tx_id = tx_id;
            t.rx_id = rx_id;
            t.tx_element = int(l);
            t.rx_element = int(k);
            cov.tiles.push_back(std::move(t));
        }
    }
    return cov;
}

CoverageSet total_coverage(const Scene& scene, const Vec2& point, int n_freq) {
    CoverageSet cov;
    cov.target = point;
    for (const auto& tx : scene.sensors) {
        for (const auto& rx : scene.sensors) {
            auto part = pair_coverage(scene, tx.id, rx.id, point, n_freq);
            for (auto& t : part.tiles) cov.tiles.push_back(std::move(t));
        }
    }
    return cov;
}

ResolutionBounds resolution_bounds(const CoverageSet& coverage) {
    if (coverage.point_count() == 0) throw NumericalError("resolution_bounds: empty coverage");
    double kx_lo = std::numeric_limits<double>::infinity(), kx_hi = -kx_lo;
    double ky_lo = kx_lo, ky_hi = -kx_lo;
    for (const auto& t : coverage.tiles) {
        for (const auto& p : t.points) {
            kx_lo = std::min(kx_lo, p.x);
            kx_hi = std::max(kx_hi, p.x);
            ky_lo = std::min(ky_lo, p.y);
            ky_hi = std::max(ky_hi, p.y);
        }
    }
    ResolutionBounds rb;
    rb.dkx_width = kx_hi - kx_lo;
    rb.dky_width = ky_hi - ky_lo;
    if (rb.dkx_width <= 0.0 || rb.dky_width <= 0.0)
        throw NumericalError("resolution_bounds: coverage degenerate along an axis");
    rb.rho_x = 2.0 * kPi / rb.dkx_width;
    rb.rho_y = 2.0 * kPi / rb.dky_width;
    return rb;
}

std::vector<Vec2> steering_matrix(const CoverageSet& coverage, double dkx, double dky) {
    if (dkx <= 0.0 || dky <= 0.0) throw ConfigError("steering_matrix: sampling steps must be > 0");
    if (coverage.point_count() == 0) return {};
    // lattice cells touched by any tile point
    std::set<std::pair<long, long>> cells;
    for (const auto& t : coverage.tiles)
        for (const auto& p : t.points)
            cells.insert({static_cast<long>(std::floor(p.x / dkx)),
                          static_cast<long>(std::floor(p.y / dky))});
    std::vector<Vec2> columns;
    columns.reserve(cells.size());
    for (const auto& [ix, iy] : cells)
        columns.emplace_back((double(ix) + 0.5) * dkx, (double(iy) + 0.5) * dky);
    return columns;
}

std::vector<double> steering_matrix_1d(const std::vector<double>& band_starts_hz,
                                       double band_width_hz, double df_hz, double wave_speed) {
    if (df_hz <= 0.0) throw ConfigError("steering_matrix_1d: df must be > 0");
    const auto per_band = static_cast<std::size_t>(std::ceil(band_width_hz / df_hz));
    std::vector<double> ks;
    ks.reserve(band_starts_hz.size() * per_band);
    for (double f0 : band_starts_hz)
        for (std::size_t i = 0; i < per_band; ++i)
            ks.push_back(4.0 * kPi * (f0 + double(i) * df_hz) / wave_speed);
    return ks;
}

}  // namespace netsar
