#pragma once

#include <vector>

#include "netsar/scene.hpp"

namespace netsar {

/// Tx/Rx plane wavevectors and their combination k = k_tx - k_rx at a scene
/// point. Both directional derivatives use unit vectors from sensor towards the
/// point, so a monostatic pair gives |k| = 2 * 2 pi f / c exactly.
struct Wavevectors {
    Vec2 k_tx;
    Vec2 k_rx;
    Vec2 k;
};

Wavevectors wavevectors(const Vec2& tx, const Vec2& rx, const Vec2& point, double freq,
                        double wave_speed = kWaveSpeed);

/// Discretized wavenumber coverage of a single Tx/Rx element pair over the band
/// [f_c - B/2, f_c + B/2].
struct WavenumberTile {
    int tx_id = 0, rx_id = 0;
    int tx_element = 0, rx_element = 0;
    std::vector<Vec2> points;  // rad/m
};

struct CoverageSet {
    std::vector<WavenumberTile> tiles;
    Vec2 target;  // evaluation point x_q

    std::size_t point_count() const;
};

WavenumberTile tile(const Vec2& tx, const Vec2& rx, const Vec2& point, double f_c, double bandwidth,
                    int n_freq, double wave_speed = kWaveSpeed);

/// Union of tiles over all element pairs of sensors (n, m).
CoverageSet pair_coverage(const Scene& scene, int tx_id, int rx_id, const Vec2& point, int n_freq);

/// Union over all sensor pairs (monostatic and bistatic).
CoverageSet total_coverage(const Scene& scene, const Vec2& point, int n_freq);

/// Bounding-box widths of the union and the resolution bounds rho = 2 pi / dk.
struct ResolutionBounds {
    double dkx_width = 0.0;
    double dky_width = 0.0;
    double rho_x = 0.0;
    double rho_y = 0.0;
};

/// Throws NumericalError when the coverage is empty or degenerate along an axis
/// (resolution unbounded there).
ResolutionBounds resolution_bounds(const CoverageSet& coverage);

/// Uniform 2D sampling of the coverage union: every (k_x, k_y) lattice point
/// with spacing (dkx, dky) that falls within dk/2 of a tile point, one column
/// per sample. Used to build the vectorized wavenumber-domain model.
std::vector<Vec2> steering_matrix(const CoverageSet& coverage, double dkx, double dky);

/// 1D sampling of a set of frequency bands at step df (half-open bins):
/// k = 4 pi f / c for f = band_start + i * df, i in [0, ceil(B/df)).
std::vector<double> steering_matrix_1d(const std::vector<double>& band_starts_hz,
                                       double band_width_hz, double df_hz,
                                       double wave_speed = kWaveSpeed);

}  // namespace netsar
