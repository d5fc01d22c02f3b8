#pragma once

#include <complex>
#include <cstddef>
#include <vector>

#include "netsar/waveform.hpp"

namespace netsar {

/// Shared pixel lattice in the global frame. Values are stored row-major with x
/// fastest: index = iy * nx + ix.
struct PixelGrid {
    double x0 = 0.0, y0 = 0.0;
    double dx = 1.0, dy = 1.0;
    int nx = 0, ny = 0;

    bool operator==(const PixelGrid& o) const = default;

    Vec2 position(int ix, int iy) const { return {x0 + ix * dx, y0 + iy * dy}; }
    bool contains(const Vec2& p) const {
        return p.x >= x0 && p.x <= x0 + (nx - 1) * dx && p.y >= y0 && p.y <= y0 + (ny - 1) * dy;
    }
    std::size_t size() const { return std::size_t(nx) * std::size_t(ny); }
};

struct ComplexImage {
    PixelGrid grid;
    std::vector<cdouble> values;
    int tx_id = 0, rx_id = 0;  // provenance (n, m)
    std::size_t out_of_window = 0;  // pixels whose apparent TOF missed the profile support

    cdouble& at(int ix, int iy) { return values[std::size_t(iy) * grid.nx + ix]; }
    const cdouble& at(int ix, int iy) const { return values[std::size_t(iy) * grid.nx + ix]; }

    /// Bilinear interpolation of real and imaginary parts at an arbitrary point.
    /// The pixels of a focused image carry carrier-rate phase, so phase reads
    /// are only meaningful on (or very near) grid nodes; envelope queries should
    /// interpolate magnitudes instead (see image_metrics).
    cdouble interp(const Vec2& p) const;

    double rms() const;
};

struct CalibrationField {
    PixelGrid grid;
    std::vector<double> phases;  // radians
    int tx_id = 0, rx_id = 0;

    double& at(int ix, int iy) { return phases[std::size_t(iy) * grid.nx + ix]; }
    const double& at(int ix, int iy) const { return phases[std::size_t(iy) * grid.nx + ix]; }
};

/// Estimated quantities a pair image is focused with: element positions of the
/// Tx/Rx sensors, the Tx absolute frequency offset estimate and the pair timing
/// offset estimate (zero for monostatic pairs).
struct PairEstimates {
    std::vector<Vec2> tx_elements;
    std::vector<Vec2> rx_elements;
    double carrier = 0.0;  // f_n
    double beta_tx = 0.0;  // beta_bar_n
    double kappa = 0.0;    // kappa_bar_nm
};

/// Time-domain back-projection of one pair: every profile is evaluated at the
/// apparent TOF (1+beta) tau(x) + kappa of each pixel and rotated by
/// exp(+j 2 pi f (1+beta) tau(x)). Profiles must carry the element indices they
/// were synthesized for; out-of-support pixels contribute zero and are counted.
ComplexImage backproject(const std::vector<RangeProfile>& profiles, const PairEstimates& est,
                         const PixelGrid& grid, int threads = 1);

/// Coherent fusion: pixelwise sum of images rotated by exp(+j alpha[i]).
ComplexImage fuse(const std::vector<ComplexImage>& images, const std::vector<double>& alphas);

/// Pixelwise phase rotation exp(+j field).
ComplexImage apply_calibration(const ComplexImage& image, const CalibrationField& field);

struct ImageMetrics {
    Vec2 peak_pos;
    cdouble peak_val;
    double width_x_3db = 0.0;  // meters
    double width_y_3db = 0.0;
    double pslr_db = 0.0;  // strongest sidelobe relative to the peak, dB (negative)
};

struct MetricsOptions {
    double search_radius = -1.0;     // <0 searches the whole grid around `around`
    double min_width_pixels = 1.2;   // narrower peaks in both axes count as noise spikes
    double flat_rms_ratio = 1.05;    // peaks below this multiple of the RMS count as flat
    double mainlobe_exclusion = 1.5; // PSLR exclusion, in units of the 3 dB widths
};

/// Subpixel peak (quadratic refinement), 3 dB mainlobe widths and PSLR around a
/// point of interest. Throws NumericalError when no distinct peak exists.
ImageMetrics image_metrics(const ComplexImage& image, const Vec2& around,
                           const MetricsOptions& opts = {});

}  // namespace netsar
