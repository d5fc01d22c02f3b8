#include "netsar/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "netsar/errors.hpp"
#include "netsar/parallel.hpp"

namespace netsar {

cdouble ComplexImage::interp(const Vec2& p) const {
    const double u = (p.x - grid.x0) / grid.dx;
    const double v = (p.y - grid.y0) / grid.dy;
    const int ix = std::clamp(int(std::floor(u)), 0, grid.nx - 2);
    const int iy = std::clamp(int(std::floor(v)), 0, grid.ny - 2);
    const double fx = std::clamp(u - ix, 0.0, 1.0);
    const double fy = std::clamp(v - iy, 0.0, 1.0);
    return at(ix, iy) * ((1 - fx) * (1 - fy)) + at(ix + 1, iy) * (fx * (1 - fy)) +
           at(ix, iy + 1) * ((1 - fx) * fy) + at(ix + 1, iy + 1) * (fx * fy);
}

double ComplexImage::rms() const {
    double acc = 0.0;
    for (const auto& v : values) acc += std::norm(v);
    return values.empty() ? 0.0 : std::sqrt(acc / double(values.size()));
}

ComplexImage backproject(const std::vector<RangeProfile>& profiles, const PairEstimates& est,
                         const PixelGrid& grid, int threads) {
    if (profiles.empty()) throw ConfigError("backproject: no profiles");
    for (const auto& p : profiles) {
        if (p.pair.tx_element < 0 || p.pair.tx_element >= int(est.tx_elements.size()) ||
            p.pair.rx_element < 0 || p.pair.rx_element >= int(est.rx_elements.size()))
            throw ConfigError("backproject: profile element index outside the estimate set");
    }

    ComplexImage img;
    img.grid = grid;
    img.tx_id = profiles.front().pair.tx_id;
    img.rx_id = profiles.front().pair.rx_id;
    img.values.assign(grid.size(), cdouble(0.0, 0.0));

    const double two_pi_f = 2.0 * kPi * est.carrier * (1.0 + est.beta_tx);
    std::vector<std::size_t> missed(grid.ny, 0);

    parallel_for(std::size_t(grid.ny), threads, [&](std::size_t row) {
        const int iy = int(row);
        for (int ix = 0; ix < grid.nx; ++ix) {
            const Vec2 x = grid.position(ix, iy);
            cdouble acc(0.0, 0.0);
            for (const auto& prof : profiles) {
                const Vec2& txe = est.tx_elements[prof.pair.tx_element];
                const Vec2& rxe = est.rx_elements[prof.pair.rx_element];
                const double tau = tof(txe, rxe, x);
                const double t_eval = (1.0 + est.beta_tx) * tau + est.kappa;
                const double t_last = prof.t0 + double(prof.samples.size() - 1) * prof.dt;
                if (t_eval < prof.t0 || t_eval > t_last) {
                    ++missed[row];
                    continue;
                }
                const double phase = two_pi_f * tau;
                acc += prof.value_at(t_eval) * cdouble(std::cos(phase), std::sin(phase));
            }
            img.at(ix, iy) = acc;
        }
    });

    for (auto m : missed) img.out_of_window += m;
    return img;
}

ComplexImage fuse(const std::vector<ComplexImage>& images, const std::vector<double>& alphas) {
    if (images.empty()) throw ConfigError("fuse: no images");
    if (alphas.size() != images.size())
        throw ConfigError("fuse: need one alpha per image");
    for (const auto& im : images)
        if (!(im.grid == images.front().grid)) throw ConfigError("fuse: pixel grids differ");

    ComplexImage out;
    out.grid = images.front().grid;
    out.tx_id = out.rx_id = 0;
    out.values.assign(out.grid.size(), cdouble(0.0, 0.0));
    for (std::size_t i = 0; i < images.size(); ++i) {
        const cdouble rot(std::cos(alphas[i]), std::sin(alphas[i]));
        const auto& vals = images[i].values;
        for (std::size_t j = 0; j < vals.size(); ++j) out.values[j] += vals[j] * rot;
    }
    return out;
}

ComplexImage apply_calibration(const ComplexImage& image, const CalibrationField& field) {
    if (!(image.grid == field.grid))
        throw ConfigError("apply_calibration: pixel grids differ");
    if (image.tx_id != field.tx_id || image.rx_id != field.rx_id)
        throw ConfigError("apply_calibration: pair ids differ");
    ComplexImage out = image;
    for (std::size_t j = 0; j < out.values.size(); ++j) {
        const double phi = field.phases[j];
        out.values[j] *= cdouble(std::cos(phi), std::sin(phi));
    }
    return out;
}

namespace {

// quadratic vertex through three equidistant samples, offset in [-0.5, 0.5]
double parabolic_offset(double ym, double y0, double yp) {
    const double denom = ym - 2 * y0 + yp;
    if (denom >= 0.0) return 0.0;  // not a local maximum
    return std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
}

// Magnitude image with its own bilinear interpolation. The complex pixels of a
// focused image rotate at the carrier spatial rate between nodes, so envelope
// queries must interpolate magnitudes, never real/imaginary parts.
struct MagnitudeView {
    const PixelGrid& grid;
    std::vector<double> mag;

    explicit MagnitudeView(const ComplexImage& img) : grid(img.grid), mag(img.values.size()) {
        for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::abs(img.values[i]);
    }
    double at(int ix, int iy) const { return mag[std::size_t(iy) * grid.nx + ix]; }
    double interp(const Vec2& p) const {
        const double u = (p.x - grid.x0) / grid.dx;
        const double v = (p.y - grid.y0) / grid.dy;
        const int ix = std::clamp(int(std::floor(u)), 0, grid.nx - 2);
        const int iy = std::clamp(int(std::floor(v)), 0, grid.ny - 2);
        const double fx = std::clamp(u - ix, 0.0, 1.0);
        const double fy = std::clamp(v - iy, 0.0, 1.0);
        return at(ix, iy) * (1 - fx) * (1 - fy) + at(ix + 1, iy) * fx * (1 - fy) +
               at(ix, iy + 1) * (1 - fx) * fy + at(ix + 1, iy + 1) * fx * fy;
    }
};

// walk from the peak until |I| falls below the -3 dB level, sub-stepped
double half_width(const MagnitudeView& img, const Vec2& peak, const Vec2& dir, double step,
                  double level, double max_dist) {
    double prev = img.interp(peak);
    for (double d = step; d <= max_dist; d += step) {
        const double cur = img.interp(peak + dir * d);
        if (cur < level) {
            // linear crossing between the last two samples
            const double frac = (prev - level) / std::max(prev - cur, 1e-300);
            return d - step + frac * step;
        }
        prev = cur;
    }
    return max_dist;
}

}  // namespace

ImageMetrics image_metrics(const ComplexImage& image, const Vec2& around,
                           const MetricsOptions& opts) {
    const auto& g = image.grid;
    if (!g.contains(around)) throw ConfigError("image_metrics: point of interest outside grid");

    const MagnitudeView mag(image);
    int best_ix = -1, best_iy = -1;
    double best = -1.0;
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const Vec2 p = g.position(ix, iy);
            if (opts.search_radius > 0 && distance(p, around) > opts.search_radius) continue;
            const double a = mag.at(ix, iy);
            if (a > best) {
                best = a;
                best_ix = ix;
                best_iy = iy;
            }
        }
    }
    const double rms = image.rms();
    if (best_ix < 0 || best <= 0.0 || best < opts.flat_rms_ratio * rms)
        throw NumericalError("image_metrics: no distinct peak (flat image)");

    // subpixel refinement of the envelope peak along each axis
    Vec2 peak = g.position(best_ix, best_iy);
    if (best_ix > 0 && best_ix < g.nx - 1) {
        peak.x += g.dx * parabolic_offset(mag.at(best_ix - 1, best_iy), best,
                                          mag.at(best_ix + 1, best_iy));
    }
    if (best_iy > 0 && best_iy < g.ny - 1) {
        peak.y += g.dy * parabolic_offset(mag.at(best_ix, best_iy - 1), best,
                                          mag.at(best_ix, best_iy + 1));
    }

    ImageMetrics m;
    m.peak_pos = peak;
    // complex value read at the nearest node: between nodes the phase is not sampled
    m.peak_val = image.at(best_ix, best_iy);
    const double level = best / std::sqrt(2.0);
    const double ext_x = (g.nx - 1) * g.dx, ext_y = (g.ny - 1) * g.dy;
    m.width_x_3db = half_width(mag, peak, {1, 0}, g.dx / 8, level, ext_x) +
                    half_width(mag, peak, {-1, 0}, g.dx / 8, level, ext_x);
    m.width_y_3db = half_width(mag, peak, {0, 1}, g.dy / 8, level, ext_y) +
                    half_width(mag, peak, {0, -1}, g.dy / 8, level, ext_y);
    // sub-pixel-wide maxima in both axes are noise spikes, not imaged targets
    if (m.width_x_3db < opts.min_width_pixels * g.dx &&
        m.width_y_3db < opts.min_width_pixels * g.dy)
        throw NumericalError("image_metrics: no distinct peak (sub-pixel spike)");

    // PSLR outside an exclusion ellipse scaled from the measured widths
    const double ex = opts.mainlobe_exclusion * std::max(m.width_x_3db, g.dx);
    const double ey = opts.mainlobe_exclusion * std::max(m.width_y_3db, g.dy);
    double side = 0.0;
    for (int iy = 0; iy < g.ny; ++iy) {
        for (int ix = 0; ix < g.nx; ++ix) {
            const Vec2 p = g.position(ix, iy);
            if (opts.search_radius > 0 && distance(p, around) > opts.search_radius) continue;
            const double u = (p.x - peak.x) / ex;
            const double v = (p.y - peak.y) / ey;
            if (u * u + v * v <= 1.0) continue;
            side = std::max(side, mag.at(ix, iy));
        }
    }
    m.pslr_db = side > 0.0 ? 20.0 * std::log10(side / best) : -300.0;
    return m;
}

}  // namespace netsar
