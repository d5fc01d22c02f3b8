#include "netsar/sync.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "netsar/errors.hpp"
#include "netsar/fft.hpp"
#include "netsar/log.hpp"

namespace netsar {

std::vector<Vec2> SyncState::elements_of(std::size_t sensor_index) const {
    std::vector<Vec2> out;
    out.reserve(element_offsets[sensor_index].size());
    for (const auto& off : element_offsets[sensor_index])
        out.push_back(sensor_positions[sensor_index] + off);
    return out;
}

// ---------------------------------------------------------------------------
// shared parametric phase model
//
// The measured image phase at a calibration point carries
//   delta_phi_nm,p = -C_n tau_nm(s, x_p) + alpha_nm + C_n tau_nm_coarse(x_bar_p)
// with C_n = 2 pi f_n (1 + beta_bar_n); the reference (monostatic) row is
// subtracted. alpha_nm here is the physical pairwise offset carried by the
// data; SyncState stores its negative (the correction to apply).

namespace {

struct ModelCtx {
    int n_sensors = 0;
    int n_targets = 0;
    int ref = 0;                       // sensor index of the reference pair
    std::vector<double> coef;          // C_n
    std::vector<Vec2> coarse_pos;      // phase centers the images were focused with
    std::vector<Vec2> meas_pos;        // x_bar_p, measurement locations
    std::vector<std::vector<std::vector<double>>> focus;  // [n][m][p] = C_n * tau_coarse
    std::vector<std::vector<std::vector<double>>> meas;   // measured rows incl. zero ref row

    double tau(const Vec2& a, const Vec2& b, const Vec2& x) const {
        return (distance(x, a) + distance(b, x)) / kWaveSpeed;
    }

    double delta_phi_model(int n, int m, int p, const std::vector<Vec2>& s,
                           const std::vector<Vec2>& x,
                           const std::vector<std::vector<double>>& alpha_phys) const {
        const double d_nm = -coef[n] * tau(s[n], s[m], x[p]) + alpha_phys[n][m] + focus[n][m][p];
        const double d_ref = -coef[ref] * tau(s[ref], s[ref], x[p]) + focus[ref][ref][p];
        return d_nm - d_ref;
    }

    double cost(const std::vector<Vec2>& s, const std::vector<Vec2>& x,
                const std::vector<std::vector<double>>& alpha_phys) const {
        double acc = 0.0;
        std::size_t rows = 0;
        for (int n = 0; n < n_sensors; ++n)
            for (int m = 0; m < n_sensors; ++m) {
                if (n == ref && m == ref) continue;
                for (int p = 0; p < n_targets; ++p)
                    acc += std::cos(meas[n][m][p] - delta_phi_model(n, m, p, s, x, alpha_phys));
                rows += std::size_t(n_targets);
            }
        return rows ? acc / double(rows) : 0.0;
    }
};

ModelCtx make_ctx(const PhaseMeasurements& meas, const SyncState& state,
                  const std::vector<Vec2>& coarse_positions) {
    ModelCtx ctx;
    ctx.n_sensors = int(state.n_sensors());
    ctx.n_targets = int(meas.cal_positions.size());
    ctx.coarse_pos = coarse_positions;
    ctx.meas_pos = meas.cal_positions;

    std::map<int, int> index_of;
    for (std::size_t i = 0; i < state.sensor_ids.size(); ++i)
        index_of[state.sensor_ids[i]] = int(i);
    if (meas.ref_pair.tx_id != meas.ref_pair.rx_id)
        throw ConfigError("sync: reference pair must be monostatic");
    ctx.ref = index_of.at(meas.ref_pair.tx_id);

    ctx.coef.resize(ctx.n_sensors);
    for (int n = 0; n < ctx.n_sensors; ++n)
        ctx.coef[n] = 2.0 * kPi * state.carriers[n] * (1.0 + state.beta[n]);

    ctx.focus.assign(ctx.n_sensors,
                     std::vector<std::vector<double>>(
                         ctx.n_sensors, std::vector<double>(ctx.n_targets, 0.0)));
    for (int n = 0; n < ctx.n_sensors; ++n)
        for (int m = 0; m < ctx.n_sensors; ++m)
            for (int p = 0; p < ctx.n_targets; ++p)
                ctx.focus[n][m][p] =
                    ctx.coef[n] * ctx.tau(coarse_positions[n], coarse_positions[m], ctx.meas_pos[p]);

    ctx.meas.assign(ctx.n_sensors,
                    std::vector<std::vector<double>>(ctx.n_sensors,
                                                     std::vector<double>(ctx.n_targets, 0.0)));
    for (std::size_t r = 0; r < meas.pairs.size(); ++r) {
        const int n = index_of.at(meas.pairs[r].tx_id);
        const int m = index_of.at(meas.pairs[r].rx_id);
        if (int(meas.values[r].size()) != ctx.n_targets)
            throw ConfigError("sync: measurement row size mismatch");
        for (int p = 0; p < ctx.n_targets; ++p) ctx.meas[n][m][p] = meas.values[r][p];
    }
    return ctx;
}

std::vector<std::vector<double>> negate(const std::vector<std::vector<double>>& a) {
    auto out = a;
    for (auto& row : out)
        for (auto& v : row) v = -v;
    return out;
}

}  // namespace

double sync_cost(const PhaseMeasurements& meas, const SyncState& state,
                 const std::vector<Vec2>& coarse_positions) {
    const ModelCtx ctx = make_ctx(meas, state, coarse_positions);
    return ctx.cost(state.sensor_positions, state.cal_targets, negate(state.alpha));
}

std::vector<std::vector<double>> sync_residuals(const PhaseMeasurements& meas,
                                                const SyncState& state,
                                                const std::vector<Vec2>& coarse_positions) {
    const ModelCtx ctx = make_ctx(meas, state, coarse_positions);
    const auto alpha_phys = negate(state.alpha);
    std::vector<std::vector<double>> out;
    std::map<int, int> index_of;
    for (std::size_t i = 0; i < state.sensor_ids.size(); ++i)
        index_of[state.sensor_ids[i]] = int(i);
    for (std::size_t r = 0; r < meas.pairs.size(); ++r) {
        const int n = index_of.at(meas.pairs[r].tx_id);
        const int m = index_of.at(meas.pairs[r].rx_id);
        std::vector<double> row(meas.values[r].size());
        for (std::size_t p = 0; p < row.size(); ++p)
            row[p] = wrap_angle(meas.values[r][p] -
                                ctx.delta_phi_model(n, m, int(p), state.sensor_positions,
                                                    state.cal_targets, alpha_phys));
        out.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// coarse synchronization

namespace {

void fft2(std::vector<cdouble>& data, std::size_t nx, std::size_t ny, bool inverse) {
    std::vector<cdouble> line;
    line.resize(std::max(nx, ny));
    for (std::size_t iy = 0; iy < ny; ++iy) {
        line.assign(data.begin() + iy * nx, data.begin() + (iy + 1) * nx);
        fft_pow2(line, inverse);
        std::copy(line.begin(), line.end(), data.begin() + iy * nx);
    }
    std::vector<cdouble> col(ny);
    for (std::size_t ix = 0; ix < nx; ++ix) {
        for (std::size_t iy = 0; iy < ny; ++iy) col[iy] = data[iy * nx + ix];
        fft_pow2(col, inverse);
        for (std::size_t iy = 0; iy < ny; ++iy) data[iy * nx + ix] = col[iy];
    }
}

// corr(lx, ly) = sum_i a[i] * b[i + l], computed for |lx| <= lag_x, |ly| <= lag_y.
// Returned row-major with lag (0,0) at the center of a (2 lag_x + 1) x (2 lag_y + 1) table.
std::vector<double> corr2d(const std::vector<double>& a, const std::vector<double>& b, int nx,
                           int ny, int lag_x, int lag_y) {
    const std::size_t px = next_pow2(std::size_t(nx + lag_x + 1));
    const std::size_t py = next_pow2(std::size_t(ny + lag_y + 1));
    std::vector<cdouble> fa(px * py, cdouble(0, 0)), fb(px * py, cdouble(0, 0));
    for (int iy = 0; iy < ny; ++iy)
        for (int ix = 0; ix < nx; ++ix) {
            fa[std::size_t(iy) * px + ix] = a[std::size_t(iy) * nx + ix];
            fb[std::size_t(iy) * px + ix] = b[std::size_t(iy) * nx + ix];
        }
    fft2(fa, px, py, false);
    fft2(fb, px, py, false);
    for (std::size_t i = 0; i < fa.size(); ++i) fa[i] = std::conj(fa[i]) * fb[i];
    fft2(fa, px, py, true);
    // fa[l] now holds sum_i a[i] b[i+l] with negative lags wrapped
    std::vector<double> out(std::size_t(2 * lag_x + 1) * std::size_t(2 * lag_y + 1), 0.0);
    for (int ly = -lag_y; ly <= lag_y; ++ly)
        for (int lx = -lag_x; lx <= lag_x; ++lx) {
            const std::size_t wx = std::size_t((lx + int(px)) % int(px));
            const std::size_t wy = std::size_t((ly + int(py)) % int(py));
            out[std::size_t(ly + lag_y) * std::size_t(2 * lag_x + 1) + std::size_t(lx + lag_x)] =
                fa[wy * px + wx].real();
        }
    return out;
}

double parabolic_peak_offset(double ym, double y0, double yp) {
    const double denom = ym - 2 * y0 + yp;
    if (denom >= 0.0) return 0.0;
    return std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
}

}  // namespace

namespace {

struct PsiScore {
    double score = -1.0;      // sub-lag refined correlation peak
    double sub_lx = 0.0, sub_ly = 0.0;
    int lx = 0, ly = 0;
};

// correlation of the master magnitude with the psi-rotated slave magnitude,
// peak refined to sub-lag resolution along both axes. Both images pass through
// the same mid-cell bilinear resampling so the interpolation smoothing does not
// bias the score towards psi = 0.
PsiScore score_at_psi(const std::vector<double>& mmag, const ComplexImage& slave, double psi,
                      const Vec2& center, int lag_x, int lag_y) {
    const auto& g = slave.grid;
    const Vec2 half_cell{g.dx / 2, g.dy / 2};
    std::vector<double> smag(g.size(), 0.0);
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const Vec2 p = rotate_about(g.position(ix, iy) + half_cell, psi, center);
            if (g.contains(p)) smag[std::size_t(iy) * g.nx + ix] = std::abs(slave.interp(p));
        }
    const auto corr = corr2d(mmag, smag, g.nx, g.ny, lag_x, lag_y);
    const int w = 2 * lag_x + 1;
    int bi = 0;
    for (std::size_t i = 1; i < corr.size(); ++i)
        if (corr[i] > corr[bi]) bi = int(i);

    PsiScore out;
    out.lx = bi % w - lag_x;
    out.ly = bi / w - lag_y;
    out.sub_lx = out.lx;
    out.sub_ly = out.ly;
    const double peak = corr[std::size_t(bi)];
    out.score = peak;
    if (std::abs(out.lx) >= lag_x || std::abs(out.ly) >= lag_y) return out;

    // least-squares quadratic surface on the 3x3 neighborhood
    auto cval = [&](int jx, int jy) {
        return corr[std::size_t(jy + lag_y) * std::size_t(w) + std::size_t(jx + lag_x)];
    };
    double s = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (int v = -1; v <= 1; ++v)
        for (int u = -1; u <= 1; ++u) {
            const double f = cval(out.lx + u, out.ly + v);
            s += f;
            sx += u * f;
            sy += v * f;
            sxx += u * u * f;
            syy += v * v * f;
            sxy += u * v * f;
        }
    const double a = (20 * s - 12 * sxx - 12 * syy) / 36;
    const double b = sx / 6, c = sy / 6;
    const double d = (-12 * s + 18 * sxx) / 36;
    const double e = (-12 * s + 18 * syy) / 36;
    const double fcoef = sxy / 4;
    const double det = 4 * d * e - fcoef * fcoef;
    if (d < 0.0 && det > 0.0) {
        const double u_star = std::clamp((-2 * e * b + fcoef * c) / det, -1.0, 1.0);
        const double v_star = std::clamp((fcoef * b - 2 * d * c) / det, -1.0, 1.0);
        out.sub_lx = out.lx + u_star;
        out.sub_ly = out.ly + v_star;
        out.score = a + b * u_star + c * v_star + d * u_star * u_star + e * v_star * v_star +
                    fcoef * u_star * v_star;
    }
    return out;
}

}  // namespace

CoregResult coregister(const ComplexImage& master, const ComplexImage& slave,
                       const CoregSearch& search) {
    if (!(master.grid == slave.grid)) throw ConfigError("coregister: grids differ");
    const auto& g = master.grid;
    const Vec2 center{g.x0 + (g.nx - 1) * g.dx / 2, g.y0 + (g.ny - 1) * g.dy / 2};

    std::vector<double> mmag(g.size(), 0.0);
    const Vec2 half_cell{g.dx / 2, g.dy / 2};
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const Vec2 p = g.position(ix, iy) + half_cell;
            if (g.contains(p)) mmag[std::size_t(iy) * g.nx + ix] = std::abs(master.interp(p));
        }

    const int lag_x = std::max(1, int(std::ceil(search.delta_max / g.dx)) + 1);
    const int lag_y = std::max(1, int(std::ceil(search.delta_max / g.dy)) + 1);
    const int psi_steps = std::max(1, search.psi_steps);

    std::vector<double> psis(psi_steps);
    double best_score = -1.0;
    int best_pi = 0;
    PsiScore best_ps;
    for (int pi = 0; pi < psi_steps; ++pi) {
        psis[pi] = psi_steps == 1 ? (search.psi_min + search.psi_max) / 2
                                  : search.psi_min + (search.psi_max - search.psi_min) * pi /
                                                         double(psi_steps - 1);
        const PsiScore ps = score_at_psi(mmag, slave, psis[pi], center, lag_x, lag_y);
        if (ps.score > best_score) {
            best_score = ps.score;
            best_pi = pi;
            best_ps = ps;
        }
    }

    // least-squares parabola over the bracket around the best sample; averaging
    // many samples damps small resampling wiggles of the score curve
    double psi_best = psis[best_pi];
    if (psi_steps >= 2 && best_pi > 0 && best_pi < psi_steps - 1) {
        const double lo = psis[best_pi - 1], hi = psis[best_pi + 1];
        constexpr int kSamples = 9;
        double sy = 0, syu = 0, syuu = 0;
        double su = 0, suu = 0, suuu = 0, suuuu = 0;
        std::vector<double> us(kSamples), ys(kSamples);
        for (int i = 0; i < kSamples; ++i) {
            const double u = -1.0 + 2.0 * i / double(kSamples - 1);
            const double psi = 0.5 * (lo + hi) + 0.5 * u * (hi - lo);
            const double y = score_at_psi(mmag, slave, psi, center, lag_x, lag_y).score;
            us[i] = u;
            ys[i] = y;
            sy += y;
            syu += y * u;
            syuu += y * u * u;
            su += u;
            suu += u * u;
            suuu += u * u * u;
            suuuu += u * u * u * u;
        }
        // symmetric design: odd sums vanish; solve for y = a + b u + c u^2
        const double n = kSamples;
        const double det = n * suuuu - suu * suu;
        const double a_fit = (suuuu * sy - suu * syuu) / det;
        const double b_fit = syu / suu;
        const double c_fit = (n * syuu - suu * sy) / det;
        if (c_fit < 0.0) {
            const double u_star = std::clamp(-b_fit / (2 * c_fit), -1.0, 1.0);
            const double psi_fit = 0.5 * (lo + hi) + 0.5 * u_star * (hi - lo);
            const double fit_val = a_fit + b_fit * u_star + c_fit * u_star * u_star;
            if (fit_val >= best_score - 1e-9 * std::abs(best_score)) {
                psi_best = psi_fit;
                best_ps = score_at_psi(mmag, slave, psi_best, center, lag_x, lag_y);
                best_score = std::max(best_score, best_ps.score);
            }
        }
    }

    CoregResult res;
    res.psi = psi_best;
    // lag found in the rotated frame maps back through R(+psi); the continuous
    // search bound still applies after sub-lag refinement
    const Vec2 lag{std::clamp(best_ps.sub_lx * g.dx, -search.delta_max, search.delta_max),
                   std::clamp(best_ps.sub_ly * g.dy, -search.delta_max, search.delta_max)};
    res.delta = rotate(lag, res.psi);
    res.score = best_score;
    res.on_boundary = std::abs(best_ps.lx) >= lag_x || std::abs(best_ps.ly) >= lag_y ||
                      (psi_steps >= 2 && (best_pi == 0 || best_pi == psi_steps - 1));
    if (res.on_boundary) log_info("coregister: optimum on the search boundary");
    return res;
}

std::vector<Vec2> correct_positions(const std::vector<Vec2>& prior, const Vec2& phase_center,
                                    double psi, const Vec2& delta) {
    std::vector<Vec2> out;
    out.reserve(prior.size());
    for (const auto& p : prior)
        out.push_back(rotate(p - phase_center, psi) - delta + phase_center);
    return out;
}

double estimate_kappa(const ComplexImage& ref_image, const ComplexImage& bistatic_image,
                      const Vec2& tx_center, const Vec2& rx_center, double beta_tx,
                      double wave_speed) {
    auto mid_of = [](const PixelGrid& g) {
        return Vec2{g.x0 + (g.nx - 1) * g.dx / 2, g.y0 + (g.ny - 1) * g.dy / 2};
    };
    const ImageMetrics mref = image_metrics(ref_image, mid_of(ref_image.grid));
    const ImageMetrics mbis = image_metrics(bistatic_image, mid_of(bistatic_image.grid));
    auto tau_bar = [&](const Vec2& x) {
        return (distance(x, tx_center) + distance(rx_center, x)) / wave_speed;
    };
    return (tau_bar(mbis.peak_pos) - tau_bar(mref.peak_pos)) / (1.0 + beta_tx);
}

std::vector<Vec2> select_calibration_targets(const std::vector<ComplexImage>& images, int p_count,
                                             double min_separation) {
    if (images.empty()) throw ConfigError("select_calibration_targets: no images");
    if (p_count < 1) throw ConfigError("select_calibration_targets: P must be >= 1");
    const auto& g = images.front().grid;
    for (const auto& im : images)
        if (!(im.grid == g)) throw ConfigError("select_calibration_targets: grids differ");

    std::vector<double> minmap(g.size(), 0.0);
    for (std::size_t i = 0; i < minmap.size(); ++i) {
        double v = std::abs(images[0].values[i]);
        for (std::size_t k = 1; k < images.size(); ++k)
            v = std::min(v, std::abs(images[k].values[i]));
        minmap[i] = v;
    }

    struct Peak {
        double value;
        int ix, iy;
    };
    std::vector<Peak> peaks;
    auto mm = [&](int ix, int iy) { return minmap[std::size_t(iy) * g.nx + ix]; };
    for (int iy = 1; iy < g.ny - 1; ++iy)
        for (int ix = 1; ix < g.nx - 1; ++ix) {
            const double v = mm(ix, iy);
            bool is_max = v > 0.0;
            for (int dy = -1; dy <= 1 && is_max; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (mm(ix + dx, iy + dy) >= v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) peaks.push_back({v, ix, iy});
        }
    std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
        return a.value > b.value;
    });

    std::vector<Vec2> selected;
    for (const auto& pk : peaks) {
        if (int(selected.size()) >= p_count) break;
        Vec2 pos = g.position(pk.ix, pk.iy);
        bool ok = true;
        for (const auto& s : selected)
            if (distance(s, pos) < min_separation) {
                ok = false;
                break;
            }
        if (!ok) continue;
        // node positions: phase extraction is only exact on grid nodes
        selected.push_back(pos);
    }
    if (int(selected.size()) < p_count)
        log_info("select_calibration_targets: found only " + std::to_string(selected.size()) +
                 " of " + std::to_string(p_count) + " requested targets");
    return selected;
}

PhaseMeasurements measure_phases(const std::vector<ComplexImage>& images,
                                 const std::vector<Vec2>& cal_positions, const PairKey& ref_pair,
                                 double low_amplitude_ratio) {
    if (images.empty()) throw ConfigError("measure_phases: no images");
    const auto& g = images.front().grid;
    for (const auto& p : cal_positions)
        if (!g.contains(p)) throw ConfigError("measure_phases: calibration point outside grid");

    const ComplexImage* ref = nullptr;
    for (const auto& im : images)
        if (im.tx_id == ref_pair.tx_id && im.rx_id == ref_pair.rx_id) ref = &im;
    if (!ref) throw ConfigError("measure_phases: reference image missing");

    std::vector<const ComplexImage*> sorted;
    for (const auto& im : images)
        if (&im != ref) sorted.push_back(&im);
    std::sort(sorted.begin(), sorted.end(), [](const ComplexImage* a, const ComplexImage* b) {
        return std::make_pair(a->tx_id, a->rx_id) < std::make_pair(b->tx_id, b->rx_id);
    });

    PhaseMeasurements out;
    out.ref_pair = ref_pair;
    out.cal_positions = cal_positions;

    double snr_acc = 0.0;
    std::size_t snr_count = 0;
    auto noise_power = [](const ComplexImage& im) {
        std::vector<double> mags(im.values.size());
        for (std::size_t i = 0; i < mags.size(); ++i) mags[i] = std::abs(im.values[i]);
        std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
        const double med = mags[mags.size() / 2];
        return med * med / std::log(2.0);  // Rayleigh median -> power
    };
    const double ref_noise = noise_power(*ref);

    std::vector<double> ref_phases(cal_positions.size());
    for (std::size_t p = 0; p < cal_positions.size(); ++p)
        ref_phases[p] = std::arg(ref->interp(cal_positions[p]));

    for (const auto* im : sorted) {
        const double np = noise_power(*im);
        std::vector<double> row(cal_positions.size());
        for (std::size_t p = 0; p < cal_positions.size(); ++p) {
            const cdouble v = im->interp(cal_positions[p]);
            if (np > 0.0 && std::abs(v) < low_amplitude_ratio * std::sqrt(np)) {
                ++out.low_amplitude_count;
                log_debug("measure_phases: low amplitude at calibration point");
            }
            if (np > 0.0) {
                snr_acc += std::norm(v) / np;
                ++snr_count;
            }
            row[p] = wrap_angle(std::arg(v) - ref_phases[p]);
        }
        out.pairs.push_back({im->tx_id, im->rx_id});
        out.values.push_back(std::move(row));
    }
    if (ref_noise > 0.0)
        for (std::size_t p = 0; p < cal_positions.size(); ++p) {
            snr_acc += std::norm(ref->interp(cal_positions[p])) / ref_noise;
            ++snr_count;
        }
    out.snr = snr_count ? snr_acc / double(snr_count) : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// fine synchronization

namespace {

// Grid scan keeping the K best well-separated candidates, each refined by
// projected backtracking gradient ascent; the best refined point wins. Keeping
// several candidates matters: with few targets the wrapped-phase objective has
// near-coincidence sidelobes that can outscore a coarsely sampled true basin.
struct BoxCandidate {
    Vec2 point;
    double value;
};

template <typename ObjFn, typename GradFn>
Vec2 maximize_box(const ObjFn& objective, const GradFn& gradient, Vec2 start, Vec2 anchor,
                  Vec2 half_box, double grid_step, int ascent_iters, bool fix_y, bool do_scan,
                  std::vector<BoxCandidate>* refined_out = nullptr) {
    auto clampv = [&](Vec2 v) {
        v.x = std::clamp(v.x, anchor.x - half_box.x, anchor.x + half_box.x);
        v.y = fix_y ? start.y : std::clamp(v.y, anchor.y - half_box.y, anchor.y + half_box.y);
        return v;
    };

    using Candidate = BoxCandidate;
    std::vector<Candidate> seeds;
    seeds.push_back({clampv(start), objective(clampv(start))});

    if (do_scan && grid_step > 0.0) {
        constexpr std::size_t kKeep = 128;
        const double min_sep = 6.0 * grid_step;
        std::vector<Candidate> top;
        double kth_best = -1e300;
        auto refresh_kth = [&]() {
            if (top.size() < kKeep) {
                kth_best = -1e300;
                return;
            }
            kth_best = top.front().value;
            for (const auto& c : top) kth_best = std::min(kth_best, c.value);
        };
        auto offer = [&](const Vec2& p, double v) {
            for (auto& c : top) {
                if (distance(c.point, p) < min_sep) {
                    if (v > c.value) {
                        c = {p, v};
                        refresh_kth();
                    }
                    return;
                }
            }
            if (top.size() < kKeep) {
                top.push_back({p, v});
                refresh_kth();
                return;
            }
            auto worst = std::min_element(top.begin(), top.end(),
                                          [](const Candidate& a, const Candidate& b) {
                                              return a.value < b.value;
                                          });
            if (v > worst->value) {
                *worst = {p, v};
                refresh_kth();
            }
        };
        const int sx = std::min(4000, int(std::ceil(2 * half_box.x / grid_step)));
        const int sy = fix_y ? 0 : std::min(4000, int(std::ceil(2 * half_box.y / grid_step)));
        for (int iy = 0; iy <= sy; ++iy) {
            for (int ix = 0; ix <= sx; ++ix) {
                Vec2 cand{anchor.x - half_box.x + ix * grid_step,
                          fix_y ? start.y : anchor.y - half_box.y + iy * grid_step};
                cand = clampv(cand);
                const double v = objective(cand);
                // one comparison rejects almost every grid point
                if (v <= kth_best) continue;
                offer(cand, v);
            }
        }
        for (const auto& c : top) seeds.push_back(c);
    }

    auto refine = [&](Candidate c) {
        double step = grid_step > 0.0 ? grid_step : 1e-4;
        for (int it = 0; it < ascent_iters; ++it) {
            Vec2 grad = gradient(c.point);
            if (fix_y) grad.y = 0.0;
            const double gn = grad.norm();
            if (gn < 1e-14) break;
            bool improved = false;
            double t = step;
            for (int bt = 0; bt < 24; ++bt) {
                const Vec2 cand = clampv(c.point + grad * (t / gn));
                const double v = objective(cand);
                if (v > c.value) {
                    c = {cand, v};
                    improved = true;
                    step = t * 2.0;
                    break;
                }
                t *= 0.5;
            }
            if (!improved) break;
        }
        return c;
    };

    Candidate best = refine(seeds.front());
    if (refined_out) refined_out->push_back(best);
    for (std::size_t i = 1; i < seeds.size(); ++i) {
        const Candidate c = refine(seeds[i]);
        if (refined_out) refined_out->push_back(c);
        if (c.value > best.value) best = c;
    }
    if (refined_out)
        std::sort(refined_out->begin(), refined_out->end(),
                  [](const BoxCandidate& a, const BoxCandidate& b) { return a.value > b.value; });
    return best.point;
}

}  // namespace

FineSyncResult fine_sync(const PhaseMeasurements& meas, const SyncState& coarse,
                         const FineSyncOptions& opts) {
    if (coarse.stage == SyncStage::fine)
        throw ConfigError("fine_sync: state already at fine stage");
    const int N = int(coarse.n_sensors());
    const int P = int(meas.cal_positions.size());
    if (N < 2) throw ConfigError("fine_sync: need at least two sensors");
    if (P < 1) throw ConfigError("fine_sync: need at least one calibration target");

    ModelCtx ctx = make_ctx(meas, coarse, coarse.sensor_positions);
    const int r = ctx.ref;
    const double c_light = kWaveSpeed;

    double lambda_min = 1e9;
    for (double f : coarse.carriers) lambda_min = std::min(lambda_min, c_light / f);
    const double grid_step = opts.grid_step > 0.0 ? opts.grid_step : lambda_min / 16.0;

    SyncState state = coarse;
    state.stage = SyncStage::fine;
    if (int(state.alpha.size()) != N)
        state.alpha.assign(N, std::vector<double>(N, 0.0));

    auto alpha_phys = negate(state.alpha);

    SyncState best_state = state;
    double best_cost = ctx.cost(state.sensor_positions, state.cal_targets, alpha_phys);
    FineSyncResult res;
    res.iterations = 0;
    res.cost_trace.push_back(best_cost);

    if (best_cost >= opts.cost_threshold) {
        res.state = best_state;
        res.converged = true;
        res.final_cost = best_cost;
        return res;
    }

    auto& s = state.sensor_positions;
    auto& x = state.cal_targets;

    // score a candidate position of sensor n against every row involving n,
    // with the per-row phase corrections refit in closed form
    auto sensor_consensus_score = [&](int n, const Vec2& cand) {
        double total = 0.0;
        const Vec2 saved = s[n];
        s[n] = cand;
        for (int m = 0; m < N; ++m) {
            for (int pass = 0; pass < (m == n ? 1 : 2); ++pass) {
                const int a = pass == 0 ? n : m;
                const int b = pass == 0 ? m : n;
                if (a == r && b == r) continue;
                cdouble acc(0, 0);
                for (int p = 0; p < P; ++p) {
                    const double model_no_alpha =
                        -ctx.coef[a] * ctx.tau(s[a], s[b], x[p]) + ctx.focus[a][b][p] +
                        ctx.coef[r] * ctx.tau(s[r], s[r], x[p]) - ctx.focus[r][r][p];
                    const double resid = ctx.meas[a][b][p] - model_no_alpha;
                    acc += cdouble(std::cos(resid), std::sin(resid));
                }
                // bistatic rows carry a free per-pair constant: score by the
                // coherence |mean phasor|; monostatic rows have none, so the
                // in-phase component is what counts
                total += (a == b) ? acc.real() : std::abs(acc);
            }
        }
        s[n] = saved;
        return total;
    };

    auto run_step1 = [&](bool do_scan) {
        for (int n = 0; n < N; ++n) {
            if (n == r) continue;
            auto objective = [&](const Vec2& cand) {
                double acc = 0.0;
                for (int p = 0; p < P; ++p) {
                    const double model =
                        -ctx.coef[n] * 2.0 * distance(x[p], cand) / c_light + ctx.focus[n][n][p] +
                        ctx.coef[r] * 2.0 * distance(x[p], s[r]) / c_light - ctx.focus[r][r][p];
                    acc += std::cos(ctx.meas[n][n][p] - model);
                }
                return acc;
            };
            auto gradient = [&](const Vec2& cand) {
                Vec2 g{0, 0};
                for (int p = 0; p < P; ++p) {
                    const double model =
                        -ctx.coef[n] * 2.0 * distance(x[p], cand) / c_light + ctx.focus[n][n][p] +
                        ctx.coef[r] * 2.0 * distance(x[p], s[r]) / c_light - ctx.focus[r][r][p];
                    const double resid = ctx.meas[n][n][p] - model;
                    // d(model)/d(cand) = +2 C_n / c * unit(cand -> x_p)
                    const Vec2 dm = unit_towards(cand, x[p]) * (2.0 * ctx.coef[n] / c_light);
                    g += dm * std::sin(resid);
                }
                return g;
            };
            if (do_scan) {
                std::vector<BoxCandidate> refined;
                maximize_box(objective, gradient, s[n], ctx.coarse_pos[n], opts.sensor_box,
                             grid_step, opts.ascent_iters, false, true, &refined);
                // consensus: the bistatic rows arbitrate between near-tied
                // monostatic candidates; the monostatic winner keeps a margin
                // so equivalent-up-to-constant impostors do not displace it
                const std::size_t n_check = std::min<std::size_t>(refined.size(), 16);
                Vec2 best_point = refined.empty() ? s[n] : refined.front().point;
                double best_score =
                    1.04 * sensor_consensus_score(n, best_point);
                for (std::size_t c = 1; c < n_check; ++c) {
                    const double score = sensor_consensus_score(n, refined[c].point);
                    if (score > best_score) {
                        best_score = score;
                        best_point = refined[c].point;
                    }
                }
                s[n] = best_point;
            } else {
                s[n] = maximize_box(objective, gradient, s[n], ctx.coarse_pos[n], opts.sensor_box,
                                    grid_step, opts.ascent_iters, false, false);
            }
        }
    };

    auto run_step2 = [&]() {
        for (int n = 0; n < N; ++n)
            for (int m = 0; m < N; ++m) {
                if (n == m) {
                    state.alpha[n][m] = 0.0;
                    continue;
                }
                cdouble acc(0, 0);
                for (int p = 0; p < P; ++p) {
                    const double model_no_alpha =
                        -ctx.coef[n] * ctx.tau(s[n], s[m], x[p]) + ctx.focus[n][m][p] +
                        ctx.coef[r] * ctx.tau(s[r], s[r], x[p]) - ctx.focus[r][r][p];
                    const double resid = ctx.meas[n][m][p] - model_no_alpha;
                    acc += cdouble(std::cos(resid), std::sin(resid));
                }
                state.alpha[n][m] = -std::arg(acc);  // correction = minus the measured offset
            }
        // enforce antisymmetry: combine the two independent estimates of each pair
        for (int n = 0; n < N; ++n)
            for (int m = n + 1; m < N; ++m) {
                const cdouble ph = cdouble(std::cos(state.alpha[n][m]), std::sin(state.alpha[n][m])) +
                                   cdouble(std::cos(-state.alpha[m][n]), std::sin(-state.alpha[m][n]));
                const double a = std::arg(ph);
                state.alpha[n][m] = a;
                state.alpha[m][n] = -a;
            }
        alpha_phys = negate(state.alpha);
    };

    auto run_step3 = [&](bool do_scan) {
        for (int p = 0; p < P; ++p) {
            const bool fix_y = opts.fix_last_target_y && p == P - 1;
            auto objective = [&](const Vec2& cand) {
                double acc = 0.0;
                for (int n = 0; n < N; ++n)
                    for (int m = 0; m < N; ++m) {
                        if (n == r && m == r) continue;
                        const double model = -ctx.coef[n] * ctx.tau(s[n], s[m], cand) +
                                             alpha_phys[n][m] + ctx.focus[n][m][p] +
                                             ctx.coef[r] * ctx.tau(s[r], s[r], cand) -
                                             ctx.focus[r][r][p];
                        acc += std::cos(ctx.meas[n][m][p] - model);
                    }
                return acc;
            };
            auto gradient = [&](const Vec2& cand) {
                Vec2 g{0, 0};
                for (int n = 0; n < N; ++n)
                    for (int m = 0; m < N; ++m) {
                        if (n == r && m == r) continue;
                        const double model = -ctx.coef[n] * ctx.tau(s[n], s[m], cand) +
                                             alpha_phys[n][m] + ctx.focus[n][m][p] +
                                             ctx.coef[r] * ctx.tau(s[r], s[r], cand) -
                                             ctx.focus[r][r][p];
                        const double resid = ctx.meas[n][m][p] - model;
                        const Vec2 u_n = unit_towards(s[n], cand);
                        const Vec2 u_m = unit_towards(s[m], cand);
                        const Vec2 u_r = unit_towards(s[r], cand);
                        // d(model)/d(cand)
                        const Vec2 dm = (u_n + u_m) * (-ctx.coef[n] / c_light) +
                                        u_r * (2.0 * ctx.coef[r] / c_light);
                        g += dm * std::sin(resid);
                    }
                return g;
            };
            x[p] = maximize_box(objective, gradient, x[p], ctx.meas_pos[p], opts.target_box,
                                grid_step, opts.ascent_iters, fix_y, do_scan);
        }
    };

    if (opts.initial_target_pass) {
        run_step2();
        run_step3(true);
    }

    // joint gradient polish over all free positions: block updates crawl along
    // the correlated sensorstargets valley, a full-gradient step does not
    auto joint_polish = [&](int iterations) {
        auto refit_alpha = [&]() {
            run_step2();
        };
        auto total_cost = [&]() { return ctx.cost(s, x, alpha_phys); };
        refit_alpha();
        double current = total_cost();
        double step = grid_step;
        for (int it = 0; it < iterations; ++it) {
            // gradient w.r.t. sensors (all rows) and targets (all rows)
            std::vector<Vec2> gs(std::size_t(N), Vec2{0, 0});
            std::vector<Vec2> gx(std::size_t(P), Vec2{0, 0});
            for (int n = 0; n < N; ++n)
                for (int m = 0; m < N; ++m) {
                    if (n == r && m == r) continue;
                    for (int p = 0; p < P; ++p) {
                        const double model = ctx.delta_phi_model(n, m, p, s, x, alpha_phys);
                        const double sinr = std::sin(ctx.meas[n][m][p] - model);
                        const double cn = ctx.coef[n] / kWaveSpeed;
                        const double cr = ctx.coef[r] / kWaveSpeed;
                        const Vec2 u_n = unit_towards(s[n], x[p]);
                        const Vec2 u_m = unit_towards(s[m], x[p]);
                        const Vec2 u_r = unit_towards(s[r], x[p]);
                        // d(model)/d(s_n) = +C_n/c u(s_n->x_p) per appearance
                        gs[n] += u_n * (cn * sinr);
                        gs[m] += u_m * (cn * sinr);
                        gs[r] += u_r * (-2.0 * cr * sinr);
                        gx[p] += (u_n + u_m) * (-cn * sinr) + u_r * (2.0 * cr * sinr);
                    }
                }
            gs[r] = {0, 0};  // reference frozen
            if (opts.fix_last_target_y) gx[P - 1].y = 0.0;
            double gnorm2 = 0.0;
            for (const auto& g : gs) gnorm2 += g.squared_norm();
            for (const auto& g : gx) gnorm2 += g.squared_norm();
            const double gnorm = std::sqrt(gnorm2);
            if (gnorm < 1e-14) break;
            bool improved = false;
            for (double t = step; t > grid_step * 1e-6; t *= 0.5) {
                auto s_try = s;
                auto x_try = x;
                for (int n = 0; n < N; ++n) s_try[n] = s[n] + gs[n] * (t / gnorm);
                for (int p = 0; p < P; ++p) x_try[p] = x[p] + gx[p] * (t / gnorm);
                const double c_try = ctx.cost(s_try, x_try, alpha_phys);
                if (c_try > current) {
                    s = s_try;
                    x = x_try;
                    current = c_try;
                    refit_alpha();
                    current = total_cost();
                    step = t * 2.0;
                    improved = true;
                    break;
                }
            }
            if (!improved) break;
        }
        return current;
    };

    int stalls = 0;
    for (int outer = 1; outer <= opts.max_outer_iters; ++outer) {
        const bool scan = outer <= opts.scan_iters;
        const double before = best_cost;
        run_step1(scan);
        run_step2();
        run_step3(outer <= opts.target_scan_iters);

        const double cost = ctx.cost(s, x, alpha_phys);
        res.iterations = outer;
        if (cost >= best_cost) {
            best_cost = cost;
            best_state = state;
            res.cost_trace.push_back(cost);
        } else {
            state = best_state;  // revert the degrading update
        }
        if (best_cost >= opts.cost_threshold) break;
        if (best_cost - before < 1e-3) {
            if (++stalls >= 2 && outer >= opts.scan_iters) break;
        } else {
            stalls = 0;
        }
    }

    // polish the best state jointly
    state = best_state;
    alpha_phys = negate(state.alpha);
    {
        const double polished = joint_polish(200);
        if (polished > best_cost) {
            best_cost = polished;
            best_state = state;
            res.cost_trace.push_back(polished);
        }
        res.converged = best_cost >= opts.cost_threshold;
    }

    res.state = best_state;
    res.final_cost = best_cost;
    res.converged = best_cost >= opts.cost_threshold;
    {
        const auto a_phys = negate(best_state.alpha);
        for (int n = 0; n < N; ++n)
            for (int m = 0; m < N; ++m) {
                if (n == r && m == r) continue;
                double acc = 0.0;
                for (int p = 0; p < P; ++p)
                    acc += std::cos(ctx.meas[n][m][p] -
                                    ctx.delta_phi_model(n, m, p, best_state.sensor_positions,
                                                        best_state.cal_targets, a_phys));
                res.row_pairs.push_back(
                    {best_state.sensor_ids[std::size_t(n)], best_state.sensor_ids[std::size_t(m)]});
                res.row_costs.push_back(acc / double(P));
            }
    }
    return res;
}

CalibrationField calibration_field(const SyncState& fine_state,
                                   const std::vector<Vec2>& coarse_positions, const PairKey& pair,
                                   const PixelGrid& grid, double wave_speed) {
    if (fine_state.stage != SyncStage::fine)
        throw ConfigError("calibration_field: state must be at fine stage");
    const std::size_t n = fine_state.sensor_ids.size();
    std::size_t in = n, im = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (fine_state.sensor_ids[i] == pair.tx_id) in = i;
        if (fine_state.sensor_ids[i] == pair.rx_id) im = i;
    }
    if (in == n || im == n) throw ConfigError("calibration_field: unknown pair sensor id");

    const double coef = 2.0 * kPi * fine_state.carriers[in] * (1.0 + fine_state.beta[in]);
    const Vec2 s_bar_n = coarse_positions[in], s_bar_m = coarse_positions[im];
    const Vec2 s_til_n = fine_state.sensor_positions[in], s_til_m = fine_state.sensor_positions[im];
    const double alpha = fine_state.alpha[in][im];

    CalibrationField field;
    field.grid = grid;
    field.tx_id = pair.tx_id;
    field.rx_id = pair.rx_id;
    field.phases.resize(grid.size());
    for (int iy = 0; iy < grid.ny; ++iy)
        for (int ix = 0; ix < grid.nx; ++ix) {
            const Vec2 x = grid.position(ix, iy);
            const double tau_bar = (distance(x, s_bar_n) + distance(s_bar_m, x)) / wave_speed;
            const double tau_til = (distance(x, s_til_n) + distance(s_til_m, x)) / wave_speed;
            field.at(ix, iy) = -coef * (tau_bar - tau_til) + alpha;
        }
    return field;
}

Identifiability identifiability_check(int n_sensors, int p_targets) {
    if (n_sensors < 1 || p_targets < 0)
        throw ConfigError("identifiability_check: invalid arguments");
    Identifiability out;
    out.margin = (n_sensors - 1) * p_targets - (2 * (n_sensors - 1) + 2 * p_targets - 1);
    out.solvable = out.margin >= 0;
    return out;
}

RigidFit fit_rigid(const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    if (from.size() != to.size() || from.empty())
        throw ConfigError("fit_rigid: point sets must match and be nonempty");
    Vec2 cf{0, 0}, ct{0, 0};
    for (std::size_t i = 0; i < from.size(); ++i) {
        cf += from[i];
        ct += to[i];
    }
    cf = cf / double(from.size());
    ct = ct / double(to.size());
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i) {
        const Vec2 a = from[i] - cf, b = to[i] - ct;
        sxx += dot(a, b);
        sxy += a.x * b.y - a.y * b.x;
    }
    RigidFit fit;
    fit.psi = std::atan2(sxy, sxx);
    fit.translation = ct - rotate(cf, fit.psi);
    double acc = 0.0;
    for (std::size_t i = 0; i < from.size(); ++i)
        acc += (rotate(from[i], fit.psi) + fit.translation - to[i]).squared_norm();
    fit.rms = std::sqrt(acc / double(from.size()));
    return fit;
}

}  // namespace netsar
