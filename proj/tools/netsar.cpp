#include <CLI11.hpp>
#include <json.hpp>

#include <netsar/detection.hpp>
#include <netsar/errors.hpp>
#include <netsar/hcrb.hpp>
#include <netsar/io.hpp>
#include <netsar/log.hpp>
#include <netsar/parallel.hpp>
#include <netsar/pipeline.hpp>
#include <netsar/random.hpp>
#include <netsar/sync.hpp>
#include <netsar/version.hpp>
#include <netsar/wavenumber.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace netsar;

namespace {

struct RunContext {
    std::string command;
    fs::path config_path;
    fs::path out_dir;
    std::uint64_t seed = 0;
    int threads = 1;
    std::vector<fs::path> artifacts;

    void write_text(const std::string& name, const std::string& content) {
        const fs::path p = out_dir / name;
        io::write_text_file(p, content);
        artifacts.push_back(p);
    }
    void write_image(const std::string& name, const ComplexImage& img) {
        const fs::path p = out_dir / name;
        io::save_image(img, p);
        artifacts.push_back(p);
    }
    void write_manifest() {
        json m;
        m["command"] = command;
        m["config_path"] = config_path.string();
        m["out_dir"] = out_dir.string();
        m["seed"] = seed;
        m["threads"] = threads;
        m["version"] = kVersion;
        m["artifacts"] = json::array();
        for (const auto& p : artifacts) {
            m["artifacts"].push_back({{"path", fs::relative(p, out_dir).string()},
                                      {"bytes", fs::file_size(p)},
                                      {"fnv1a64", io::fnv1a_hex(p)}});
        }
        io::write_text_file(out_dir / "manifest.json", m.dump(2) + "\n");
    }
    void remove_partial_artifacts() {
        for (const auto& p : artifacts) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
};

json load_config(const fs::path& path) {
    try {
        return json::parse(io::read_text_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
}

template <typename T>
T require(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("config: missing key '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: invalid value for key '" + key + "'");
    }
}

Scene scene_from_config(const json& cfg, const fs::path& config_dir) {
    if (cfg.contains("scene_file")) {
        fs::path p = cfg.at("scene_file").get<std::string>();
        if (p.is_relative()) p = config_dir / p;
        return io::load_scene(p);
    }
    if (cfg.contains("scene")) return io::scene_from_json(cfg.at("scene").dump());
    throw ConfigError("config: need 'scene' (inline) or 'scene_file'");
}

WaveformSpec waveform_from_config(const json& cfg) {
    const json w = cfg.value("waveform", json::object());
    const double bw = w.value("bandwidth_hz", 100e6);
    const double dur = w.value("duration_s", 3.2e-7);
    const double energy = w.value("energy", 1.0);
    const double oversample = w.value("oversample", 4.0);
    const std::string kind = w.value("pulse", "flat_spectrum");
    if (kind != "flat_spectrum" && kind != "linear_chirp")
        throw ConfigError("config: waveform.pulse must be flat_spectrum or linear_chirp");
    return WaveformSpec::make(bw, dur, energy, oversample,
                              kind == "flat_spectrum" ? PulseKind::flat_spectrum
                                                      : PulseKind::linear_chirp);
}

PixelGrid grid_from_config(const json& cfg) {
    const json g = cfg.value("grid", json::object());
    PixelGrid grid;
    grid.x0 = require<double>(g, "x0");
    grid.y0 = require<double>(g, "y0");
    grid.dx = require<double>(g, "dx");
    grid.dy = require<double>(g, "dy");
    grid.nx = require<int>(g, "nx");
    grid.ny = require<int>(g, "ny");
    if (grid.dx <= 0 || grid.dy <= 0 || grid.nx < 2 || grid.ny < 2)
        throw ConfigError("config: invalid grid");
    return grid;
}

std::string csv_row(const std::vector<std::string>& cells) {
    std::string row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) row += ",";
        row += cells[i];
    }
    row += "\n";
    return row;
}

// ---------------------------------------------------------------------------

void run_coverage(RunContext& ctx, const json& cfg) {
    const Scene scene = scene_from_config(cfg, ctx.config_path.parent_path());
    const json jp = cfg.value("point", json::array({0.0, 0.0}));
    const Vec2 point{jp.at(0).get<double>(), jp.at(1).get<double>()};
    const int n_freq = cfg.value("n_freq", 64);

    const CoverageSet cov = total_coverage(scene, point, n_freq);
    std::string csv = "k_x,k_y,n,m\n";
    for (const auto& tile : cov.tiles)
        for (const auto& p : tile.points)
            csv += csv_row({io::format_double(p.x), io::format_double(p.y),
                            std::to_string(tile.tx_id), std::to_string(tile.rx_id)});
    ctx.write_text("coverage.csv", csv);

    const ResolutionBounds rb = resolution_bounds(cov);
    json summary = {{"dkx_width", rb.dkx_width},
                    {"dky_width", rb.dky_width},
                    {"rho_x", rb.rho_x},
                    {"rho_y", rb.rho_y},
                    {"tiles", cov.tiles.size()},
                    {"points", cov.point_count()}};
    ctx.write_text("summary.json", summary.dump(2) + "\n");
}

void run_image(RunContext& ctx, const json& cfg) {
    const Scene scene = scene_from_config(cfg, ctx.config_path.parent_path());
    const WaveformSpec spec = waveform_from_config(cfg);
    const PixelGrid grid = grid_from_config(cfg);

    std::vector<PairKey> pairs;
    if (!cfg.contains("pairs") || cfg.at("pairs") == "all") {
        for (const auto& tx : scene.sensors)
            for (const auto& rx : scene.sensors) pairs.push_back({tx.id, rx.id});
    } else {
        for (const auto& jp : cfg.at("pairs"))
            pairs.push_back({jp.at(0).get<int>(), jp.at(1).get<int>()});
    }

    std::vector<ComplexImage> images;
    for (const auto& key : pairs) {
        ComplexImage img =
            pipeline::focus_pair(scene, key, spec, pipeline::true_estimates(scene, key), grid,
                                 derive_seed(ctx.seed, key.tx_id, key.rx_id), ctx.threads);
        ctx.write_image("img_n" + std::to_string(key.tx_id) + "_m" + std::to_string(key.rx_id) +
                            ".cimg",
                        img);
        images.push_back(std::move(img));
    }
    const ComplexImage fused = fuse(images, std::vector<double>(images.size(), 0.0));
    ctx.write_image("fused.cimg", fused);

    json metrics = json::object();
    try {
        const Vec2 around = scene.targets.front().position;
        const ImageMetrics m = image_metrics(fused, around);
        metrics["fused"] = {{"peak_x", m.peak_pos.x},
                            {"peak_y", m.peak_pos.y},
                            {"peak_abs", std::abs(m.peak_val)},
                            {"width_x_3db", m.width_x_3db},
                            {"width_y_3db", m.width_y_3db},
                            {"pslr_db", m.pslr_db}};
    } catch (const NumericalError& e) {
        metrics["fused"] = {{"error", e.what()}};
    }
    ctx.write_text("metrics.json", metrics.dump(2) + "\n");
}

pipeline::SyncStudyConfig sync_config_from_json(const json& cfg, int threads) {
    pipeline::SyncStudyConfig sc;
    sc.threads = threads;
    const json sj = cfg.value("scenario", json::object());
    sc.scenario.n_sensors = sj.value("n_sensors", 5);
    sc.scenario.n_targets = sj.value("n_targets", 5);
    sc.scenario.sensor_span_x = sj.value("sensor_span_x", 50.0);
    sc.scenario.sensor_min_spacing = sj.value("sensor_min_spacing", 7.0);
    sc.scenario.sensor_y = sj.value("sensor_y", -25.0);
    sc.scenario.target_x_min = sj.value("target_x_min", -8.0);
    sc.scenario.target_x_max = sj.value("target_x_max", 8.0);
    sc.scenario.target_y_min = sj.value("target_y_min", -4.0);
    sc.scenario.target_y_max = sj.value("target_y_max", 4.0);
    sc.scenario.target_min_separation = sj.value("target_min_separation", 4.0);
    sc.scenario.elements_per_sensor = sj.value("elements_per_sensor", 8);
    sc.scenario.element_spacing = sj.value("element_spacing", kWaveSpeed / 76.5e9 / 2);
    sc.scenario.carrier_base = sj.value("carrier_base", 76.5e9);
    sc.scenario.carrier_step = sj.value("carrier_step", 100e6);
    sc.scenario.bandwidth = sj.value("bandwidth", 100e6);
    sc.scenario.strong_target_boost = sj.value("strong_target_boost", 2.0);

    sc.image_snr_db = cfg.value("snr_db", 30.0);
    sc.bandwidth = sc.scenario.bandwidth;
    const json wj = cfg.value("waveform", json::object());
    sc.pulse_duration = wj.value("duration_s", 3.2e-7);
    sc.oversample = wj.value("oversample", 4.0);
    sc.beta_observation = wj.value("beta_observation_s", 1e-4);

    const json inj = cfg.value("injection", json::object());
    sc.kappa_max = inj.value("kappa_max_s", 5e-9);
    sc.beta_max = inj.value("beta_max", 2e-6);
    sc.pos_err_max = inj.value("pos_err_max_m", 5.0 * kWaveSpeed / 76.5e9);
    if (inj.contains("kappa_s"))
        sc.kappa_inject = inj.at("kappa_s").get<std::vector<double>>();
    if (inj.contains("beta")) sc.beta_inject = inj.at("beta").get<std::vector<double>>();
    if (inj.contains("pos_err_m")) {
        std::vector<Vec2> errs;
        for (const auto& jp : inj.at("pos_err_m"))
            errs.push_back({jp.at(0).get<double>(), jp.at(1).get<double>()});
        sc.pos_inject = errs;
    }
    const json cj = cfg.value("coreg", json::object());
    sc.coreg.delta_max = cj.value("delta_max_m", 0.0);
    sc.coreg.psi_min = cj.value("psi_min", 0.0);
    sc.coreg.psi_max = cj.value("psi_max", 0.0);
    sc.coreg.psi_steps = cj.value("psi_steps", 1);
    const json fj = cfg.value("fine", json::object());
    sc.fine.cost_threshold = fj.value("cost_threshold", 0.95);
    sc.fine.max_outer_iters = fj.value("max_outer_iters", 20);
    sc.cal_min_separation = cfg.value("cal_min_separation", 3.0);
    return sc;
}

json sync_report_to_json(const pipeline::SyncStudyReport& r) {
    json j;
    j["beta_true"] = r.beta_true;
    j["beta_est"] = r.beta_est;
    j["kappa_true_ns"] = r.kappa_true_ns;
    j["kappa_est_ns"] = r.kappa_est_ns;
    j["coarse_pos_rms_m"] = r.coarse_pos_rms;
    j["fine_pos_rms_m"] = r.fine_pos_rms;
    j["initial_cost"] = r.initial_cost;
    j["final_cost"] = r.final_cost;
    j["converged"] = r.converged;
    j["iterations"] = r.iterations;
    j["snr_est_db"] = r.snr_est_db;
    j["cal_targets_found"] = r.cal_targets_found;
    j["residual_cal_rms_deg"] = r.residual_cal_rms_deg;
    j["residual_cal_rms_deg_per_pair"] = r.residual_cal_rms_deg_per_pair;
    j["fused_peak_db_vs_ideal"] = r.fused_peak_db_vs_ideal;
    return j;
}

void run_sync(RunContext& ctx, const json& cfg) {
    const pipeline::SyncStudyConfig sc = sync_config_from_json(cfg, ctx.threads);
    const int repeats = cfg.value("seeds", 1);
    json report;
    if (repeats <= 1) {
        report = sync_report_to_json(pipeline::run_sync_study(sc, ctx.seed));
    } else {
        report["runs"] = json::array();
        int ok = 0;
        for (int r = 0; r < repeats; ++r) {
            const auto rep = pipeline::run_sync_study(sc, derive_seed(ctx.seed, r));
            json jr = sync_report_to_json(rep);
            jr["run"] = r;
            if (rep.residual_cal_rms_deg < 10.0 && rep.fused_peak_db_vs_ideal > -1.0) ++ok;
            report["runs"].push_back(std::move(jr));
        }
        report["runs_within_tolerance"] = ok;
        report["runs_total"] = repeats;
    }
    ctx.write_text("sync_report.json", report.dump(2) + "\n");
}

void run_hcrb(RunContext& ctx, const json& cfg) {
    hcrb::Config hc;
    hc.n_sensors = cfg.value("n_sensors", 5);
    hc.p_targets = cfg.value("p_targets", 5);
    hc.p_prime = cfg.value("p_prime", 0);
    hc.prior_std = cfg.value("prior_std_m", 0.20);
    hc.snr_db = cfg.value("snr_db", 20.0);
    hc.trials = cfg.value("trials", 500);
    const json gj = cfg.value("geometry", json::object());
    hc.geometry.sensor_span_x = gj.value("sensor_span_x", 50.0);
    hc.geometry.sensor_min_spacing = gj.value("sensor_min_spacing", 7.0);
    hc.geometry.sensor_y = gj.value("sensor_y", -10.0);
    hc.geometry.target_x_min = gj.value("target_x_min", -20.0);
    hc.geometry.target_x_max = gj.value("target_x_max", 20.0);
    hc.geometry.target_y_min = gj.value("target_y_min", -5.0);
    hc.geometry.target_y_max = gj.value("target_y_max", 5.0);
    hc.geometry.carrier_base = gj.value("carrier_base", 76.5e9);
    hc.prior_basin_cap = cfg.value("prior_basin_cap_m", 0.0);
    if (cfg.contains("point_of_interest")) {
        hc.point_of_interest = {cfg.at("point_of_interest").at(0).get<double>(),
                                cfg.at("point_of_interest").at(1).get<double>()};
    }

    const hcrb::EcdfResult res = hcrb::ecdf_monte_carlo(hc, ctx.seed, ctx.threads);
    std::string csv = "sigma_deg,cdf\n";
    for (std::size_t i = 0; i < res.sigma_cal_deg.size(); ++i)
        csv += csv_row({io::format_double(res.sigma_cal_deg[i]), io::format_double(res.cdf[i])});
    ctx.write_text("ecdf.csv", csv);
    json summary = {{"p10", res.p10},
                    {"p50", res.p50},
                    {"p90", res.p90},
                    {"retries", res.retries},
                    {"trials", hc.trials},
                    {"fraction_below_50deg", res.fraction_below(50.0)}};
    ctx.write_text("summary.json", summary.dump(2) + "\n");
}

detection::Config detection_config_from_json(const json& cfg, int u) {
    detection::Config dc;
    dc.acquisitions = u;
    dc.bandwidth = cfg.value("bandwidth_hz", 100e6);
    dc.df = cfg.value("df_hz", 1e6);
    dc.b_tot = cfg.value("b_tot_hz", 1e9);
    const std::string alloc = cfg.value("allocation", "contiguous");
    if (alloc == "contiguous") {
        dc.allocation = detection::Allocation::contiguous;
    } else if (alloc == "random") {
        dc.allocation = detection::Allocation::random_in_btot;
    } else {
        throw ConfigError("config: allocation must be 'contiguous' or 'random'");
    }
    dc.snr1_db = cfg.value("snr1_db", 20.0);
    dc.amp_ratio = cfg.value("amp_ratio", 0.1);
    dc.pfa = cfg.value("pfa", 1e-2);
    dc.trials = cfg.value("trials", 2000);
    dc.cfar_trials = cfg.value("cfar_trials", 5000);
    dc.validate();
    return dc;
}

void run_pcd(RunContext& ctx, const json& cfg) {
    const std::vector<int> u_list = cfg.value("acquisitions", std::vector<int>{1, 4, 8});
    const std::vector<double> dx_grid = cfg.value(
        "dx_grid", std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0});
    const std::vector<double> sigmas = cfg.value("phase_err_std_deg", std::vector<double>{0.0});

    std::string csv = "dx_norm,U,mode,pcd,phase_err_std_deg\n";
    for (int u : u_list) {
        for (double sigma : sigmas) {
            detection::Config dc = detection_config_from_json(cfg, u);
            dc.phase_err_std_deg = sigma;
            const auto points = detection::pcd_curve(dc, dx_grid, ctx.seed, ctx.threads);
            for (const auto& p : points) {
                csv += csv_row({io::format_double(p.dx_norm), std::to_string(p.acquisitions),
                                p.mode == detection::GlrtMode::known ? "known" : "unknown",
                                io::format_double(p.pcd), io::format_double(sigma)});
            }
        }
    }
    ctx.write_text("pcd.csv", csv);
}

void run_roc(RunContext& ctx, const json& cfg) {
    const std::vector<int> u_list = cfg.value("acquisitions", std::vector<int>{1, 4, 8});
    const double dx = cfg.value("dx_norm", 1.0);
    const std::vector<double> pfa_grid = cfg.value(
        "pfa_grid", std::vector<double>{1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 0.3, 1.0});

    std::string csv = "pfa,pcd,U\n";
    for (int u : u_list) {
        const detection::Config dc = detection_config_from_json(cfg, u);
        const auto points = detection::roc_curve(dc, dx, pfa_grid, ctx.seed, ctx.threads);
        for (const auto& p : points)
            csv += csv_row({io::format_double(p.pfa), io::format_double(p.pcd),
                            std::to_string(p.acquisitions)});
    }
    ctx.write_text("roc.csv", csv);
}

void run_demo_fig3(RunContext& ctx, const json& cfg) {
    pipeline::Fig3Config fc;
    fc.n_vehicles = cfg.value("n_vehicles", 6);
    fc.span = cfg.value("span_m", 60.0);
    fc.standoff = cfg.value("standoff_m", 20.0);
    fc.aperture = cfg.value("aperture_m", 0.20);
    fc.elements = cfg.value("elements", 8);
    fc.bandwidth = cfg.value("bandwidth_hz", 100e6);
    fc.target_separation = cfg.value("target_separation_m", 0.5);
    fc.image_snr_db = cfg.value("snr_db", 30.0);
    fc.pixel_fraction = cfg.value("pixel_fraction", 0.25);
    fc.threads = ctx.threads;

    const pipeline::Fig3Result res = pipeline::run_fig3(fc, ctx.seed);
    ctx.write_text("scene.json", io::scene_to_json(res.scene));
    ctx.write_image("single.cimg", res.single);
    ctx.write_image("fused.cimg", res.fused);
    json metrics = {{"single_peaks", res.single_peaks},
                    {"fused_peaks", res.fused_peaks},
                    {"fused_rho_x", res.fused_bounds.rho_x},
                    {"fused_rho_y", res.fused_bounds.rho_y},
                    {"single_rho_x", res.single_bounds.rho_x},
                    {"single_rho_y", res.single_bounds.rho_y},
                    {"fused_width_x_3db", res.fused_metrics.width_x_3db},
                    {"fused_width_y_3db", res.fused_metrics.width_y_3db},
                    {"fused_peak_x", res.fused_metrics.peak_pos.x},
                    {"fused_peak_y", res.fused_metrics.peak_pos.y},
                    {"fused_pslr_db", res.fused_metrics.pslr_db}};
    ctx.write_text("metrics.json", metrics.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"netsar: cooperative multistatic radar imaging toolkit"};
    app.require_subcommand(1);

    RunContext ctx;
    std::string config_path, out_dir;
    ctx.threads = default_threads();

    const std::vector<std::string> commands{"coverage", "image", "sync", "hcrb",
                                            "pcd",      "roc",   "demo-fig3"};
    std::map<std::string, CLI::App*> subs;
    for (const auto& name : commands) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON configuration file")->required();
        sub->add_option("--out", out_dir, "output directory")->required();
        sub->add_option("--seed", ctx.seed, "random seed");
        sub->add_option("--threads", ctx.threads, "worker threads");
        subs[name] = sub;
    }

    CLI11_PARSE(app, argc, argv);

    for (const auto& name : commands)
        if (subs[name]->parsed()) ctx.command = name;
    ctx.config_path = config_path;
    ctx.out_dir = out_dir;

    auto fail = [&](const std::string& kind, const std::string& what, int code) {
        ctx.remove_partial_artifacts();
        json err = {{"error", kind}, {"message", what}, {"command", ctx.command}};
        std::cerr << err.dump() << "\n";
        return code;
    };

    try {
        fs::create_directories(ctx.out_dir);
        const json cfg = load_config(ctx.config_path);
        if (ctx.command == "coverage") {
            run_coverage(ctx, cfg);
        } else if (ctx.command == "image") {
            run_image(ctx, cfg);
        } else if (ctx.command == "sync") {
            run_sync(ctx, cfg);
        } else if (ctx.command == "hcrb") {
            run_hcrb(ctx, cfg);
        } else if (ctx.command == "pcd") {
            run_pcd(ctx, cfg);
        } else if (ctx.command == "roc") {
            run_roc(ctx, cfg);
        } else if (ctx.command == "demo-fig3") {
            run_demo_fig3(ctx, cfg);
        }
        ctx.write_manifest();
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const FeasibilityError& e) {
        return fail("feasibility", e.what(), 3);
    } catch (const NumericalError& e) {
        return fail("numerical", e.what(), 3);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), 3);
    }
    return 0;
}
