#include "netsar/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "netsar/errors.hpp"

namespace netsar::io {

using nlohmann::json;

namespace {

json vec2_to_json(const Vec2& v) { return json::array({v.x, v.y}); }

Vec2 vec2_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2)
        throw ConfigError(std::string("scene json: ") + what + " must be a [x, y] array");
    return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
    json root;
    root["sensors"] = json::array();
    for (const auto& s : scene.sensors) {
        json js;
        js["id"] = s.id;
        js["center"] = vec2_to_json(s.phase_center);
        js["orientation"] = s.orientation;
        js["elements"] = json::array();
        for (const auto& e : s.element_offsets) js["elements"].push_back(vec2_to_json(e));
        js["carrier_hz"] = s.carrier;
        js["bandwidth_hz"] = s.bandwidth;
        js["clock"] = {{"kappa_s", s.clock.kappa}, {"beta", s.clock.beta},
                       {"alpha_rad", s.clock.alpha}};
        root["sensors"].push_back(std::move(js));
    }
    root["targets"] = json::array();
    for (const auto& t : scene.targets) {
        root["targets"].push_back({{"pos", vec2_to_json(t.position)},
                                   {"magnitude", t.magnitude},
                                   {"phase_rad", t.phase}});
    }
    root["noise_psd"] = scene.noise_psd;
    return root.dump(2);
}

Scene scene_from_json(const std::string& text) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene json: parse failure: ") + e.what());
    }
    Scene scene;
    try {
        for (const auto& js : root.at("sensors")) {
            Sensor s;
            s.id = js.at("id").get<int>();
            s.phase_center = vec2_from_json(js.at("center"), "center");
            s.orientation = js.value("orientation", 0.0);
            for (const auto& je : js.at("elements"))
                s.element_offsets.push_back(vec2_from_json(je, "element"));
            s.carrier = js.at("carrier_hz").get<double>();
            s.bandwidth = js.at("bandwidth_hz").get<double>();
            if (js.contains("clock")) {
                const auto& jc = js.at("clock");
                s.clock = ClockModel(jc.value("kappa_s", 0.0), jc.value("beta", 0.0),
                                     jc.value("alpha_rad", 0.0));
            }
            scene.sensors.push_back(std::move(s));
        }
        for (const auto& jt : root.at("targets")) {
            Target t;
            t.position = vec2_from_json(jt.at("pos"), "pos");
            t.magnitude = jt.value("magnitude", 1.0);
            t.phase = jt.value("phase_rad", 0.0);
            scene.targets.push_back(t);
        }
        scene.noise_psd = root.value("noise_psd", 0.0);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene json: missing or invalid key: ") + e.what());
    }
    scene.validate();
    return scene;
}

Scene load_scene(const std::filesystem::path& path) { return scene_from_json(read_text_file(path)); }

void save_scene(const Scene& scene, const std::filesystem::path& path) {
    write_text_file(path, scene_to_json(scene));
}

namespace {

void write_float32_interleaved(std::ofstream& out, const std::vector<cdouble>& samples) {
    std::vector<float> buf(samples.size() * 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        buf[2 * i] = float(samples[i].real());
        buf[2 * i + 1] = float(samples[i].imag());
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
}

std::vector<cdouble> read_float32_interleaved(std::ifstream& in, std::size_t count) {
    std::vector<float> buf(count * 2);
    in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * sizeof(float)));
    if (!in) throw ConfigError("binary payload truncated");
    std::vector<cdouble> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = cdouble(buf[2 * i], buf[2 * i + 1]);
    return out;
}

}  // namespace

std::string profile_filename(const PairIndex& pair) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "rp_n%d_m%d_l%d_k%d.cpx", pair.tx_id, pair.rx_id,
                  pair.tx_element, pair.rx_element);
    return buf;
}

void save_profile(const RangeProfile& profile, const std::filesystem::path& path) {
    json header = {{"n", profile.pair.tx_id},   {"m", profile.pair.rx_id},
                   {"l", profile.pair.tx_element}, {"k", profile.pair.rx_element},
                   {"t0", profile.t0},          {"dt", profile.dt},
                   {"len", profile.samples.size()}, {"beta_hat", profile.beta_hat_applied},
                   {"carrier_hz", profile.carrier}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << header.dump() << "\n";
    write_float32_interleaved(out, profile.samples);
}

RangeProfile load_profile(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw ConfigError("profile header: " + std::string(e.what()));
    }
    RangeProfile p;
    p.pair.tx_id = header.at("n").get<int>();
    p.pair.rx_id = header.at("m").get<int>();
    p.pair.tx_element = header.at("l").get<int>();
    p.pair.rx_element = header.at("k").get<int>();
    p.t0 = header.at("t0").get<double>();
    p.dt = header.at("dt").get<double>();
    p.beta_hat_applied = header.at("beta_hat").get<double>();
    p.carrier = header.value("carrier_hz", 0.0);
    p.samples = read_float32_interleaved(in, header.at("len").get<std::size_t>());
    return p;
}

void save_image(const ComplexImage& image, const std::filesystem::path& path) {
    json header = {{"nx", image.grid.nx}, {"ny", image.grid.ny}, {"x0", image.grid.x0},
                   {"y0", image.grid.y0}, {"dx", image.grid.dx}, {"dy", image.grid.dy},
                   {"n", image.tx_id},    {"m", image.rx_id}};
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << header.dump() << "\n";
    write_float32_interleaved(out, image.values);
}

ComplexImage load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw ConfigError("image header: " + std::string(e.what()));
    }
    ComplexImage img;
    img.grid.nx = header.at("nx").get<int>();
    img.grid.ny = header.at("ny").get<int>();
    img.grid.x0 = header.at("x0").get<double>();
    img.grid.y0 = header.at("y0").get<double>();
    img.grid.dx = header.at("dx").get<double>();
    img.grid.dy = header.at("dy").get<double>();
    img.tx_id = header.at("n").get<int>();
    img.rx_id = header.at("m").get<int>();
    img.values = read_float32_interleaved(in, img.grid.size());
    return img;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    out << content;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

std::string fnv1a_hex(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (in) {
        in.read(buf, sizeof(buf));
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= std::uint64_t(static_cast<unsigned char>(buf[i]));
            hash *= 0x100000001b3ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash));
    return hex;
}

}  // namespace netsar::io
