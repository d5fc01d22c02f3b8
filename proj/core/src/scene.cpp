#include "netsar/scene.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "netsar/errors.hpp"
#include "netsar/random.hpp"

namespace netsar {

void Scene::validate() const {
    if (sensors.empty()) throw ConfigError("scene: at least one sensor required");
    if (targets.empty()) throw ConfigError("scene: at least one target required");
    std::set<int> ids;
    for (const auto& s : sensors) {
        if (!ids.insert(s.id).second)
            throw ConfigError("scene: duplicate sensor id " + std::to_string(s.id));
        if (s.element_offsets.empty())
            throw ConfigError("scene: sensor " + std::to_string(s.id) + " has no elements");
        if (s.carrier <= 0.0)
            throw ConfigError("scene: sensor " + std::to_string(s.id) + " carrier must be > 0");
        if (s.bandwidth <= 0.0)
            throw ConfigError("scene: sensor " + std::to_string(s.id) + " bandwidth must be > 0");
        if (s.bandwidth >= s.carrier)
            throw ConfigError("scene: sensor " + std::to_string(s.id) + " bandwidth >= carrier");
    }
    // FDM: carrier bands [f - B/2, f + B/2] must be pairwise disjoint.
    for (std::size_t i = 0; i < sensors.size(); ++i) {
        for (std::size_t j = i + 1; j < sensors.size(); ++j) {
            const auto& a = sensors[i];
            const auto& b = sensors[j];
            const double lo_a = a.carrier - a.bandwidth / 2, hi_a = a.carrier + a.bandwidth / 2;
            const double lo_b = b.carrier - b.bandwidth / 2, hi_b = b.carrier + b.bandwidth / 2;
            if (hi_a > lo_b && hi_b > lo_a)
                throw ConfigError("scene: FDM bands of sensors " + std::to_string(a.id) + " and " +
                                  std::to_string(b.id) + " overlap");
        }
    }
    for (const auto& t : targets) {
        if (t.magnitude < 0.0) throw ConfigError("scene: target magnitude must be >= 0");
        if (t.phase < -kPi || t.phase >= kPi)
            throw ConfigError("scene: target phase must lie in [-pi, pi)");
    }
}

const Sensor& Scene::sensor_by_id(int id) const { return sensors[sensor_index(id)]; }

std::size_t Scene::sensor_index(int id) const {
    for (std::size_t i = 0; i < sensors.size(); ++i)
        if (sensors[i].id == id) return i;
    throw ConfigError("scene: unknown sensor id " + std::to_string(id));
}

double Scene::pairwise_kappa(int tx_id, int rx_id) const {
    if (tx_id == rx_id) return 0.0;
    return sensor_by_id(tx_id).clock.kappa - sensor_by_id(rx_id).clock.kappa;
}

double Scene::pairwise_beta(int tx_id, int rx_id) const {
    if (tx_id == rx_id) return 0.0;
    return sensor_by_id(tx_id).clock.beta - sensor_by_id(rx_id).clock.beta;
}

double Scene::pairwise_alpha(int tx_id, int rx_id) const {
    if (tx_id == rx_id) return 0.0;
    return sensor_by_id(tx_id).clock.alpha - sensor_by_id(rx_id).clock.alpha;
}

double tof(const Vec2& tx_element, const Vec2& rx_element, const Vec2& point, double wave_speed) {
    return (distance(point, tx_element) + distance(rx_element, point)) / wave_speed;
}

double apparent_tof(double tof_s, const ClockModel& tx_clock, double pair_kappa) {
    return (1.0 + tx_clock.beta) * tof_s + pair_kappa;
}

std::vector<Vec2> element_positions(const Sensor& sensor) {
    std::vector<Vec2> out;
    out.reserve(sensor.element_offsets.size());
    for (const auto& off : sensor.element_offsets)
        out.push_back(sensor.phase_center + rotate(off, sensor.orientation));
    return out;
}

namespace {

std::vector<Vec2> centered_linear_offsets(int count, double spacing) {
    std::vector<Vec2> offsets;
    offsets.reserve(count);
    const double half = 0.5 * spacing * (count - 1);
    for (int i = 0; i < count; ++i) offsets.emplace_back(i * spacing - half, 0.0);
    return offsets;
}

}  // namespace

Scene random_scenario(std::uint64_t rng_seed, const ScenarioParams& p) {
    if (p.n_sensors < 1 || p.n_targets < 1)
        throw ConfigError("random_scenario: need at least one sensor and one target");
    if (p.n_sensors * p.sensor_min_spacing > p.sensor_span_x)
        throw FeasibilityError("random_scenario: " + std::to_string(p.n_sensors) +
                               " sensors with min spacing " + std::to_string(p.sensor_min_spacing) +
                               " m do not fit a " + std::to_string(p.sensor_span_x) + " m span");

    Rng rng(derive_seed(rng_seed, 0x5ce0e9a5ULL));

    // Sensor x positions: uniform over the span, pairwise spacing >= min, by rejection.
    std::vector<double> xs(p.n_sensors);
    bool ok = false;
    for (int attempt = 0; attempt < p.max_attempts && !ok; ++attempt) {
        for (auto& x : xs) x = rng.uniform(-p.sensor_span_x / 2, p.sensor_span_x / 2);
        std::vector<double> sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        ok = true;
        for (std::size_t i = 1; i < sorted.size(); ++i)
            if (sorted[i] - sorted[i - 1] < p.sensor_min_spacing) {
                ok = false;
                break;
            }
    }
    if (!ok) throw FeasibilityError("random_scenario: sensor placement attempt budget exhausted");

    Scene scene;
    scene.noise_psd = p.noise_psd;
    scene.sensors.reserve(p.n_sensors);
    for (int n = 0; n < p.n_sensors; ++n) {
        Sensor s;
        s.id = n + 1;
        s.phase_center = {xs[n], p.sensor_y};
        s.orientation = p.sensor_orientation;
        s.element_offsets = centered_linear_offsets(p.elements_per_sensor, p.element_spacing);
        s.carrier = p.carrier_base + n * p.carrier_step;
        s.bandwidth = p.bandwidth;
        scene.sensors.push_back(std::move(s));
    }

    scene.targets.reserve(p.n_targets);
    bool targets_ok = false;
    for (int restart = 0; restart < 64 && !targets_ok; ++restart) {
        scene.targets.clear();
        targets_ok = true;
        for (int q = 0; q < p.n_targets; ++q) {
            Vec2 pos;
            bool placed = false;
            for (int attempt = 0; attempt < p.max_attempts && !placed; ++attempt) {
                pos = {rng.uniform(p.target_x_min, p.target_x_max),
                       rng.uniform(p.target_y_min, p.target_y_max)};
                placed = true;
                if (p.target_min_separation > 0.0) {
                    for (const auto& t : scene.targets)
                        if (distance(t.position, pos) < p.target_min_separation) {
                            placed = false;
                            break;
                        }
                }
            }
            if (!placed) {
                targets_ok = false;  // dead-end packing; redraw the whole set
                break;
            }
            Target t;
            t.position = pos;
            t.magnitude = p.target_magnitude * (q == 0 ? p.strong_target_boost : 1.0);
            t.phase = p.random_target_phase ? rng.uniform(-kPi, kPi) : 0.0;
            scene.targets.push_back(t);
        }
    }
    if (!targets_ok)
        throw FeasibilityError("random_scenario: target placement attempt budget exhausted");

    scene.validate();
    return scene;
}

}  // namespace netsar
