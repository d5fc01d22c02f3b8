#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "netsar/imaging.hpp"
#include "netsar/scene.hpp"
#include "netsar/waveform.hpp"

namespace netsar::io {

/// Scene scenario file: {"sensors": [{id, center, orientation, elements,
/// carrier_hz, bandwidth_hz, clock: {kappa_s, beta, alpha_rad}}],
/// "targets": [{pos, magnitude, phase_rad}], "noise_psd": x}.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
Scene load_scene(const std::filesystem::path& path);
void save_scene(const Scene& scene, const std::filesystem::path& path);

/// Range-profile container: one-line JSON header
/// {"n","m","l","k","t0","dt","len","beta_hat"} + '\n' + little-endian float32
/// interleaved (re, im). File name rp_n{n}_m{m}_l{l}_k{k}.cpx.
void save_profile(const RangeProfile& profile, const std::filesystem::path& path);
RangeProfile load_profile(const std::filesystem::path& path);
std::string profile_filename(const PairIndex& pair);

/// Complex image container: one-line JSON header
/// {"nx","ny","x0","y0","dx","dy","n","m"} + '\n' + little-endian float32
/// interleaved (re, im), row-major with x fastest.
void save_image(const ComplexImage& image, const std::filesystem::path& path);
ComplexImage load_image(const std::filesystem::path& path);

/// Deterministic text formatting for CSV artifacts (round-trip precision).
std::string format_double(double v);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

/// FNV-1a 64-bit content hash, hex encoded. Used by run manifests.
std::string fnv1a_hex(const std::filesystem::path& path);

}  // namespace netsar::io
