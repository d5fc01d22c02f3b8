#pragma once

namespace netsar {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace netsar
