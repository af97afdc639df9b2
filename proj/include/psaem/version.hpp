#pragma once

namespace psaem {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace psaem
