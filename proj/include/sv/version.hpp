#pragma once

namespace sv {
inline constexpr const char* kVersion = "0.1.0";
}
