#pragma once

namespace peval {
inline constexpr const char* kVersion = "0.1.0";
}
