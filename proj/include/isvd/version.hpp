#pragma once

namespace isvd {
inline constexpr const char* kVersion = "0.1.0";
}
