#pragma once

namespace dcg {
inline constexpr const char* kVersion = "0.1.0";
}
