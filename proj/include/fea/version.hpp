#pragma once

namespace fea {
inline constexpr const char* kVersion = "0.1.0";
}
