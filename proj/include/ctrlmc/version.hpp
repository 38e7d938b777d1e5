#pragma once

namespace ctrlmc {
inline constexpr const char* kVersion = "0.1.0";
}
