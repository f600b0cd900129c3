#pragma once

namespace calibra {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace calibra
