#pragma once

namespace arhuaco {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kModelFormat = "arh-1";

}  // namespace arhuaco
