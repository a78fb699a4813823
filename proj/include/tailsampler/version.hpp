#pragma once

namespace tailsampler {

inline constexpr const char* kToolName = "tailsampler";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace tailsampler
