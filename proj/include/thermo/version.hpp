#pragma once

namespace thermo {

inline constexpr const char* kToolName = "thermoscreen";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kPrngName = "splitmix64";
inline constexpr const char* kCheckpointMagic = "THML";
inline constexpr unsigned kCheckpointVersion = 1;

}  // namespace thermo
