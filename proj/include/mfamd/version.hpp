#pragma once

namespace mfamd {

inline constexpr const char* kMfamdVersion = "0.1.0";

}  // namespace mfamd
