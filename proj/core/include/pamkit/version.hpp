#pragma once

namespace pamkit {

inline constexpr const char* kVersion = "0.1.0";

/// Identifier of the pinned pseudo-random generator stack. Recorded in every
/// run-config so results can be audited and reproduced in other languages.
inline constexpr const char* kPrngId = "xoshiro256++(seed:splitmix64)";

}  // namespace pamkit
