#pragma once

namespace inflkit {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace inflkit
