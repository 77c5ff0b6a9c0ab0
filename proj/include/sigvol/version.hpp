#pragma once

namespace sigvol {

inline constexpr const char* kVersionString = "sigvol 0.1.0";

}  // namespace sigvol
