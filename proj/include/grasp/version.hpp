#pragma once

namespace grasp {

inline constexpr const char* kVersion = "grasp 0.1.0";

} // namespace grasp
