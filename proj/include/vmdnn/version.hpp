#pragma once

namespace vmdnn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vmdnn
