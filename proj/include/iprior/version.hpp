#pragma once

namespace iprior {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace iprior
