#pragma once

// Parameter checkpoint file:
//   magic "PLCK" | version u32 | count u32
//   per parameter: name_len u32, UTF-8 name, rank u32, extents u32[rank],
//                  f64 data little-endian.

#include <string>

#include "priorlane/params.hpp"

namespace priorlane {

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const ParamMap& params);

// Loads into an existing map: every stored parameter must match a registered
// name and shape, and every registered parameter must be present.
void load_checkpoint(const std::string& path, ParamMap& params);

}  // namespace priorlane
