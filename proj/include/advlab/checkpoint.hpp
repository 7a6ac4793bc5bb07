#pragma once

#include <string>

#include "advlab/optim.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

// Flat binary weight file: magic "ADVL", version u32, tensor count u32, then
// per tensor: name length u16 + bytes, rank u8, dims u32 each, payload as
// little-endian f64. Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ParamMap& tensors);
ParamMap load_checkpoint(const std::string& path);

}  // namespace advlab
