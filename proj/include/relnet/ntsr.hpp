#pragma once

#include <string>
#include <utility>
#include <vector>

#include "relnet/tensor.hpp"

namespace relnet {

// Named-tensor container.
// Layout, all little-endian: "NTSR", u8 version=1, u32 entry count; per entry
// u32 name length, UTF-8 name bytes, u8 rank, rank x u32 dims, then
// product(dims) x f32 values. f64 tensors are narrowed to f32 on write.
using NtsrEntries = std::vector<std::pair<std::string, Tensor>>;

void ntsr_write(const std::string& path, const NtsrEntries& entries);
NtsrEntries ntsr_read(const std::string& path);

}  // namespace relnet
