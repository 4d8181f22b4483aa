#pragma once

#include <string>

#include "eid/tensor.hpp"

namespace eid {

// Raw tensor dump, "EIDTNSR1" format:
//   8-byte magic "EIDTNSR1", u8 dtype (0 = f32, 1 = f64), u8 ndim,
//   ndim x u32 dims, little-endian payload.
// Used for depth maps and debug dumps. Writers emit ndim = 4; the loader
// accepts ndim 1..4 and left-pads missing dimensions with 1.

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t);

template <typename T>
Tensor<T> load_tensor(const std::string& path);

}  // namespace eid
