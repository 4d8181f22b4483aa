#pragma once

#include <string>
#include <utility>
#include <vector>

#include "eid/network.hpp"

namespace eid {

// Checkpoint container, "EIDCKPT1" format:
//   8-byte magic "EIDCKPT1", u32 tensor count, then per tensor:
//   u16 name length, UTF-8 name, u8 ndim, ndim x u32 dims,
//   little-endian f32 payload.
// Parameters are written in store order; each parameter with optimizer
// state is followed by "<name>.adam.m" and "<name>.adam.v"; a global "step"
// scalar comes last. Extra scalar entries (e.g. a "frozen" marker) may be
// appended by the writer and are exposed on load.

template <typename T>
void save_checkpoint(
    const std::string& path, const ParamStore<T>& params,
    const std::vector<std::pair<std::string, float>>& extra_scalars = {});

template <typename T>
struct LoadedCheckpoint {
  ParamStore<T> params;
  std::vector<std::pair<std::string, float>> extra_scalars;
};

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path);

/// Whole-file byte equality; used to assert frozen operators stay frozen.
bool files_byte_equal(const std::string& a, const std::string& b);
std::vector<unsigned char> read_file_bytes(const std::string& path);

}  // namespace eid
