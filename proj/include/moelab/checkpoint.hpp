#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "moelab/moe.hpp"

namespace moelab {

// Checkpoint layout, fixed so independent implementations interoperate:
//   bytes 0..7    magic "MOECKPT1"
//   bytes 8..15   little-endian uint64 JSON header length L
//   bytes 16..    L bytes of UTF-8 JSON (config, shapes, seed provenance,
//                 endianness tag)
//   then raw little-endian float64 arrays, column-major within each matrix,
//   in declared order: routing (m x d), bias (m), A_1..A_m (d x w each),
//   B_1..B_m (d x w each).
void save_checkpoint(const MoELayer& layer, const std::string& path,
                     std::uint64_t seed_provenance = 0);

MoELayer load_checkpoint(const std::string& path);

// Header JSON without reading the payload (for tooling).
nlohmann::json read_checkpoint_header(const std::string& path);

} // namespace moelab
