#pragma once

#include <string>

#include "titlegen/training/training.hpp"

namespace titlegen::training {

// Checkpoint file layout, version 1:
//   bytes 0..3   magic "SSQ1"
//   bytes 4..5   format version, u16 little-endian
//   bytes 6..13  metadata length, u64 little-endian
//   metadata     JSON: model config, parameter manifest (names + shapes),
//                both vocabularies, training metadata
//   payload      raw little-endian f64 parameter values in manifest order
// Loading is bit-exact for parameters and vocabularies. Corruption, version
// mismatch and truncation raise distinct errors; nothing partial is returned.
inline constexpr char kCheckpointMagic[4] = {'S', 'S', 'Q', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace titlegen::training
