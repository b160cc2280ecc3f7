#pragma once

// Hand-written byte fixtures for the two binary formats. Little-endian.

#include <cstdint>
#include <vector>

namespace capel::fixtures {

// Embedding file: 2 rows, D=3, labels present.
// rows (1,0,0) and (0,0.6,0.8); labels 1, 0.
inline const std::vector<std::uint8_t> kEmbedding2x3 = {
    0x43, 0x41, 0x50, 0x45,  // "CAPE"
    0x01, 0x00, 0x00, 0x00,  // version 1
    0x02, 0x00, 0x00, 0x00,  // N = 2
    0x03, 0x00, 0x00, 0x00,  // D = 3
    0x01,                    // flags: labels
    0x00, 0x00, 0x80, 0x3f,  // 1.0f
    0x00, 0x00, 0x00, 0x00,  // 0.0f
    0x00, 0x00, 0x00, 0x00,  // 0.0f
    0x00, 0x00, 0x00, 0x00,  // 0.0f
    0x9a, 0x99, 0x19, 0x3f,  // 0.6f
    0xcd, 0xcc, 0x4c, 0x3f,  // 0.8f
    0x01, 0x00, 0x00, 0x00,  // label 1
    0x00, 0x00, 0x00, 0x00,  // label 0
};

// Checkpoint: Y=1, K=2, D=2, tau=100, W = (1,0),(0,1), alpha = (0.5, 0.5).
inline const std::vector<std::uint8_t> kCheckpoint1x2x2 = {
    0x43, 0x41, 0x50, 0x43,  // "CAPC"
    0x01, 0x00, 0x00, 0x00,  // version 1
    0x01, 0x00, 0x00, 0x00,  // Y = 1
    0x02, 0x00, 0x00, 0x00,  // K = 2
    0x02, 0x00, 0x00, 0x00,  // D = 2
    0x00, 0x00, 0xc8, 0x42,  // tau = 100.0f
    0x00, 0x00, 0x00, 0x00,  // flags
    0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0x00,  // w(0,0)
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x80, 0x3f,  // w(0,1)
    0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x00, 0x3f,  // alpha
};

inline std::vector<std::uint8_t> with_byte(std::vector<std::uint8_t> bytes, std::size_t at,
                                           std::uint8_t value) {
  bytes.at(at) = value;
  return bytes;
}

}  // namespace capel::fixtures
