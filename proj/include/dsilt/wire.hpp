#pragma once

// Frame layout (all integers little-endian):
//
//   "DSLT" | u32 header_len | header (JSON) | u64 payload_len | payload | u64 checksum
//
// The payload is a sequence of IEEE-754 doubles, vectors first, matrices
// row-major, in the order listed in the header's "blocks" array. The
// checksum is FNV-1a-64 over header bytes followed by payload bytes.

#include <cstdint>
#include <span>
#include <vector>

#include "dsilt/payloads.hpp"

namespace dsilt {

using Bytes = std::vector<std::uint8_t>;

std::uint64_t fnv1a64(std::span<const std::uint8_t> data,
                      std::uint64_t seed = 0xcbf29ce484222325ULL);

Bytes serialize(const MessageEnvelope& msg);

// Throws TruncatedFrameError, ChecksumError, VersionError, or FrameError for
// any other malformed input. Never reads past `frame`.
MessageEnvelope deserialize(std::span<const std::uint8_t> frame);

}  // namespace dsilt
