#pragma once

// Firmware frame encoding for positional (fixed-length binary) and
// delimited (ASCII line) message formats.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rdis/error.hpp"
#include "rdis/model.hpp"

namespace rdis::codec {

using Bytes = std::vector<std::uint8_t>;
using FieldValues = std::map<std::string, std::int64_t>;

/// Codes: "missing-field", "unknown-field", "out-of-range", "wrong-command",
/// "wrong-length", "bad-numeral", "token-count", "bad-terminator".
class CodecError : public Error {
 public:
  using Error::Error;
};

Bytes encode(const MessageFormat& format, const FieldValues& values);

FieldValues decode(const MessageFormat& format, std::span<const std::uint8_t> frame);

struct ScanResult {
  std::vector<Bytes> frames;
  Bytes remainder;
};

/// Splits a byte stream into complete frames. Never fails; malformed frames
/// surface when decoded.
ScanResult frame_scan(const MessageFormat& format, std::span<const std::uint8_t> buffer);

/// True if `frame` carries the command byte / prefix of `format`.
bool matches(const MessageFormat& format, std::span<const std::uint8_t> frame);

/// Inclusive value range of an encoding.
std::pair<std::int64_t, std::int64_t> encoding_range(Encoding e);

/// Hex ("4d 05 fb") for positional frames, escaped text for delimited ones.
std::string describe(const MessageFormat& format, std::span<const std::uint8_t> frame);
std::string to_hex(std::span<const std::uint8_t> bytes);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

}  // namespace rdis::codec
