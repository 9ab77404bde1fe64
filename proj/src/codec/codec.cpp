#include "rdis/codec.hpp"

#include <charconv>
#include <limits>

namespace rdis::codec {
namespace {

std::string field_list(const FieldValues& values) {
  std::string s;
  for (const auto& [k, v] : values) s += (s.empty() ? "" : ", ") + k;
  return s;
}

template <typename Names>
void check_coverage(const Names& names, const FieldValues& values) {
  std::size_t found = 0;
  for (const std::string& name : names) {
    if (values.count(name) == 0) throw CodecError("missing-field", "no value for field '" + name + "'");
    ++found;
  }
  if (found != values.size()) {
    FieldValues extra = values;
    for (const std::string& name : names) extra.erase(name);
    throw CodecError("unknown-field", "values name fields not in the format: " + field_list(extra));
  }
}

std::vector<std::string> positional_names(const PositionalFormat& f) {
  std::vector<std::string> names;
  names.reserve(f.fields.size());
  for (const auto& field : f.fields) names.push_back(field.name);
  return names;
}

Bytes encode_positional(const PositionalFormat& f, const FieldValues& values) {
  check_coverage(positional_names(f), values);
  Bytes frame(static_cast<std::size_t>(f.frame_len), 0);
  frame[0] = f.command;
  for (const auto& field : f.fields) {
    std::int64_t v = values.at(field.name);
    auto [lo, hi] = encoding_range(field.encoding);
    if (v < lo || v > hi) {
      throw CodecError("out-of-range", "value " + std::to_string(v) + " for field '" + field.name +
                                           "' is outside " + std::string(to_string(field.encoding)) +
                                           " range [" + std::to_string(lo) + ", " +
                                           std::to_string(hi) + "]");
    }
    auto raw = static_cast<std::uint16_t>(v);  // two's complement for signed encodings
    auto off = static_cast<std::size_t>(field.offset);
    if (field.width == 1) {
      frame[off] = static_cast<std::uint8_t>(raw & 0xff);
    } else {
      frame[off] = static_cast<std::uint8_t>(raw >> 8);
      frame[off + 1] = static_cast<std::uint8_t>(raw & 0xff);
    }
  }
  return frame;
}

FieldValues decode_positional(const PositionalFormat& f, std::span<const std::uint8_t> frame) {
  if (frame.size() != static_cast<std::size_t>(f.frame_len)) {
    throw CodecError("wrong-length", "frame has " + std::to_string(frame.size()) + " bytes, expected " +
                                         std::to_string(f.frame_len));
  }
  if (frame[0] != f.command) {
    throw CodecError("wrong-command", "command byte 0x" + to_hex(frame.first(1)) + " does not match 0x" +
                                          to_hex(std::span<const std::uint8_t>(&f.command, 1)));
  }
  FieldValues out;
  for (const auto& field : f.fields) {
    auto off = static_cast<std::size_t>(field.offset);
    std::int64_t v = 0;
    switch (field.encoding) {
      case Encoding::kU8: v = frame[off]; break;
      case Encoding::kI8: v = static_cast<std::int8_t>(frame[off]); break;
      case Encoding::kU16Be: v = (frame[off] << 8) | frame[off + 1]; break;
      case Encoding::kI16Be:
        v = static_cast<std::int16_t>(static_cast<std::uint16_t>((frame[off] << 8) | frame[off + 1]));
        break;
    }
    out[field.name] = v;
  }
  return out;
}

Bytes encode_delimited(const DelimitedFormat& f, const FieldValues& values) {
  check_coverage(f.fields, values);
  std::string line(1, f.prefix);
  for (const auto& name : f.fields) {
    line += f.separator;
    line += std::to_string(values.at(name));
  }
  line += f.terminator;
  return to_bytes(line);
}

FieldValues decode_delimited(const DelimitedFormat& f, std::span<const std::uint8_t> frame) {
  std::string_view text(reinterpret_cast<const char*>(frame.data()), frame.size());
  if (text.empty() || text.back() != f.terminator) {
    throw CodecError("bad-terminator", "frame does not end with the terminator");
  }
  text.remove_suffix(1);
  if (text.find(f.terminator) != std::string_view::npos) {
    throw CodecError("bad-terminator", "frame contains an interior terminator");
  }
  if (text.empty() || text.front() != f.prefix) {
    throw CodecError("wrong-command", std::string("frame does not start with prefix '") + f.prefix + "'");
  }
  text.remove_prefix(1);

  std::vector<std::string_view> tokens;
  if (!text.empty()) {
    if (text.front() != f.separator) {
      throw CodecError("wrong-command", std::string("prefix '") + f.prefix + "' is not followed by the separator");
    }
    text.remove_prefix(1);
    for (;;) {
      auto pos = text.find(f.separator);
      tokens.push_back(text.substr(0, pos));
      if (pos == std::string_view::npos) break;
      text.remove_prefix(pos + 1);
    }
  }
  if (tokens.size() != f.fields.size()) {
    throw CodecError("token-count", "frame carries " + std::to_string(tokens.size()) + " value(s), expected " +
                                        std::to_string(f.fields.size()));
  }
  FieldValues out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto tok = tokens[i];
    std::int64_t v = 0;
    const char* begin = tok.data();
    const char* end = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (tok.empty() || ec != std::errc{} || ptr != end) {
      throw CodecError("bad-numeral", "token '" + std::string(tok) + "' for field '" + f.fields[i] +
                                          "' is not a signed decimal integer");
    }
    out[f.fields[i]] = v;
  }
  return out;
}

}  // namespace

std::pair<std::int64_t, std::int64_t> encoding_range(Encoding e) {
  switch (e) {
    case Encoding::kU8: return {0, 255};
    case Encoding::kI8: return {-128, 127};
    case Encoding::kU16Be: return {0, 65535};
    case Encoding::kI16Be: return {-32768, 32767};
  }
  return {0, 0};
}

Bytes encode(const MessageFormat& format, const FieldValues& values) {
  if (const auto* pf = std::get_if<PositionalFormat>(&format)) return encode_positional(*pf, values);
  return encode_delimited(std::get<DelimitedFormat>(format), values);
}

FieldValues decode(const MessageFormat& format, std::span<const std::uint8_t> frame) {
  if (const auto* pf = std::get_if<PositionalFormat>(&format)) return decode_positional(*pf, frame);
  return decode_delimited(std::get<DelimitedFormat>(format), frame);
}

ScanResult frame_scan(const MessageFormat& format, std::span<const std::uint8_t> buffer) {
  ScanResult out;
  if (const auto* pf = std::get_if<PositionalFormat>(&format)) {
    auto len = static_cast<std::size_t>(pf->frame_len);
    std::size_t pos = 0;
    if (len > 0) {
      for (; pos + len <= buffer.size(); pos += len) {
        out.frames.emplace_back(buffer.begin() + static_cast<std::ptrdiff_t>(pos),
                                buffer.begin() + static_cast<std::ptrdiff_t>(pos + len));
      }
    }
    out.remainder.assign(buffer.begin() + static_cast<std::ptrdiff_t>(pos), buffer.end());
    return out;
  }
  auto term = static_cast<std::uint8_t>(std::get<DelimitedFormat>(format).terminator);
  std::size_t start = 0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (buffer[i] == term) {
      out.frames.emplace_back(buffer.begin() + static_cast<std::ptrdiff_t>(start),
                              buffer.begin() + static_cast<std::ptrdiff_t>(i + 1));
      start = i + 1;
    }
  }
  out.remainder.assign(buffer.begin() + static_cast<std::ptrdiff_t>(start), buffer.end());
  return out;
}

bool matches(const MessageFormat& format, std::span<const std::uint8_t> frame) {
  if (frame.empty()) return false;
  if (const auto* pf = std::get_if<PositionalFormat>(&format)) return frame[0] == pf->command;
  return frame[0] == static_cast<std::uint8_t>(std::get<DelimitedFormat>(format).prefix);
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(bytes.size() * 3);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    if (i != 0) s += ' ';
    s += kDigits[bytes[i] >> 4];
    s += kDigits[bytes[i] & 0xf];
  }
  return s;
}

std::string describe(const MessageFormat& format, std::span<const std::uint8_t> frame) {
  if (std::holds_alternative<PositionalFormat>(format)) return to_hex(frame);
  std::string s;
  for (auto b : frame) {
    if (b == '\n') {
      s += "\\n";
    } else if (b == '\r') {
      s += "\\r";
    } else if (b < 0x20 || b >= 0x7f) {
      s += "\\x" + to_hex(std::span<const std::uint8_t>(&b, 1));
    } else {
      s += static_cast<char>(b);
    }
  }
  return s;
}

}  // namespace rdis::codec
