#include <doctest.h>

#include "rdis/codec.hpp"
#include "test_support.hpp"

using namespace rdis;
using codec::Bytes;
using codec::FieldValues;

namespace {

PositionalFormat motor_format() {
  return PositionalFormat{8, 'M', {{"left", 1, 1, Encoding::kI8}, {"right", 2, 1, Encoding::kI8}}};
}

PositionalFormat encoder_reply() {
  return PositionalFormat{8, 'e', {{"left", 1, 2, Encoding::kI16Be}, {"right", 3, 2, Encoding::kI16Be}}};
}

DelimitedFormat delimited(char prefix, std::vector<std::string> fields) {
  DelimitedFormat f;
  f.prefix = prefix;
  f.fields = std::move(fields);
  return f;
}

std::string code_of(auto&& fn) {
  try {
    fn();
  } catch (const codec::CodecError& e) {
    return e.code();
  }
  return "";
}

// Independent packer: writes each value byte by byte from its unsigned image.
Bytes oracle_pack(const PositionalFormat& f, const FieldValues& v) {
  Bytes out(f.frame_len, 0);
  out[0] = f.command;
  for (const auto& field : f.fields) {
    std::uint64_t u = static_cast<std::uint64_t>(v.at(field.name));
    for (int i = 0; i < field.width; ++i)
      out[field.offset + i] = static_cast<std::uint8_t>(u >> (8 * (field.width - 1 - i)));
  }
  return out;
}

std::pair<std::int64_t, std::int64_t> oracle_range(Encoding e) {
  switch (e) {
    case Encoding::kU8: return {0, 255};
    case Encoding::kI8: return {-128, 127};
    case Encoding::kI16Be: return {-32768, 32767};
    case Encoding::kU16Be: return {0, 65535};
  }
  return {0, 0};
}

PositionalFormat random_positional() {
  PositionalFormat f;
  f.frame_len = static_cast<int>(test::uniform_int(1, 16));
  f.command = static_cast<std::uint8_t>(test::uniform_int(0, 255));
  int at = 1;
  int n = 0;
  while (at < f.frame_len) {
    at += static_cast<int>(test::uniform_int(0, 2));
    auto enc = static_cast<Encoding>(test::uniform_int(0, 3));
    int width = (enc == Encoding::kU8 || enc == Encoding::kI8) ? 1 : 2;
    if (at + width > f.frame_len) break;
    f.fields.push_back({"f" + std::to_string(n++), at, width, enc});
    at += width;
  }
  return f;
}

FieldValues random_values(const PositionalFormat& f) {
  FieldValues v;
  for (const auto& field : f.fields) {
    auto [lo, hi] = oracle_range(field.encoding);
    v[field.name] = test::uniform_int(lo, hi);
  }
  return v;
}

}  // namespace

TEST_CASE("positional encode") {
  auto frame = codec::encode(motor_format(), {{"left", 5}, {"right", -5}});
  CHECK(frame == Bytes{0x4D, 0x05, 0xFB, 0x00, 0x00, 0x00, 0x00, 0x00});
  CHECK(codec::to_hex(frame) == "4d 05 fb 00 00 00 00 00");
}

TEST_CASE("positional with no fields is command then zeros") {
  auto frame = codec::encode(PositionalFormat{8, 'K', {}}, {});
  CHECK(frame == Bytes{'K', 0, 0, 0, 0, 0, 0, 0});
}

TEST_CASE("delimited encode") {
  auto frame = codec::encode(delimited('D', {"left", "right"}), {{"left", 10}, {"right", -10}});
  CHECK(frame == codec::to_bytes("D,10,-10\n"));
  CHECK(codec::encode(delimited('K', {}), {}) == codec::to_bytes("K\n"));
}

TEST_CASE("encode errors") {
  CHECK(code_of([] { codec::encode(motor_format(), {{"left", 200}, {"right", 0}}); }) == "out-of-range");
  CHECK(code_of([] { codec::encode(motor_format(), {{"left", -129}, {"right", 0}}); }) == "out-of-range");
  CHECK(code_of([] { codec::encode(motor_format(), {{"left", 1}}); }) == "missing-field");
  CHECK(code_of([] { codec::encode(motor_format(), {{"left", 1}, {"right", 1}, {"speed", 1}}); }) == "unknown-field");
  CHECK(code_of([] { codec::encode(delimited('D', {"a"}), {}); }) == "missing-field");
}

TEST_CASE("positional decode") {
  Bytes frame{0x65, 0x00, 0x0A, 0xFF, 0xF6, 0x00, 0x00, 0x00};
  CHECK(codec::decode(encoder_reply(), frame) == FieldValues{{"left", 10}, {"right", -10}});
}

TEST_CASE("delimited decode") {
  CHECK(codec::decode(delimited('e', {"left", "right"}), codec::to_bytes("e,42,-7\n")) ==
        FieldValues{{"left", 42}, {"right", -7}});
  CHECK(codec::decode(delimited('k', {}), codec::to_bytes("k\n")).empty());
}

TEST_CASE("decode errors") {
  auto two = delimited('D', {"a", "b"});
  CHECK(code_of([&] { codec::decode(two, codec::to_bytes("D,1\n")); }) == "token-count");
  CHECK(code_of([&] { codec::decode(two, codec::to_bytes("D,1,2,3\n")); }) == "token-count");
  CHECK(code_of([&] { codec::decode(two, codec::to_bytes("D,1,x\n")); }) == "bad-numeral");
  CHECK(code_of([&] { codec::decode(two, codec::to_bytes("D,1,2")); }) == "bad-terminator");
  CHECK(code_of([&] { codec::decode(two, codec::to_bytes("E,1,2\n")); }) == "wrong-command");
  Bytes short_frame{0x65, 0x00};
  CHECK(code_of([&] { codec::decode(encoder_reply(), short_frame); }) == "wrong-length");
  Bytes wrong{0x66, 0, 0, 0, 0, 0, 0, 0};
  CHECK(code_of([&] { codec::decode(encoder_reply(), wrong); }) == "wrong-command");
}

TEST_CASE("frame_scan") {
  Bytes twelve(12, 0x65);
  auto r = codec::frame_scan(encoder_reply(), twelve);
  CHECK(r.frames.size() == 1);
  CHECK(r.remainder.size() == 4);

  auto d = codec::frame_scan(delimited('e', {"a", "b"}), codec::to_bytes("e,1,2\ne,3,"));
  REQUIRE(d.frames.size() == 1);
  CHECK(d.frames[0] == codec::to_bytes("e,1,2\n"));
  CHECK(d.remainder == codec::to_bytes("e,3,"));

  auto empty = codec::frame_scan(encoder_reply(), Bytes{});
  CHECK(empty.frames.empty());
  CHECK(empty.remainder.empty());
}

TEST_CASE("matches") {
  CHECK(codec::matches(encoder_reply(), Bytes{0x65, 0, 0, 0, 0, 0, 0, 0}));
  CHECK_FALSE(codec::matches(encoder_reply(), Bytes{0x45, 0, 0, 0, 0, 0, 0, 0}));
  CHECK(codec::matches(delimited('e', {}), codec::to_bytes("e,1\n")));
  CHECK_FALSE(codec::matches(delimited('e', {}), codec::to_bytes("d\n")));
}

TEST_CASE("encoding ranges") {
  for (int e = 0; e < 4; ++e) CHECK(codec::encoding_range(Encoding(e)) == oracle_range(Encoding(e)));
}

TEST_CASE("property: positional encode matches an independent packer and round-trips") {
  for (int i = 0; i < 10000; ++i) {
    auto f = random_positional();
    auto v = random_values(f);
    auto frame = codec::encode(f, v);
    REQUIRE(frame == oracle_pack(f, v));
    REQUIRE(codec::decode(f, frame) == v);
  }
}

TEST_CASE("property: delimited encode matches string building and round-trips") {
  for (int i = 0; i < 10000; ++i) {
    char prefix = static_cast<char>('A' + test::uniform_int(0, 25));
    std::vector<std::string> names;
    FieldValues v;
    std::string oracle(1, prefix);
    for (int k = 0, n = static_cast<int>(test::uniform_int(0, 5)); k < n; ++k) {
      names.push_back("f" + std::to_string(k));
      auto x = test::uniform_int(-1'000'000'000, 1'000'000'000);
      v[names.back()] = x;
      oracle += "," + std::to_string(x);
    }
    oracle += "\n";
    auto f = delimited(prefix, names);
    auto frame = codec::encode(f, v);
    REQUIRE(frame == codec::to_bytes(oracle));
    REQUIRE(codec::decode(f, frame) == v);
  }
}

TEST_CASE("property: chunked scanning reassembles the stream") {
  for (int round = 0; round < 300; ++round) {
    bool positional = test::uniform_int(0, 1) == 1;
    MessageFormat f = positional ? MessageFormat(random_positional()) : MessageFormat(delimited('e', {"a", "b"}));
    std::vector<Bytes> sent;
    Bytes stream;
    for (int k = 0, n = static_cast<int>(test::uniform_int(0, 20)); k < n; ++k) {
      Bytes frame;
      if (positional) {
        const auto& pf = std::get<PositionalFormat>(f);
        frame = codec::encode(pf, random_values(pf));
      } else {
        frame = codec::encode(f, {{"a", test::uniform_int(-999, 999)}, {"b", test::uniform_int(-999, 999)}});
      }
      sent.push_back(frame);
      stream.insert(stream.end(), frame.begin(), frame.end());
    }

    // Feed in random chunks, carrying the remainder like a reader would.
    std::vector<Bytes> got;
    Bytes pending;
    std::size_t at = 0;
    while (at < stream.size()) {
      auto n = static_cast<std::size_t>(test::uniform_int(1, 11));
      n = std::min(n, stream.size() - at);
      pending.insert(pending.end(), stream.begin() + at, stream.begin() + at + n);
      at += n;
      auto r = codec::frame_scan(f, pending);
      Bytes joined;
      for (auto& fr : r.frames) {
        joined.insert(joined.end(), fr.begin(), fr.end());
        got.push_back(std::move(fr));
      }
      joined.insert(joined.end(), r.remainder.begin(), r.remainder.end());
      REQUIRE(joined == pending);
      pending = r.remainder;
    }
    CHECK(pending.empty());
    CHECK(got == sent);
  }
}
