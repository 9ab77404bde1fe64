#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <regex>

#include "rdis/codec.hpp"
#include "rdis/codegen.hpp"
#include "test_support.hpp"

using namespace rdis;
using nlohmann::json;

namespace {

std::string template_code(std::string_view text, const json& ctx) {
  try {
    codegen::render(text, ctx);
  } catch (const codegen::TemplateError& e) {
    return e.code();
  }
  return "";
}

std::string error_code(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

std::size_t count_matches(const std::string& text, const std::string& pattern) {
  std::regex re(pattern, std::regex::multiline);
  return std::distance(std::sregex_iterator(text.begin(), text.end(), re), std::sregex_iterator());
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rdis_codegen_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string run(const std::string& cmd) {
  std::string out;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[512];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  int rc = ::pclose(p);
  INFO("command: " << cmd << "\noutput:\n" << out);
  REQUIRE(rc == 0);
  return out;
}

}  // namespace

TEST_CASE("template: values, sections and iteration") {
  json ctx = {{"name", "bot"},
              {"n", 3},
              {"x", 0.1},
              {"on", true},
              {"off", false},
              {"xs", {{{"v", "a"}}, {{"v", "b"}}, {{"v", "c"}}}},
              {"o", {{"p", {{"q", "deep"}}}}}};
  CHECK(codegen::render("hi {{name}} {{n}} {{x}} {{on}}", ctx) == "hi bot 3 0.1 true");
  CHECK(codegen::render("{{o.p.q}}", ctx) == "deep");
  CHECK(codegen::render("{{#each xs}}{{@index}}{{v}}{{#unless @last}},{{/unless}}{{/each}}", ctx) == "0a,1b,2c");
  CHECK(codegen::render("{{#each xs}}{{#if @first}}[{{/if}}{{v}}{{/each}}", ctx) == "[abc");
  CHECK(codegen::render("{{#if off}}y{{else}}n{{/if}}", ctx) == "n");
  CHECK(codegen::render("{{#if e}}y{{else}}n{{/if}}{{#if s}}y{{/if}}", json{{"e", ""}, {"s", "x"}}) == "ny");
  CHECK(codegen::render("{{#each xs}}{{name}}{{/each}}", ctx) == "botbotbot");
  CHECK(codegen::render("{{#each ys}}{{this}}{{/each}}", json{{"ys", {1, 2}}}) == "12");
}

TEST_CASE("template: standalone block lines vanish") {
  json ctx = {{"xs", {1, 2}}, {"t", true}};
  CHECK(codegen::render("a\n{{#each xs}}\n  {{this}}\n{{/each}}\nb\n", ctx) == "a\n  1\n  2\nb\n");
  CHECK(codegen::render("a\n  {{#if t}}\nyes\n  {{else}}\nno\n{{/if}}\n", ctx) == "a\nyes\n");
  CHECK(codegen::render("x {{#if t}}y{{/if}} z\n", ctx) == "x y z\n");
}

TEST_CASE("template: errors") {
  json ctx = {{"xs", {1}}, {"o", json::object()}};
  CHECK(template_code("{{missing}}", ctx) == "unknown-placeholder");
  CHECK(template_code("{{o.nope}}", ctx) == "unknown-placeholder");
  CHECK(template_code("{{@index}}", ctx) == "unknown-placeholder");
  CHECK(template_code("{{xs}}", ctx) == "bad-placeholder");
  CHECK(template_code("{{#each o}}{{/each}}", ctx) == "bad-placeholder");
  CHECK(template_code("{{#each xs}}", ctx) == "template-syntax");
  CHECK(template_code("{{#if xs}}{{/each}}", ctx) == "template-syntax");
  CHECK(template_code("{{/if}}", ctx) == "template-syntax");
  CHECK(template_code("{{else}}", ctx) == "template-syntax");
  CHECK(template_code("{{#loop xs}}{{/loop}}", ctx) == "template-syntax");
  CHECK(template_code("{{name", ctx) == "template-syntax");
  try {
    codegen::render("ok\nok\n{{#each xs}}\n", ctx);
    FAIL("expected an error");
  } catch (const codegen::TemplateError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("targets") {
  auto ts = codegen::list_targets();
  REQUIRE(ts.size() == 1);
  CHECK(ts[0].id == "c-cli");
  auto doc = test::load_valid(test::device("finchling"));
  CHECK(error_code([&] { codegen::generate(doc, "rust-crate"); }) == "unknown-target");
}

TEST_CASE("content hash is SHA-256 of the canonical text") {
  auto doc = test::load_valid(test::device("finchling"));
  auto h = codegen::content_hash(doc);
  CHECK(h.size() == 64);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  auto dir = scratch("hash");
  std::ofstream(dir / "canon.json", std::ios::binary) << canonicalize(doc);
  auto out = run("sha256sum " + (dir / "canon.json").string());
  CHECK(out.substr(0, 64) == h);
  auto moved = doc;
  moved.constants["wheel_track_m"] = 0.11;
  CHECK(codegen::content_hash(moved) != h);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generation is deterministic and matches the goldens") {
  for (const std::string name : {"finchling", "koalette"}) {
    CAPTURE(name);
    auto doc = test::load_valid(test::device(name));
    auto a = codegen::generate(doc, "c-cli");
    auto b = codegen::generate(test::load_valid(test::device(name)), "c-cli");
    CHECK(a.files == b.files);
    REQUIRE(a.files.size() == 2);
    for (const auto& [rel, text] : a.files) {
      auto golden = test::source_dir() / "tests" / "golden" / "c-cli" / name / rel;
      if (std::getenv("RDIS_UPDATE_GOLDEN") != nullptr) {
        std::filesystem::create_directories(golden.parent_path());
        std::ofstream(golden, std::ios::binary) << text;
      }
      CAPTURE(rel);
      CHECK(text == test::read_file(golden));
    }
  }
}

TEST_CASE("every primitive and interface gets exactly one function") {
  for (const std::string name : {"finchling", "koalette"}) {
    CAPTURE(name);
    auto doc = test::load_valid(test::device(name));
    auto main_c = codegen::generate(doc, "c-cli").files.at("main.c");
    for (const auto& p : doc.primitives) {
      CAPTURE(p.name);
      CHECK(count_matches(main_c, "^static int " + p.name + "\\(") == 1);
    }
    for (const auto& i : doc.interfaces) {
      CAPTURE(i.name);
      CHECK(count_matches(main_c, "^static int iface_" + i.name + "\\(") == 1);
    }
    CHECK(main_c.find(codegen::content_hash(doc)) != std::string::npos);
  }
}

TEST_CASE("wire details reach the generated code") {
  auto finch = codegen::generate(test::load_valid(test::device("finchling")), "c-cli").files.at("main.c");
  auto set_motor = finch.substr(finch.find("static int setMotor("));
  set_motor = set_motor.substr(0, set_motor.find("\n}\n"));
  CHECK(set_motor.find("frame[0] = 0x4D;") != std::string::npos);
  CHECK(set_motor.find("-128LL") != std::string::npos);
  CHECK(finch.find("fmod(d, 65536.0)") != std::string::npos);

  auto koala = codegen::generate(test::load_valid(test::device("koalette")), "c-cli").files.at("main.c");
  CHECK(koala.find(R"("D,%lld,%lld\n")") != std::string::npos);
  CHECK(koala.find("RDIS_FRAME_LEN") == std::string::npos);
}

TEST_CASE("unsupported documents are refused") {
  auto doc = test::load_valid(test::device("finchling"));
  auto serial = doc;
  serial.connections[0].transport = SerialTransport{"/dev/ttyUSB0", 115200};
  CHECK(error_code([&] { codegen::generate(serial, "c-cli"); }) == "unsupported-feature");

  auto clash = test::load_valid(test::device("finchling"));
  auto rename = [&](const std::string& from, const std::string& to) {
    for (auto& p : clash.primitives)
      if (p.name == from) p.name = to;
    for (auto& i : clash.interfaces)
      for (auto& c : i.calls)
        if (c.primitive == from) c.primitive = to;
  };
  rename("setMotor", "printf");
  CHECK(error_code([&] { codegen::generate(clash, "c-cli"); }) == "unsupported-feature");

  auto bad = doc;
  bad.primitives[0].connection = "nowhere";
  CHECK(error_code([&] { codegen::generate(bad, "c-cli"); }) == "invalid-document");
}

TEST_CASE("write_artifact refuses to overwrite without force") {
  auto a = codegen::generate(test::load_valid(test::device("koalette")), "c-cli");
  auto dir = scratch("write");
  auto paths = codegen::write_artifact(a, dir, false);
  CHECK(paths.size() == 2);
  CHECK(test::read_file(dir / "koalette" / "c-cli" / "main.c") == a.files.at("main.c"));
  CHECK(error_code([&] { codegen::write_artifact(a, dir, false); }) == "exists");
  CHECK(codegen::write_artifact(a, dir, true).size() == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generated C compiles cleanly and frames match the codec") {
  if (std::system("cc --version > /dev/null 2>&1") != 0) {
    MESSAGE("no C compiler; skipped");
    return;
  }
  auto dir = scratch("compile");
  for (const std::string name : {"finchling", "koalette"}) {
    CAPTURE(name);
    auto doc = test::load_valid(test::device(name));
    codegen::write_artifact(codegen::generate(doc, "c-cli"), dir, true);
    auto src = dir / name / "c-cli";
    run("cc -std=c99 -Wall -Wextra -Werror -O2 -o " + (src / name).string() + " " + (src / "main.c").string() +
        " -lm 2>&1");

    const Primitive* drive = nullptr;
    for (const auto& p : doc.primitives)
      if (p.inputs.size() == 2 && !p.periodic()) drive = &p;
    REQUIRE(drive != nullptr);
    for (auto [l, r] : {std::pair{5, -5}, std::pair{-100, 100}, std::pair{0, 17}}) {
      codec::FieldValues v{{drive->inputs[0].name, l}, {drive->inputs[1].name, r}};
      auto expected = codec::to_hex(codec::encode(drive->write_format, v));
      auto out = run("printf 'raw " + drive->name + " " + std::to_string(l) + " " + std::to_string(r) +
                     "\\nquit\\n' | " + (src / name).string() + " --dump");
      CHECK(out == expected + "\nok\n");
    }
    auto help = run("printf 'help\\n' | " + (src / name).string() + " --dump");
    for (const auto& i : doc.interfaces) CHECK(help.find(i.name) != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
