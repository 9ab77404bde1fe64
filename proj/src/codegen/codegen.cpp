#include "rdis/codegen.hpp"

#include <fstream>

#include <openssl/evp.h>

#include "c_cli.hpp"
#include "rdis/document.hpp"
#include "templates.hpp"

namespace rdis::codegen {

std::vector<Target> list_targets() {
  return {{"c-cli", "single-file C99 command-line driver over TCP", {"main.c", "README.md"}}};
}

std::string content_hash(const RdisDocument& doc) {
  const std::string text = canonicalize(doc);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("hash-failed", "SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

Artifact generate(const RdisDocument& doc, const std::string& target) {
  if (target != "c-cli") throw Error("unknown-target", "unknown target '" + target + "'");
  for (const auto& d : validate(doc)) {
    if (d.severity == Severity::kError) {
      throw Error("invalid-document", "document is invalid: " + format_diagnostic(d));
    }
  }
  auto problems = detail::c_cli_unsupported(doc);
  if (!problems.empty()) {
    std::string msg = "c-cli cannot express this document:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error("unsupported-feature", msg);
  }
  auto context = detail::c_cli_context(doc, content_hash(doc));
  Artifact a{target, doc.name, {}};
  a.files["main.c"] = render(detail::kCCliMain, context);
  a.files["README.md"] = render(detail::kCCliReadme, context);
  return a;
}

std::vector<std::filesystem::path> write_artifact(const Artifact& a, const std::filesystem::path& root,
                                                  bool force) {
  namespace fs = std::filesystem;
  const fs::path dir = root / a.document_name / a.target;
  if (!force) {
    for (const auto& [rel, _] : a.files) {
      if (fs::exists(dir / rel)) throw Error("exists", (dir / rel).string() + " exists; use --force to replace");
    }
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("io-error", "cannot create " + dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  for (const auto& [rel, text] : a.files) {
    const fs::path p = dir / rel;
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("io-error", "cannot write " + p.string());
    written.push_back(p);
  }
  return written;
}

}  // namespace rdis::codegen
