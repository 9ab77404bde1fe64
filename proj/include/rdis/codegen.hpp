#pragma once

// Driver source generation from a validated document through text templates.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rdis/error.hpp"
#include "rdis/model.hpp"

namespace rdis::codegen {

/// Codes: "template-syntax", "unknown-placeholder", "bad-placeholder".
class TemplateError : public Error {
 public:
  TemplateError(std::string code, const std::string& message, int line)
      : Error(std::move(code), "line " + std::to_string(line) + ": " + message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Renders `text` against `context`.
///
///   {{a.b}}                     value lookup, innermost scope first
///   {{#each xs}}..{{/each}}     iteration; {{this}}, {{@index}}, {{@first}}, {{@last}}
///   {{#if x}}..{{else}}..{{/if}}, {{#unless x}}..{{/unless}}
///
/// A tag alone on its line (block tags only) removes that whole line.
/// Looking up a name that no scope defines is an error.
std::string render(std::string_view text, const nlohmann::json& context);

struct Target {
  std::string id;
  std::string description;
  std::vector<std::string> files;
};

std::vector<Target> list_targets();

struct Artifact {
  std::string target;
  std::string document_name;
  std::map<std::string, std::string> files;  // relative path -> text
};

/// Errors: "unknown-target", "invalid-document", "unsupported-feature".
Artifact generate(const RdisDocument& doc, const std::string& target);

/// Lowercase hex SHA-256 of the document's canonical text.
std::string content_hash(const RdisDocument& doc);

/// Writes files to <root>/<document>/<target>/. Existing files are only
/// replaced with `force`; otherwise Error "exists". Returns written paths.
std::vector<std::filesystem::path> write_artifact(const Artifact& a, const std::filesystem::path& root,
                                                  bool force);

}  // namespace rdis::codegen
