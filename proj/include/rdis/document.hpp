#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rdis/model.hpp"

namespace rdis {

enum class Severity { kError, kWarning };

struct Diagnostic {
  Severity severity = Severity::kError;
  std::string code;
  /// Location such as "primitives[0].connection"; "" for the whole document.
  std::string path;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

std::string format_diagnostic(const Diagnostic& d);
bool has_errors(const std::vector<Diagnostic>& diags);

struct ParseResult {
  /// Present iff no error diagnostics were produced.
  std::optional<RdisDocument> document;
  std::vector<Diagnostic> diagnostics;

  bool ok() const { return document.has_value(); }
};

/// Structural parse against the closed schema followed by validate().
ParseResult parse_document(std::string_view text);

/// Structural parse only: the typed model with defaults applied, or the
/// schema diagnostics that prevented building it. No cross-reference checks.
ParseResult parse_structure(std::string_view text);

/// Every semantic invariant violation in `doc`. Empty means valid.
std::vector<Diagnostic> validate(const RdisDocument& doc);

/// Deterministic text: sorted keys, two-space indentation, shortest
/// round-trip numbers, every default written out. Throws Error
/// "invalid-document" if validate() reports errors.
std::string canonicalize(const RdisDocument& doc);

/// Loads and parses a file; I/O failure throws Error "io-error".
ParseResult load_document(const std::string& path);

}  // namespace rdis
