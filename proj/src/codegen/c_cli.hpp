#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "rdis/model.hpp"

namespace rdis::codegen::detail {

/// Reasons the c-cli target cannot express `doc`; empty when it can.
std::vector<std::string> c_cli_unsupported(const RdisDocument& doc);

/// Template context for a document that passed c_cli_unsupported().
nlohmann::json c_cli_context(const RdisDocument& doc, const std::string& hash);

}  // namespace rdis::codegen::detail
