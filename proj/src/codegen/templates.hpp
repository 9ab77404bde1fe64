#pragma once

#include <string_view>

namespace rdis::codegen::detail {

extern const std::string_view kCCliMain;
extern const std::string_view kCCliReadme;

}  // namespace rdis::codegen::detail
