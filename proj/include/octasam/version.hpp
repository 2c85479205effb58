#pragma once

#include <string_view>

namespace octasam {

std::string_view version();

}  // namespace octasam
