#include "octasam/version.hpp"

namespace octasam {

std::string_view version() { return OCTASAM_VERSION; }

}  // namespace octasam
