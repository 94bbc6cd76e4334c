#pragma once

#include <string_view>

namespace paradiff {

std::string_view version();
// `git describe` of the source tree at configure time.
std::string_view git_describe();

}  // namespace paradiff
