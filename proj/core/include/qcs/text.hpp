#pragma once

#include <string>

namespace qcs {

/// Shortest decimal text that parses back to exactly `value`.
std::string shortest(double value);

}  // namespace qcs
