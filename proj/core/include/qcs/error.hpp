#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qcs {

enum class Errc {
  invalid_argument,
  non_unitary,
  impossible_branch,
  protocol_order,
  unknown_label,
  idle_pair,
  budget_exhausted,
  rank_deficient,
  invalid_series,
  grid_mismatch,
  under_resolved,
  inconclusive,
  species_collision,
  schedule_mismatch,
  config,
  io,
};

std::string_view to_string(Errc code) noexcept;

/// Single exception type for the library; `code()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace qcs
