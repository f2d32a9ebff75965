#include "qcs/error.hpp"

namespace qcs {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::non_unitary: return "non_unitary";
    case Errc::impossible_branch: return "impossible_branch";
    case Errc::protocol_order: return "protocol_order";
    case Errc::unknown_label: return "unknown_label";
    case Errc::idle_pair: return "idle_pair";
    case Errc::budget_exhausted: return "budget_exhausted";
    case Errc::rank_deficient: return "rank_deficient";
    case Errc::invalid_series: return "invalid_series";
    case Errc::grid_mismatch: return "grid_mismatch";
    case Errc::under_resolved: return "under_resolved";
    case Errc::inconclusive: return "inconclusive";
    case Errc::species_collision: return "species_collision";
    case Errc::schedule_mismatch: return "schedule_mismatch";
    case Errc::config: return "config";
    case Errc::io: return "io";
  }
  return "unknown";
}

}  // namespace qcs
