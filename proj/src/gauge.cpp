#include "tgauge/gauge.hpp"

namespace tgauge {

std::string_view to_string(HeadFixStatus s) {
  switch (s) {
    case HeadFixStatus::Fixed:
      return "fixed";
    case HeadFixStatus::AlreadyCanonical:
      return "already_canonical";
    case HeadFixStatus::RankDeficient:
      return "rank_deficient";
  }
  return "fixed";
}

}  // namespace tgauge
