#include "fla/attack/types.hpp"

#include <cmath>
#include <ostream>

namespace fla {

void AttackTrace::write_csv(std::ostream& out, int num_classes) const {
  out << "iteration,remaining_targets,mask_area_fraction";
  for (int c = 0; c < num_classes; ++c) out << ",loss_c" << c;
  for (int c = 0; c < num_classes; ++c) out << ",grad_max_abs_c" << c;
  out << "\n";
  for (const AttackTraceRow& row : rows) {
    out << row.iteration << "," << row.remaining_targets << ","
        << row.mask_area_fraction;
    for (int c = 0; c < num_classes; ++c) {
      const double v = c < static_cast<int>(row.loss_by_category.size())
                           ? row.loss_by_category[static_cast<std::size_t>(c)]
                           : std::nan("");
      out << ",";
      if (std::isnan(v)) out << "nan"; else out << v;
    }
    for (int c = 0; c < num_classes; ++c) {
      const double v = c < static_cast<int>(row.grad_max_abs_by_category.size())
                           ? row.grad_max_abs_by_category[static_cast<std::size_t>(c)]
                           : std::nan("");
      out << ",";
      if (std::isnan(v)) out << "nan"; else out << v;
    }
    out << "\n";
  }
}

}  // namespace fla
