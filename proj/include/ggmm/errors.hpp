#pragma once

#include <stdexcept>

namespace ggmm {

/// Numerical breakdown distinct from caller mistakes (std::invalid_argument):
/// loss of positive definiteness, non-finite intermediates, failed factorizations.
class numerical_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ggmm
