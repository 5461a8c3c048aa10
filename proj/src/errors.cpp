#include "icu/errors.hpp"

namespace icu {

int exit_code_for(const std::exception& e) noexcept {
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) return 2;
  if (dynamic_cast<const ConvergenceError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const InfeasibleError*>(&e) != nullptr) return 4;
  return 1;
}

}  // namespace icu
