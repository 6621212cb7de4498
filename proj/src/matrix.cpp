#include "ultr/matrix.hpp"

#include <cmath>
#include <string>

namespace ultr {

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(what) + ": non-finite entry");
    }
  }
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(what) + ": non-finite entry");
    }
  }
}

}  // namespace ultr
