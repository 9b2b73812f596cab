#include "dualwalk/error.hpp"

#include <fmt/format.h>

namespace dualwalk {

void throw_shape_error(const char* op, const std::string& detail) {
  throw NumericError(fmt::format("shape mismatch in {}: {}", op, detail));
}

}  // namespace dualwalk
