#pragma once

#include <string>

#include <fmt/format.h>

namespace inlik {

/// Text encoding for every number the tools emit: 10 significant digits.
inline std::string format_number(double x) { return fmt::format("{:.10g}", x); }

}  // namespace inlik
