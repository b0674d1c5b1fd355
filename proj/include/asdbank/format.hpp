#pragma once

#include <string>
#include <string_view>

namespace asdbank {

/// Shortest decimal string that round-trips to the same double.
std::string format_number(double v);

/// 100 * v with two decimals, e.g. 0.73791 -> "73.79".
std::string format_percent(double v);

/// Quotes a CSV field when it contains a separator, quote or newline.
std::string csv_field(std::string_view s);

}  // namespace asdbank
