#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace asl::csv {

/// Quotes a field when it contains a comma, quote, or line break.
std::string escape(std::string_view field);

/// Splits one CSV record; handles quoted fields with doubled quotes.
std::vector<std::string> split_record(std::string_view line);

/// Shortest round-trippable decimal form with '.' as separator.
std::string format_number(double v);

}  // namespace asl::csv
