#pragma once

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, embedded
// newlines inside quotes.

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace inlik::csv {

using Row = std::vector<std::string>;

/// Reads one record; std::nullopt at end of input.
std::optional<Row> read_row(std::istream& in);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

}  // namespace inlik::csv
