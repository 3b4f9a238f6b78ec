#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace inlik {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `row` is the 0-based record index; `field` names the
/// offending column or key (empty when the whole row failed to parse).
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::string field, const std::string& what)
      : Error("row " + std::to_string(row) + (field.empty() ? "" : ", field '" + field + "'") +
              ": " + what),
        row_(row),
        field_(std::move(field)) {}

  std::size_t row() const { return row_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t row_;
  std::string field_;
};

}  // namespace inlik
