#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace divan {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by delimited ingestion. Row numbers are 1-based data rows (header excluded); columns are 0-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t row, std::size_t column, const std::string& what)
      : Error("parse error at row " + std::to_string(row) + ", column " + std::to_string(column) + ": " + what),
        row_(row),
        column_(column) {}

  std::size_t row() const { return row_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t row_;
  std::size_t column_;
};

class IntegrityError : public Error {
 public:
  using Error::Error;
};

class NotPreprocessedError : public Error {
 public:
  using Error::Error;
};

// The histogram path would skew bins for this subset; the caller has to bin it exactly.
class SubsetTooSmall : public Error {
 public:
  using Error::Error;
};

// A DPU assignment does not fit the MRAM model.
class PlanRejected : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// Wraps a pipeline failure with the stage that produced it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

}  // namespace divan
