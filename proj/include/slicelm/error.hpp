#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace slicelm {

// Errors caused by malformed or inconsistent input data. The CLI maps these
// to exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Errors caused by an invalid configuration (bad flags, missing files,
// mismatched dimensions). The CLI maps these to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(const std::string& what, std::size_t byte)
      : DataError(what + " (at byte " + std::to_string(byte) + ")"), byte_(byte) {}
  std::size_t byte() const { return byte_; }

 private:
  std::size_t byte_;
};

class SchemaError : public DataError {
 public:
  SchemaError(const std::string& field, const std::string& what)
      : DataError("schema error in field '" + field + "': " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class NotATreeError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyGraphError : public DataError {
 public:
  using DataError::DataError;
};

class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};

class TokenizerError : public DataError {
 public:
  using DataError::DataError;
};

class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

class NumericError : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace slicelm
