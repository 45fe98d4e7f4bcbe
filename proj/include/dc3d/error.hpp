#pragma once

#include <stdexcept>
#include <string>

namespace dc3d {

// Error taxonomy shared by every module. All are runtime_errors so callers
// that do not care about the category can catch one base type.

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

struct ArgumentError : std::runtime_error {
  explicit ArgumentError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Carries the field path of the offending value, e.g. "objects[3].feature".
struct ValidationError : std::runtime_error {
  ValidationError(const std::string& field_path, const std::string& what)
      : std::runtime_error(field_path + ": " + what), field(field_path) {}
  std::string field;
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct CompatibilityError : std::runtime_error {
  explicit CompatibilityError(const std::string& what) : std::runtime_error(what) {}
};

struct PlacementError : std::runtime_error {
  explicit PlacementError(const std::string& what) : std::runtime_error(what) {}
};

struct VisibilityError : std::runtime_error {
  explicit VisibilityError(const std::string& what) : std::runtime_error(what) {}
};

struct SelectionError : std::runtime_error {
  explicit SelectionError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dc3d
