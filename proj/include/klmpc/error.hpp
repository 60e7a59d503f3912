#pragma once

#include <stdexcept>
#include <string>

namespace klmpc {

/// Base class for every error raised by the library. The category drives the
/// CLI exit code.
class Error : public std::runtime_error {
 public:
  enum class Category { kNumerical, kValidation, kIo };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const { return category_; }

 private:
  Category category_;
};

/// Non-finite or otherwise invalid numerical evaluation.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what)
      : Error(Category::kNumerical, what) {}
};

/// Plant integration left the physical validity region.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time)
      : Error(Category::kNumerical, what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

class IdentificationError : public Error {
 public:
  explicit IdentificationError(const std::string& what)
      : Error(Category::kNumerical, what) {}
};

/// Structural condition on a model (dimension, rank, observability) failed.
class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what)
      : Error(Category::kNumerical, what) {}
};

class DesignError : public Error {
 public:
  explicit DesignError(const std::string& what)
      : Error(Category::kNumerical, what) {}
};

class InfeasibleError : public Error {
 public:
  InfeasibleError(const std::string& what, double residual)
      : Error(Category::kNumerical, what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what)
      : Error(Category::kValidation, what) {}
};

/// Bad configuration, schema violation or CLI misuse.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(Category::kValidation, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(Category::kIo, what) {}
};

}  // namespace klmpc
