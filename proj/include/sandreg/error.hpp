#pragma once

#include <stdexcept>
#include <string>

namespace sandreg {

/// Base of every error raised by the library. The category maps onto the
/// command-line exit codes.
class Error : public std::runtime_error {
 public:
  enum class Category { config, convergence, data, numerical };

  Error(Category category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  Category category() const noexcept { return category_; }

 private:
  Category category_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(Category::config, what) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(Category::data, what) {}
};

/// Iterative solver ran out of iterations. Carries the last iterate summary
/// in the message.
class ConvergenceError : public Error {
 public:
  explicit ConvergenceError(const std::string& what)
      : Error(Category::convergence, what) {}
};

/// Non positive definite working matrices, singular normal equations,
/// degenerate means and similar.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(Category::numerical, what) {}
};

/// U_i could not be factorised: cluster `cluster` carries full leverage.
class LeverageError : public NumericalError {
 public:
  LeverageError(std::size_t cluster, const std::string& what)
      : NumericalError(what), cluster_(cluster) {}
  std::size_t cluster() const noexcept { return cluster_; }

 private:
  std::size_t cluster_;
};

}  // namespace sandreg
