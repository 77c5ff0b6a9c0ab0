#pragma once

#include <stdexcept>
#include <string>

namespace sigvol {

// bad configuration / file input; the CLI maps this to exit code 2
class ConfigError : public std::runtime_error {
public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// a computation produced non-finite values or exceeded its failure budget;
// the CLI maps this to exit code 3
class NumericalError : public std::runtime_error {
public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sigvol
