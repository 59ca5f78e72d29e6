#ifndef NILEL_ERRORS_HPP
#define NILEL_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace nilel {

// Input files that cannot be decoded. Messages carry a 1-based line number.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Well-formed input violating a documented invariant (duplicate id,
// dangling parent, cycle, missing NIL candidate, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nilel

#endif  // NILEL_ERRORS_HPP
