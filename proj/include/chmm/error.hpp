#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chmm {

// Exception hierarchy. Each leaf maps to one CLI exit code (see exit_code()).

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-domain input: bad files, non-finite values, shape mismatch.
class InputError : public Error {
public:
  using Error::Error;
};

/// The joint chain Q^I exceeds the configured cap (or overflows).
class CapacityError : public Error {
public:
  using Error::Error;
};

/// Numerical breakdown: a state lost all posterior mass, a zero normalizer, ...
class DegeneracyError : public Error {
public:
  using Error::Error;
};

class DegenerateStateError : public DegeneracyError {
public:
  DegenerateStateError(std::size_t state, const std::string& what)
      : DegeneracyError(what), state_(state) {}
  std::size_t state() const noexcept { return state_; }

private:
  std::size_t state_;
};

/// Internal invariant violated (e.g. EM likelihood went down). Signals a bug.
class InvariantError : public Error {
public:
  using Error::Error;
};

enum class ExitCode : int {
  ok = 0,
  input = 2,
  capacity = 3,
  degeneracy = 4,
  invariant = 5,
};

inline ExitCode exit_code(const Error& e) noexcept {
  if (dynamic_cast<const CapacityError*>(&e)) return ExitCode::capacity;
  if (dynamic_cast<const DegeneracyError*>(&e)) return ExitCode::degeneracy;
  if (dynamic_cast<const InvariantError*>(&e)) return ExitCode::invariant;
  return ExitCode::input;
}

}  // namespace chmm
