#pragma once

#include <stdexcept>
#include <string>

namespace nnqr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or out-of-domain input (bad quantile level, non-finite entries, shape mismatch).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The design matrix handed to a least-squares or quantile-regression step is rank deficient.
class IllPosedDesign : public Error {
 public:
  using Error::Error;
};

/// An inner numerical routine (SVD) failed to converge within its cap.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Input data that cannot be turned into a balanced panel.
class DataError : public Error {
 public:
  using Error::Error;
};

namespace detail {

[[noreturn]] inline void invalid(const std::string& what) { throw InvalidArgument(what); }

inline void require(bool cond, const char* what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace detail
}  // namespace nnqr
