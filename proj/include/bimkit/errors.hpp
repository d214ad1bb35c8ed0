#ifndef BIMKIT_ERRORS_HPP
#define BIMKIT_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace bimkit {

// Base class for all user/data-facing failures. The CLI maps these to
// exit code 1; anything else escaping to main is an internal error (2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

// Carries the ids involved in a merge conflict (e.g. geocodes > 50 m apart).
class ConflictError : public Error {
 public:
  ConflictError(const std::string& msg, std::vector<std::string> ids)
      : Error(msg), ids(std::move(ids)) {}
  std::vector<std::string> ids;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  TransportError(const std::string& msg, int attempts)
      : Error(msg), attempts(attempts) {}
  int attempts = 0;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class DivergedError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bimkit

#endif
