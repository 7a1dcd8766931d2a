#pragma once

#include <stdexcept>
#include <string>

namespace cdp {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (bad records, unknown ids, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The external scorer misbehaved: timeout, bad framing, wrong doc ids.
class ProtocolError : public Error {
 public:
  ProtocolError(std::string query_id, const std::string& what)
      : Error(query_id.empty() ? what : "query " + query_id + ": " + what),
        query_id_(std::move(query_id)) {}

  const std::string& query_id() const noexcept { return query_id_; }

 private:
  std::string query_id_;
};

}  // namespace cdp
