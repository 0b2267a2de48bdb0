#pragma once

#include <stdexcept>
#include <string>

namespace dpc {

// Error categories; mirror the dpc_status codes of the C API one to one.
enum class ErrorKind {
  io = 1,
  parse = 2,
  shape = 3,
  config = 4,
  geometry = 5,
  version = 6,
  numeric = 7,
  task = 8,
  internal = 9,
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace dpc
