#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace eid {
namespace detail {

template <typename... Args>
std::string cat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}

}  // namespace detail

/// Validation failure: bad arguments, bad config, contract violations.
[[noreturn]] inline void fail(const std::string& msg) {
  throw std::invalid_argument(msg);
}

/// Environment failure: unreadable files, unwritable directories.
[[noreturn]] inline void fail_io(const std::string& msg) {
  throw std::runtime_error(msg);
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

/// Upper bound for internal parallelism: EID_THREADS when set (minimum 1),
/// otherwise the hardware concurrency.
int thread_budget();

}  // namespace eid
