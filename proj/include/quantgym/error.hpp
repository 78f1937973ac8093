#pragma once

#include <stdexcept>
#include <string>

namespace quantgym {

// Error categories map onto CLI exit codes (config=2, data=3, runtime=4).
enum class ErrorKind { config, data, runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct RuntimeError : Error {
  explicit RuntimeError(const std::string& what) : Error(ErrorKind::runtime, what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::data: return 3;
    case ErrorKind::runtime: return 4;
  }
  return 4;
}

}  // namespace quantgym
