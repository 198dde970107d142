#pragma once

#include <stdexcept>
#include <string>

namespace gdig {

// Every failure carries a short machine-parseable code; the CLI prints
// "error[<code>] <message>" and exits nonzero.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error("[" + code + "] " + message), code_(std::move(code)) {}

  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

inline Error shape_error(const std::string& msg) { return Error("shape", msg); }
inline Error input_error(const std::string& msg) { return Error("input", msg); }
inline Error io_error(const std::string& msg) { return Error("io", msg); }
inline Error singular_error(const std::string& msg) { return Error("singular", msg); }
inline Error divergence_error(const std::string& msg) { return Error("divergence", msg); }
inline Error size_error(const std::string& msg) { return Error("size", msg); }
inline Error precondition_error(const std::string& msg) { return Error("precondition", msg); }
inline Error cache_error(const std::string& msg) { return Error("cache", msg); }
inline Error stage_error(const std::string& stage, const std::string& msg) {
  return Error("stage:" + stage, msg);
}

}  // namespace gdig
