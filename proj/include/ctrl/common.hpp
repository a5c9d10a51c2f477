#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ctrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// An argument violated a documented precondition.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A computation produced NaN/Inf. Carries the name of the offending op.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string op, const std::string& what)
      : std::runtime_error("[" + op + "] " + what), op_(std::move(op)) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

class EmptyBufferError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

// Bad run configuration or command line. The CLI maps this to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

}  // namespace ctrl
