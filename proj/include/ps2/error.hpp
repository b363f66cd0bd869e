#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace ps2 {

enum class ErrorCode {
  // data / configuration problems
  InsufficientData,
  Precondition,
  Configuration,
  EmptyUniverse,
  Parse,
  // numerical failures
  Singular,
  Regime,
  IterationLimit,
  SingularDesign,
  DegenerateGrid,
  EmptyModel,
  NoValidLambda,
  EmptyScreen,
  DegenerateModel,
  InvalidScale,
  UndefinedRatio,
  CollinearFactor,
};

const char* to_string(ErrorCode code);

// Numerical failures map to CLI exit code 3, everything else to 2.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Raised when coordinate descent exhausts its sweep budget. Carries the last iterate.
class IterationLimitError : public Error {
 public:
  IterationLimitError(const std::string& what, Eigen::VectorXd last_iterate, int sweeps)
      : Error(ErrorCode::IterationLimit, what),
        last_iterate_(std::move(last_iterate)),
        sweeps_(sweeps) {}
  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }
  int sweeps() const noexcept { return sweeps_; }

 private:
  Eigen::VectorXd last_iterate_;
  int sweeps_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace ps2
