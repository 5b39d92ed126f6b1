#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace sdr {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Failure classes surfaced by the library. Carried by sdr::Error so callers
/// can branch on the class without parsing messages.
enum class ErrorCode {
  InvalidRequest,
  DuplicateSample,
  IllConditioned,
  SolverFailure,
  SingularState,
  AssumptionViolation,
  MaxIterations,
  RestorationFailure,
  Config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidRequest: return "invalid-request";
    case ErrorCode::DuplicateSample: return "duplicate-sample";
    case ErrorCode::IllConditioned: return "ill-conditioned";
    case ErrorCode::SolverFailure: return "solver-failure";
    case ErrorCode::SingularState: return "singular-state";
    case ErrorCode::AssumptionViolation: return "assumption-violation";
    case ErrorCode::MaxIterations: return "max-iteration";
    case ErrorCode::RestorationFailure: return "restoration-failure";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

}  // namespace sdr
