#include "ps2/error.hpp"

namespace ps2 {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientData: return "insufficient data";
    case ErrorCode::Precondition: return "precondition violated";
    case ErrorCode::Configuration: return "configuration error";
    case ErrorCode::EmptyUniverse: return "empty universe";
    case ErrorCode::Parse: return "parse error";
    case ErrorCode::Singular: return "singular matrix";
    case ErrorCode::Regime: return "dimension regime error";
    case ErrorCode::IterationLimit: return "iteration limit reached";
    case ErrorCode::SingularDesign: return "singular design";
    case ErrorCode::DegenerateGrid: return "degenerate lambda grid";
    case ErrorCode::EmptyModel: return "empty model";
    case ErrorCode::NoValidLambda: return "no valid lambda";
    case ErrorCode::EmptyScreen: return "empty screen";
    case ErrorCode::DegenerateModel: return "degenerate model";
    case ErrorCode::InvalidScale: return "invalid scale";
    case ErrorCode::UndefinedRatio: return "undefined ratio";
    case ErrorCode::CollinearFactor: return "collinear factors";
  }
  return "unknown error";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::InsufficientData:
    case ErrorCode::Precondition:
    case ErrorCode::Configuration:
    case ErrorCode::EmptyUniverse:
    case ErrorCode::Parse:
      return false;
    default:
      return true;
  }
}

}  // namespace ps2
