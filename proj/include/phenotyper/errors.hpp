#pragma once

#include <stdexcept>
#include <string>

namespace phenotyper {

// Base for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input (config, schema, CLI arguments). CLI exit code 2.
struct ValidationError : Error {
  using Error::Error;
};

struct MissingVisit : Error { using Error::Error; };
struct InfeasibleTargets : Error { using Error::Error; };
struct UnknownLevel : Error { using Error::Error; };
struct InsufficientDonors : Error { using Error::Error; };
struct SingularCovariance : Error { using Error::Error; };
struct DegenerateClass : Error { using Error::Error; };
struct NotContinuous : Error { using Error::Error; };
struct EmptyNode : Error { using Error::Error; };
struct SingleClass : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct CalibrationFailed : Error { using Error::Error; };
struct DegenerateComponent : Error { using Error::Error; };
struct ZeroVariance : Error { using Error::Error; };
struct DegenerateTable : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct TooFewSubjects : Error { using Error::Error; };
struct EmptyStratum : Error { using Error::Error; };

// A pipeline stage aborted; carries the stage name. CLI exit code 3.
struct StageFailed : Error {
  StageFailed(const std::string& stage, const std::string& cause)
      : Error("stage '" + stage + "' failed: " + cause), stage_name(stage) {}
  std::string stage_name;
};

}  // namespace phenotyper
