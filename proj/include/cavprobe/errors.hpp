#pragma once

#include <stdexcept>
#include <string>

namespace cavprobe {

enum class ErrorCode {
  dimension_mismatch,
  non_finite_value,
  duplicate_id,
  empty_dataset,
  malformed_file,
  io_failure,
  unknown_format,
  no_eligible_genre,
  unknown_positive_value,
  subset_too_small,
  single_class_input,
  non_finite_loss,
  empty_sample_list,
  too_few_samples,
  zero_vector,
  unknown_id,
  missing_attribute,
  lambda_out_of_range,
  invalid_config,
  all_replicates_unreliable,
};

const char* error_code_name(ErrorCode code);

// Every data/validation failure in the library is raised as one of these;
// callers can switch on code() instead of parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension_mismatch: return "DimensionMismatch";
    case ErrorCode::non_finite_value: return "NonFiniteValue";
    case ErrorCode::duplicate_id: return "DuplicateId";
    case ErrorCode::empty_dataset: return "EmptyDataset";
    case ErrorCode::malformed_file: return "MalformedFile";
    case ErrorCode::io_failure: return "IoFailure";
    case ErrorCode::unknown_format: return "UnknownFormat";
    case ErrorCode::no_eligible_genre: return "NoEligibleGenre";
    case ErrorCode::unknown_positive_value: return "UnknownPositiveValue";
    case ErrorCode::subset_too_small: return "SubsetTooSmall";
    case ErrorCode::single_class_input: return "SingleClassInput";
    case ErrorCode::non_finite_loss: return "NonFiniteLoss";
    case ErrorCode::empty_sample_list: return "EmptySampleList";
    case ErrorCode::too_few_samples: return "TooFewSamples";
    case ErrorCode::zero_vector: return "ZeroVector";
    case ErrorCode::unknown_id: return "UnknownId";
    case ErrorCode::missing_attribute: return "MissingAttribute";
    case ErrorCode::lambda_out_of_range: return "LambdaOutOfRange";
    case ErrorCode::invalid_config: return "InvalidConfig";
    case ErrorCode::all_replicates_unreliable: return "AllReplicatesUnreliable";
  }
  return "UnknownError";
}

}  // namespace cavprobe
