#pragma once

#include <stdexcept>
#include <string>

namespace vessel {

// Broad failure classes; the CLI maps each onto its exit code.
enum class ErrorCategory { Config, Data, Divergence, Io, Usage };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define VESSEL_DEFINE_ERROR(Name, Category)                          \
  class Name : public Error {                                        \
   public:                                                           \
    explicit Name(const std::string& what)                           \
        : Error(ErrorCategory::Category, #Name ": " + what) {}       \
  };

// dataset_ingest
VESSEL_DEFINE_ERROR(MissingDirectory, Data)
VESSEL_DEFINE_ERROR(LayoutMismatch, Data)
VESSEL_DEFINE_ERROR(OrphanImage, Data)
VESSEL_DEFINE_ERROR(DecodeError, Data)
VESSEL_DEFINE_ERROR(DimensionMismatch, Data)
VESSEL_DEFINE_ERROR(SplitReferenceError, Data)
VESSEL_DEFINE_ERROR(DataEmptyError, Data)

// preprocess / tensors
VESSEL_DEFINE_ERROR(ChannelError, Usage)
VESSEL_DEFINE_ERROR(ShapeError, Usage)
VESSEL_DEFINE_ERROR(NonBinaryError, Usage)

// model_zoo / trainer
VESSEL_DEFINE_ERROR(SpecError, Config)
VESSEL_DEFINE_ERROR(ConfigError, Config)
VESSEL_DEFINE_ERROR(WeightsFileError, Io)
VESSEL_DEFINE_ERROR(SpecMismatchError, Io)
VESSEL_DEFINE_ERROR(IOError, Io)
VESSEL_DEFINE_ERROR(DivergenceError, Divergence)

// metrics / report
VESSEL_DEFINE_ERROR(EmptyEvaluationRegion, Usage)
VESSEL_DEFINE_ERROR(EmptyList, Usage)
VESSEL_DEFINE_ERROR(MissingPredictionError, Usage)

#undef VESSEL_DEFINE_ERROR

}  // namespace vessel
