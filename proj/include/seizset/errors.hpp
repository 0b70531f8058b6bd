#pragma once

#include <stdexcept>
#include <string>

namespace seizset {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  /// Short machine-parsable category, e.g. "dimension".
  virtual const char* kind() const noexcept { return "error"; }
};

#define SEIZSET_DEFINE_ERROR(Name, tag)                        \
  class Name : public Error {                                  \
   public:                                                     \
    using Error::Error;                                        \
    const char* kind() const noexcept override { return tag; } \
  };

SEIZSET_DEFINE_ERROR(DimensionError, "dimension")
SEIZSET_DEFINE_ERROR(NumericError, "numeric")
SEIZSET_DEFINE_ERROR(StateError, "state")
SEIZSET_DEFINE_ERROR(ParseError, "parse")
SEIZSET_DEFINE_ERROR(ChannelError, "channel")
SEIZSET_DEFINE_ERROR(RecordError, "record")
SEIZSET_DEFINE_ERROR(ValidationError, "validation")
SEIZSET_DEFINE_ERROR(SpecError, "spec")
SEIZSET_DEFINE_ERROR(SegmentationError, "segmentation")
SEIZSET_DEFINE_ERROR(DivisionError, "division")
SEIZSET_DEFINE_ERROR(BalanceError, "balance")
SEIZSET_DEFINE_ERROR(TrainingError, "training")
SEIZSET_DEFINE_ERROR(SelectionError, "selection")
SEIZSET_DEFINE_ERROR(ConfigError, "config")
SEIZSET_DEFINE_ERROR(IoError, "io")

#undef SEIZSET_DEFINE_ERROR

}  // namespace seizset
