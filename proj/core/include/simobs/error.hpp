#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace simobs {

enum class ErrorKind {
  kParameter,
  kAlignment,
  kFormat,
  kTruncation,
  kUnsupportedLinkType,
  kMalformedFrame,
  kStructure,
  kNoVideoTrack,
  kUndefinedMeasure,
  kClassImbalance,
  kTrainingDiverged,
  kPartition,
  kConfig,
  kIo,
};

const char* to_string(ErrorKind kind);

// Base of every error the library raises. The kind lets callers dispatch
// without a dynamic_cast chain; the subclasses exist for CHECK_THROWS_AS.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define SIMOBS_DEFINE_ERROR(Name, Kind)                           \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(Kind, what) {} \
  };

SIMOBS_DEFINE_ERROR(ParameterError, ErrorKind::kParameter)
SIMOBS_DEFINE_ERROR(AlignmentError, ErrorKind::kAlignment)
SIMOBS_DEFINE_ERROR(FormatError, ErrorKind::kFormat)
SIMOBS_DEFINE_ERROR(UnsupportedLinkTypeError, ErrorKind::kUnsupportedLinkType)
SIMOBS_DEFINE_ERROR(MalformedFrameError, ErrorKind::kMalformedFrame)
SIMOBS_DEFINE_ERROR(StructureError, ErrorKind::kStructure)
SIMOBS_DEFINE_ERROR(NoVideoTrackError, ErrorKind::kNoVideoTrack)
SIMOBS_DEFINE_ERROR(UndefinedMeasureError, ErrorKind::kUndefinedMeasure)
SIMOBS_DEFINE_ERROR(ClassImbalanceError, ErrorKind::kClassImbalance)
SIMOBS_DEFINE_ERROR(TrainingDivergedError, ErrorKind::kTrainingDiverged)
SIMOBS_DEFINE_ERROR(PartitionError, ErrorKind::kPartition)
SIMOBS_DEFINE_ERROR(ConfigError, ErrorKind::kConfig)
SIMOBS_DEFINE_ERROR(IoError, ErrorKind::kIo)

#undef SIMOBS_DEFINE_ERROR

// Raised when a box or record claims more bytes than the input holds.
class TruncationError : public Error {
 public:
  TruncationError(const std::string& what, std::uint64_t offset)
      : Error(ErrorKind::kTruncation,
              what + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace simobs
