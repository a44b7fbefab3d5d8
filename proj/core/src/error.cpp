#include "simobs/error.hpp"

namespace simobs {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kAlignment: return "alignment";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kTruncation: return "truncation";
    case ErrorKind::kUnsupportedLinkType: return "unsupported-linktype";
    case ErrorKind::kMalformedFrame: return "malformed-frame";
    case ErrorKind::kStructure: return "structure";
    case ErrorKind::kNoVideoTrack: return "no-video-track";
    case ErrorKind::kUndefinedMeasure: return "undefined-measure";
    case ErrorKind::kClassImbalance: return "class-imbalance";
    case ErrorKind::kTrainingDiverged: return "training-diverged";
    case ErrorKind::kPartition: return "partition";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace simobs
