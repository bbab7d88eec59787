#include "hstf/common/error.hpp"

namespace hstf {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "E_USAGE";
    case ErrorCode::kIo: return "E_IO";
    case ErrorCode::kCapture: return "E_CAPTURE";
    case ErrorCode::kLabels: return "E_LABELS";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kShape: return "E_SHAPE";
    case ErrorCode::kData: return "E_DATA";
    case ErrorCode::kNumeric: return "E_NUMERIC";
    case ErrorCode::kCheckpoint: return "E_CHECKPOINT";
  }
  return "E_UNKNOWN";
}

}  // namespace hstf
