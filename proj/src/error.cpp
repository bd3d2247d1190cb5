#include "selb/error.hpp"

namespace selb {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::domain: return "domain";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::count_mismatch: return "count_mismatch";
    case ErrorCode::bad_value: return "bad_value";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
    case ErrorCode::optim: return "optim";
  }
  return "unknown";
}

}  // namespace selb
