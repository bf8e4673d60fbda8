#include "rgc/common/error.hpp"

namespace rgc {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kTopology: return "topology error";
    case ErrorKind::kEmptyInput: return "empty input";
    case ErrorKind::kIo: return "io error";
    case ErrorKind::kInvariant: return "invariant violated";
  }
  return "error";
}

}  // namespace rgc
