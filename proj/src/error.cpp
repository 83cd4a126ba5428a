#include "szad/error.hpp"

namespace szad {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kUsage: return "usage error";
    case ErrorKind::kParse: return "parse error";
    case ErrorKind::kShape: return "shape error";
    case ErrorKind::kSize: return "size error";
    case ErrorKind::kBand: return "band error";
    case ErrorKind::kLabel: return "label error";
    case ErrorKind::kData: return "data error";
    case ErrorKind::kSplit: return "split error";
    case ErrorKind::kScheme: return "scheme error";
    case ErrorKind::kLookup: return "lookup error";
    case ErrorKind::kNumeric: return "numeric error";
    case ErrorKind::kCorruptModel: return "corrupt model";
    case ErrorKind::kIo: return "i/o error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), detail_(message) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace szad
