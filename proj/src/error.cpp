#include "menet/error.hpp"

namespace menet {

const char* to_string(Errc code) {
  switch (code) {
    case Errc::invalid_argument: return "invalid argument";
    case Errc::shape_mismatch: return "shape mismatch";
    case Errc::invalid_range: return "invalid range";
    case Errc::numerical_failure: return "numerical failure";
    case Errc::non_finite: return "non-finite value";
    case Errc::insufficient_observations: return "insufficient observations";
    case Errc::empty_input: return "empty input";
    case Errc::invalid_label: return "invalid label";
    case Errc::format_error: return "format error";
    case Errc::truncated: return "truncated data";
    case Errc::count_mismatch: return "count mismatch";
    case Errc::corrupt_checkpoint: return "corrupt checkpoint";
    case Errc::version_mismatch: return "version mismatch";
    case Errc::io_error: return "i/o error";
    case Errc::config_error: return "configuration error";
  }
  return "unknown error";
}

}  // namespace menet
