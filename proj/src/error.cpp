#include "gbm/error.hpp"

namespace gbm {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::empty_intersection: return "empty_intersection";
    case Errc::empty_input: return "empty_input";
    case Errc::band_mismatch: return "band_mismatch";
    case Errc::dtype_mismatch: return "dtype_mismatch";
    case Errc::dims_mismatch: return "dims_mismatch";
    case Errc::out_of_range: return "out_of_range";
    case Errc::malformed_header: return "malformed_header";
    case Errc::truncated_payload: return "truncated_payload";
    case Errc::io: return "io";
    case Errc::all_nodata: return "all_nodata";
    case Errc::too_few_bands: return "too_few_bands";
    case Errc::too_small: return "too_small";
    case Errc::degenerate_correlation: return "degenerate_correlation";
    case Errc::unclosed_ring: return "unclosed_ring";
    case Errc::invalid_polygon: return "invalid_polygon";
    case Errc::class_out_of_range: return "class_out_of_range";
    case Errc::external_process: return "external_process";
    case Errc::config: return "config";
    case Errc::empty_group: return "empty_group";
  }
  return "unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

}  // namespace gbm
