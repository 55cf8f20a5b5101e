#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gbm {

enum class Errc {
  invalid_argument,
  empty_intersection,
  empty_input,
  band_mismatch,
  dtype_mismatch,
  dims_mismatch,
  out_of_range,
  malformed_header,
  truncated_payload,
  io,
  all_nodata,
  too_few_bands,
  too_small,
  degenerate_correlation,
  unclosed_ring,
  invalid_polygon,
  class_out_of_range,
  external_process,
  config,
  empty_group,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure in the library is reported as an Error carrying a code, so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace gbm
