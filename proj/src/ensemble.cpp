#include "gbm/ensemble.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <unistd.h>

#include "gbm/error.hpp"
#include "gbm/kernels.hpp"
#include "gbm/labelgen.hpp"
#include "gbm/raster_io.hpp"

namespace gbm {

namespace fs = std::filesystem;

namespace {

constexpr double kNdviThreshold = 0.2;
constexpr double kBrightnessThreshold = 0.15;
constexpr double kNdviEpsilon = 1e-6;
constexpr float kBuiltClass = 8.0F;
constexpr float kOpenClass = 2.0F;

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

}  // namespace

RasterGrid baseline_segment(const RasterGrid& image) {
  if (image.bands() != 4) throw Error(Errc::band_mismatch, "baseline segmenter needs 4 bands");
  const std::size_t n = image.band_size();
  const auto red = image.band(0), green = image.band(1), blue = image.band(2), nir = image.band(3);
  std::vector<float> out(n);
  bool any_invalid = false;
  for (std::size_t k = 0; k < n; ++k) {
    if (!image.is_valid(red[k]) || !image.is_valid(green[k]) || !image.is_valid(blue[k]) ||
        !image.is_valid(nir[k])) {
      out[k] = kLabelNodata;
      any_invalid = true;
      continue;
    }
    const double ndvi = (static_cast<double>(nir[k]) - red[k]) /
                        (static_cast<double>(nir[k]) + red[k] + kNdviEpsilon);
    const double brightness = (static_cast<double>(red[k]) + green[k] + blue[k]) / 3.0;
    out[k] = (ndvi < kNdviThreshold && brightness > kBrightnessThreshold) ? kBuiltClass : kOpenClass;
  }
  std::optional<float> nodata;
  if (any_invalid) nodata = kLabelNodata;
  return RasterGrid(image.frame(), 1, DataType::u8, std::move(out), nodata);
}

RasterGrid BaselineSegmenter::segment(const RasterGrid& image) const {
  return baseline_segment(image);
}

ExternalSegmenter::ExternalSegmenter(std::string command, fs::path work_dir)
    : command_(std::move(command)), work_dir_(std::move(work_dir)) {
  if (command_.empty()) throw Error(Errc::invalid_argument, "empty external segmenter command");
}

RasterGrid ExternalSegmenter::segment_file(const fs::path& input, const fs::path& output) const {
  if (!output.parent_path().empty()) fs::create_directories(output.parent_path());
  std::error_code ec;
  fs::remove(output, ec);
  const std::string cmd =
      command_ + " " + shell_quote(input.string()) + " " + shell_quote(output.string());
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    throw Error(Errc::external_process,
                "'" + command_ + "' exited with status " + std::to_string(rc));
  }
  if (!fs::exists(output)) {
    throw Error(Errc::external_process, "'" + command_ + "' produced no output raster");
  }
  try {
    return read_raster(output);
  } catch (const Error& e) {
    throw Error(Errc::external_process, "'" + command_ + "' wrote an unreadable raster: " + e.what());
  }
}

RasterGrid ExternalSegmenter::segment(const RasterGrid& image) const {
  static std::atomic<unsigned long> counter{0};
  const std::string stem = "seg_" + std::to_string(::getpid()) + "_" + std::to_string(counter++);
  fs::create_directories(work_dir_);
  const fs::path in = work_dir_ / (stem + "_in.tif");
  const fs::path out = work_dir_ / (stem + "_out.tif");
  write_raster(image, in);
  RasterGrid labels;
  try {
    labels = segment_file(in, out);
  } catch (...) {
    std::error_code ec;
    fs::remove(in, ec);
    fs::remove(out, ec);
    throw;
  }
  std::error_code ec;
  fs::remove(in, ec);
  fs::remove(out, ec);
  return labels;
}

std::unique_ptr<Segmenter> make_segmenter(std::string_view spec, const fs::path& work_dir) {
  if (spec == "baseline") return std::make_unique<BaselineSegmenter>();
  if (spec.starts_with("exec:")) {
    return std::make_unique<ExternalSegmenter>(std::string(spec.substr(5)), work_dir);
  }
  throw Error(Errc::invalid_argument, "unknown segmenter '" + std::string(spec) + "'");
}

void check_label_raster(const RasterGrid& labels, const RasterGrid& input) {
  if (labels.width() != input.width() || labels.height() != input.height()) {
    throw Error(Errc::dims_mismatch, "segmenter output differs in size from its input");
  }
  if (labels.bands() != 1) throw Error(Errc::band_mismatch, "label raster must have one band");
  for (float v : labels.values()) {
    if (labels.is_nodata(v)) continue;
    if (!(v >= 0.0F && v <= kLabelMax) || std::trunc(v) != v) {
      throw Error(Errc::class_out_of_range, "label outside {0..10}");
    }
  }
}

RasterGrid binarize(const RasterGrid& labels) {
  const auto band = labels.band(0);
  std::vector<float> out(band.size());
  bool any_nodata = false;
  for (std::size_t k = 0; k < band.size(); ++k) {
    const float v = band[k];
    if (labels.is_nodata(v)) {
      out[k] = kMaskNodata;
      any_nodata = true;
      continue;
    }
    if (!(v >= 0.0F && v <= kLabelMax) || std::trunc(v) != v) {
      throw Error(Errc::class_out_of_range, "label outside {0..10}");
    }
    out[k] = v > kLabelBoundary ? 1.0F : 0.0F;
  }
  std::optional<float> nodata;
  if (any_nodata) nodata = kMaskNodata;
  return RasterGrid(labels.frame(), 1, DataType::u8, std::move(out), nodata);
}

std::vector<RasterGrid> run_segmenters(const RasterGrid& image,
                                       std::span<const std::shared_ptr<const Segmenter>> segmenters) {
  if (segmenters.empty()) throw Error(Errc::empty_input, "no segmenters given");
  std::vector<RasterGrid> out;
  std::ostringstream failures;
  int failed = 0;
  for (const auto& s : segmenters) {
    try {
      RasterGrid labels = s->segment(image);
      check_label_raster(labels, image);
      out.push_back(std::move(labels));
    } catch (const std::exception& e) {
      failures << (failed++ ? "; " : "") << s->id() << ": " << e.what();
    }
  }
  if (failed) {
    throw Error(Errc::external_process,
                std::to_string(failed) + " segmenter(s) failed: " + failures.str());
  }
  return out;
}

RasterGrid majority_vote(std::span<const RasterGrid> masks, int threshold) {
  if (masks.empty()) throw Error(Errc::empty_input, "vote needs at least one mask");
  if (threshold < 1 || threshold > static_cast<int>(masks.size())) {
    throw Error(Errc::invalid_argument, "threshold must be between 1 and the number of masks");
  }
  const RasterGrid& first = masks.front();
  std::vector<std::vector<std::uint8_t>> states(masks.size());
  for (std::size_t m = 0; m < masks.size(); ++m) {
    const RasterGrid& r = masks[m];
    if (r.width() != first.width() || r.height() != first.height() ||
        !(r.transform() == first.transform())) {
      throw Error(Errc::dims_mismatch, "vote masks are not aligned");
    }
    const auto band = r.band(0);
    states[m].resize(band.size());
    for (std::size_t k = 0; k < band.size(); ++k) {
      states[m][k] = !r.is_valid(band[k])  ? kernels::kAbstain
                     : band[k] != 0.0F     ? kernels::kYes
                                           : kernels::kNo;
    }
  }
  std::vector<std::span<const std::uint8_t>> views(states.begin(), states.end());
  std::vector<std::uint8_t> result(first.band_size());
  kernels::omp::vote(views, threshold, result);

  std::vector<float> out(result.size());
  bool any_nodata = false;
  for (std::size_t k = 0; k < result.size(); ++k) {
    if (result[k] == kernels::kAbstain) {
      out[k] = kMaskNodata;
      any_nodata = true;
    } else {
      out[k] = result[k] == kernels::kYes ? 1.0F : 0.0F;
    }
  }
  std::optional<float> nodata;
  if (any_nodata) nodata = kMaskNodata;
  return RasterGrid(first.frame(), 1, DataType::u8, std::move(out), nodata);
}

}  // namespace gbm
