#pragma once

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gbm/raster.hpp"

namespace gbm {

inline constexpr int kDefaultVoteThreshold = 2;
inline constexpr float kMaskNodata = 255.0F;

/// Maps a calibrated multiband raster to a distance-label raster of the
/// same dimensions. Implementations must be safe to call concurrently.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::string id() const = 0;
  virtual RasterGrid segment(const RasterGrid& image) const = 0;
};

/// Spectral stand-in for a trained model: NDVI < 0.2 and mean RGB > 0.15
/// emits class 8, otherwise class 2.
class BaselineSegmenter final : public Segmenter {
 public:
  std::string id() const override { return "baseline"; }
  RasterGrid segment(const RasterGrid& image) const override;
};

/// Runs `<command> <input-raster> <output-raster>` and reads the output.
class ExternalSegmenter final : public Segmenter {
 public:
  ExternalSegmenter(std::string command, std::filesystem::path work_dir);
  std::string id() const override { return "exec:" + command_; }
  RasterGrid segment(const RasterGrid& image) const override;
  /// File-contract entry point used when the input already exists on disk.
  RasterGrid segment_file(const std::filesystem::path& input,
                          const std::filesystem::path& output) const;

 private:
  std::string command_;
  std::filesystem::path work_dir_;
};

/// "baseline" or "exec:<command>".
std::unique_ptr<Segmenter> make_segmenter(std::string_view spec,
                                          const std::filesystem::path& work_dir);

RasterGrid baseline_segment(const RasterGrid& image);

/// 1 where the label is above 5; nodata stays nodata. Throws
/// class_out_of_range for labels outside {0..10}.
RasterGrid binarize(const RasterGrid& labels);

/// Checks the segmenter output contract against its input.
void check_label_raster(const RasterGrid& labels, const RasterGrid& input);

/// One label raster per segmenter, in order. Failures are collected and
/// reported together as one external_process error.
std::vector<RasterGrid> run_segmenters(const RasterGrid& image,
                                       std::span<const std::shared_ptr<const Segmenter>> segmenters);

/// Pixel is building when at least `threshold` non-nodata votes say so;
/// nodata where every vote is nodata.
RasterGrid majority_vote(std::span<const RasterGrid> masks,
                         int threshold = kDefaultVoteThreshold);

}  // namespace gbm
