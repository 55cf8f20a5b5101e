#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gbm/raster.hpp"

namespace gbm {

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o);
  bool operator==(const Confusion&) const = default;
};

/// Pixel counts over the pixels valid in both masks (value != 0 is positive).
Confusion confusion(const RasterGrid& pred, const RasterGrid& ref);

struct Scores {
  double f1 = 0.0;
  double iou = 0.0;
};

/// nullopt when tp + fp + fn == 0.
std::optional<Scores> f1_iou(const Confusion& c);

enum class Aggregation { micro, macro };
Aggregation parse_aggregation(std::string_view s);

struct ScoreRow {
  std::string scope;  // patch, city, continent or world
  std::string scope_id;
  std::size_t n_patches = 0;  // patches with a defined score
  std::optional<double> f1;
  std::optional<double> iou;
};

/// Scores one group. Patches with undefined scores are left out; micro sums
/// the confusions, macro averages the per-patch scores.
ScoreRow aggregate_group(std::string scope, std::string scope_id,
                         std::span<const Confusion> patches,
                         Aggregation mode = Aggregation::micro);

struct PatchGroup {
  std::string patch_id;
  std::string city;
  std::string continent;
};

std::vector<PatchGroup> read_groups(const std::filesystem::path& path);

/// Patch rows, then city, continent and world rows, each sorted by id.
std::vector<ScoreRow> evaluate_groups(const std::map<std::string, Confusion>& patches,
                                      const std::vector<PatchGroup>& groups,
                                      Aggregation mode = Aggregation::micro);

/// Pairs `{patch_id}.<ext>` rasters across the two directories. Without
/// groups every prediction is scored and only the world row is aggregated.
std::vector<ScoreRow> evaluate_dirs(const std::filesystem::path& pred_dir,
                                    const std::filesystem::path& ref_dir,
                                    const std::optional<std::filesystem::path>& groups_csv,
                                    Aggregation mode = Aggregation::micro);

/// `scope,scope_id,n_patches,f1,iou`; undefined scores are left blank.
void write_scores_csv(const std::vector<ScoreRow>& rows, const std::filesystem::path& path);

}  // namespace gbm
