#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gbm/geometry.hpp"
#include "gbm/raster.hpp"

namespace gbm {

inline constexpr double kDefaultCellSizeM = 250.0;
inline constexpr float kAnalyticsNodata = -9999.0F;

/// Nominal ground size of a pixel: its north-south extent in meters.
double nominal_pixel_size_m(const GeoTransform& t);

/// round(cell_size / pixel_size); throws when the cell is smaller than a
/// pixel.
int block_window(double cell_size_m, double pixel_size_m);

struct BlockCounts {
  int block = 0;
  int cols = 0;
  int rows = 0;
  std::vector<std::int64_t> built;
  std::vector<std::int64_t> valid;
};

/// Building / valid pixel counts per block of the origin-anchored lattice;
/// trailing partial blocks are kept.
BlockCounts block_counts(const RasterGrid& mask, int block);

/// Percentage (0-100) of building pixels per aggregation cell; nodata where
/// a block has no valid pixel. pixel_size_m defaults to the nominal size.
RasterGrid density_map(const RasterGrid& buildings, double cell_size_m = kDefaultCellSizeM,
                       std::optional<double> pixel_size_m = std::nullopt);

/// Per-row pixel areas used for every area sum. Each is the
/// pixel_area_m2() value rounded to a power-of-two quantum chosen so that
/// any sum of up to width*height of them is exact in double precision,
/// which makes area totals independent of summation order and grouping.
/// The relative rounding is below 2^-52 * width * height.
std::vector<double> accounting_row_areas(const RasterFrame& frame);

/// Sum of pixel areas over building pixels (m^2).
double building_area(const RasterGrid& buildings);

struct SolarParams {
  double a_p = 10.0;         // m^2 per 1 kWp system
  double loss = 0.10;        // fraction
  double n_days = 365.0;     // days per year
  double pv_default = 3.5;   // kWh/kWp/day outside atlas coverage
  double atlas_lat_min = -50.0;
  double atlas_lat_max = 60.0;

  void validate() const;
};

/// P = PV * (1 - loss) * (A_b / A_p) * N_d, in kWh/year for PV in
/// kWh/kWp/day and A_b in m^2.
double solar_potential(double area_m2, double pv, const SolarParams& params);

/// PV at a location: nearest atlas pixel inside the atlas latitude band,
/// pv_default outside it or where the atlas has no data.
double pv_at(const RasterGrid* atlas, double lon, double lat, const SolarParams& params);

/// Yearly potential (kWh) per aggregation cell; the atlas is sampled at the
/// cell center. atlas may be null (pv_default everywhere).
RasterGrid solar_potential_map(const RasterGrid& buildings, const RasterGrid* atlas,
                               const SolarParams& params, double cell_size_m = kDefaultCellSizeM,
                               std::optional<double> pixel_size_m = std::nullopt);

/// Sum of the per-cell potentials in double precision.
double solar_potential_total(const RasterGrid& buildings, const RasterGrid* atlas,
                             const SolarParams& params, double cell_size_m = kDefaultCellSizeM,
                             std::optional<double> pixel_size_m = std::nullopt);

/// Aggregate form for a known building area and a constant PV.
double solar_potential_total(double area_m2, double pv, const SolarParams& params);

inline constexpr std::string_view kUnassignedRegion = "unassigned";
inline constexpr std::array<std::string_view, 6> kSocioVariables{
    "population", "co2_emission", "electricity", "energy", "gdp", "waste"};

struct RegionStats {
  std::string region_id;
  double building_area_m2 = 0.0;
  std::map<std::string, std::optional<double>> variables;
};

/// Building area per region by pixel-center membership. Overlapping
/// regions resolve to the lexicographically smallest id. Rows are sorted
/// by region id with the "unassigned" bucket last.
std::vector<RegionStats> zonal_building_area(const RasterGrid& buildings,
                                             const PolygonSet& regions);

struct RegressionResult {
  double slope = 0.0;
  double intercept = 0.0;
  double rho = 0.0;
  std::size_t n = 0;
};

/// Ordinary least squares of y on x plus Pearson correlation. Pairs with a
/// missing y are dropped.
RegressionResult regress(std::span<const double> x, std::span<const std::optional<double>> y);
RegressionResult regress(std::span<const double> x, std::span<const double> y);

void write_zonal_csv(const std::vector<RegionStats>& stats, const std::filesystem::path& path);
std::vector<RegionStats> read_zonal_csv(const std::filesystem::path& path);

/// `region_id,<variable>...`; blank cells are missing values.
std::map<std::string, std::map<std::string, std::optional<double>>> read_socioeconomic_csv(
    const std::filesystem::path& path);

struct VariableFit {
  std::string variable;
  RegressionResult fit;
};

/// Regresses each socioeconomic variable on building area across regions
/// (excluding "unassigned"), in the canonical variable order. Variables
/// with fewer than two usable pairs are skipped.
std::vector<VariableFit> regress_variables(
    const std::vector<RegionStats>& areas,
    const std::map<std::string, std::map<std::string, std::optional<double>>>& socio);

void write_regression_csv(const std::vector<VariableFit>& fits, const std::filesystem::path& path);

}  // namespace gbm
