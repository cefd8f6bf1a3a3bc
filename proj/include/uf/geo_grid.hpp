#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uf/common.hpp"

namespace uf {

inline constexpr double kMetersPerDegree = 111320.0;
inline constexpr int kPoiClasses = 10;

std::string_view poi_class_name(int class_id);

struct LonLat {
    double lon = 0.0;
    double lat = 0.0;
};

struct BBox {
    double lon_min = 0.0;
    double lat_min = 0.0;
    double lon_max = 0.0;
    double lat_max = 0.0;

    bool contains(double lon, double lat) const noexcept {
        return lon >= lon_min && lon <= lon_max && lat >= lat_min && lat <= lat_max;
    }
    double width() const noexcept { return lon_max - lon_min; }
    double height() const noexcept { return lat_max - lat_min; }
};

struct CityConfig {
    std::string name;
    BBox bbox;
    double ref_lat = 0.0;
    double lattice_step_m = 200.0;
    double poi_valid_range_m = 500.0;
    std::chrono::sys_days epoch{};
    int days = 90;

    void validate() const;
};

/// Reads `city.json` ({name, bbox:[lon_min,lat_min,lon_max,lat_max], ref_lat,
/// lattice_step_m, poi_valid_range_m, epoch:"YYYY-MM-DD", days}).
CityConfig load_city_config(const std::filesystem::path& path);
void write_city_config(const std::filesystem::path& path, const CityConfig& cfg);

std::chrono::sys_days parse_date(const std::string& ymd);
std::string format_date(std::chrono::sys_days d);

struct Cell {
    int col = 0;
    int row = 0;
    bool operator==(const Cell&) const = default;
};

/// Square lattice over the city bbox. Lattice point (c, r) sits at
/// origin + (c * step_lon, r * step_lat); its Voronoi cell is the grid cell.
struct Lattice {
    double lon0 = 0.0;
    double lat0 = 0.0;
    double step_lon = 0.0;
    double step_lat = 0.0;
    int cols = 0;
    int rows = 0;
    double ref_lat = 0.0;
    BBox bbox;

    std::size_t size() const noexcept { return static_cast<std::size_t>(cols) * static_cast<std::size_t>(rows); }
    std::size_t index(Cell c) const noexcept {
        return static_cast<std::size_t>(c.row) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c.col);
    }
    Cell cell_at(std::size_t index) const noexcept {
        return Cell{static_cast<int>(index % static_cast<std::size_t>(cols)),
                    static_cast<int>(index / static_cast<std::size_t>(cols))};
    }
    LonLat center(Cell c) const noexcept { return {lon0 + c.col * step_lon, lat0 + c.row * step_lat}; }

    /// Nearest lattice point: two multiplications and a round per axis.
    /// nullopt when the point lies outside the bbox.
    std::optional<Cell> assign(double lon, double lat) const noexcept;

    double meters_per_deg_lon() const noexcept;
    double meters_per_deg_lat() const noexcept { return kMetersPerDegree; }
};

Lattice build_lattice(const CityConfig& cfg);

/// Equirectangular distance in meters, scaled at ref_lat.
double distance_m(LonLat a, LonLat b, double ref_lat) noexcept;

enum class PoiKind : std::uint8_t { Point, Area };

struct Poi {
    std::string id;
    int class_id = 0;
    LonLat center;
    PoiKind kind = PoiKind::Point;
    double radius_m = 0.0;

    /// Influence spread: 1.5 x radius for area POIs, 100 m for point POIs.
    double sigma_m() const noexcept { return kind == PoiKind::Area ? 1.5 * radius_m : 100.0; }
};

inline constexpr double kPointPoiSigma = 100.0;

/// CSV `id,class_id,lon,lat,kind,radius_m`; header row optional.
std::vector<Poi> load_pois(const std::filesystem::path& path);
void write_pois(const std::filesystem::path& path, std::span<const Poi> pois);

/// Zero-mean normal density at x.
inline double normal_pdf(double x, double sigma) noexcept {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    const double z = x / sigma;
    return kInvSqrt2Pi / sigma * std::exp(-0.5 * z * z);
}

/// Per-cell probability vectors over the 10 POI classes, row-major by cell
/// index. A row is either normalized to 1 or all zeros.
struct PoiProfiles {
    int cols = 0;
    int rows = 0;
    std::vector<double> q;

    std::size_t cells() const noexcept { return static_cast<std::size_t>(cols) * static_cast<std::size_t>(rows); }
    std::span<const double> row(std::size_t cell) const noexcept {
        return std::span<const double>(q).subspan(cell * kPoiClasses, kPoiClasses);
    }
    bool empty_at(std::size_t cell) const noexcept;
};

/// Gaussian POI influence at every lattice point. POIs are bucketed on a grid
/// of valid-range-sized buckets; rows of the lattice are computed in parallel.
PoiProfiles grid_poi_profiles(const Lattice& lattice, std::span<const Poi> pois, const CityConfig& cfg);

/// Unnormalized class accumulation at one location (exposed for tests).
std::array<double, kPoiClasses> poi_influence(LonLat at, std::span<const Poi> pois, double valid_range_m,
                                              double ref_lat);

/// Binary cache: "UFGP", u32 cols, rows, classes, then row-major float32 rows.
void write_profile_cache(const std::filesystem::path& path, const PoiProfiles& profiles);
PoiProfiles read_profile_cache(const std::filesystem::path& path);

enum class DivisionLevel : std::uint8_t { Div, Subdistrict };

std::string_view level_name(DivisionLevel level) noexcept;
std::optional<DivisionLevel> parse_level(std::string_view s) noexcept;

using Ring = std::vector<LonLat>;

/// Outer ring first, holes after.
struct Polygon {
    std::vector<Ring> rings;
};

/// Even-odd rule over all rings.
bool polygon_contains(const Polygon& polygon, LonLat p) noexcept;
BBox polygon_bounds(const Polygon& polygon) noexcept;

struct Demographics {
    double gdp = 0.0;
    double population = 0.0;
    double house_price = 0.0;
};

struct Division {
    std::string id;
    std::string name;
    DivisionLevel level = DivisionLevel::Div;
    std::vector<Polygon> parts;
    std::optional<Demographics> demographics;
    BBox bounds;

    void update_bounds();
    /// Even-odd rule over every ring of every part.
    bool contains(LonLat p) const noexcept;
    LonLat centroid() const noexcept;
};

/// GeoJSON FeatureCollection; Polygon and MultiPolygon geometries, properties
/// id, name, level ("DIV" or "SUBDISTRICT").
std::vector<Division> load_divisions(const std::filesystem::path& path);
void write_divisions(const std::filesystem::path& path, std::span<const Division> divisions);

/// Throws Error(DataContract) if two divisions of the same level overlap by
/// more than `tolerance_deg`.
void validate_disjoint(std::span<const Division> divisions, double tolerance_deg = 1e-9);

/// Index of the containing division among `divisions`, or nullopt.
std::optional<std::size_t> division_of(LonLat p, std::span<const Division> divisions);

/// Divisions of one level, in file order. Their position is the DIV class id.
std::vector<Division> divisions_at(std::span<const Division> all, DivisionLevel level);

/// For every lattice cell, the index of the division containing its center,
/// or -1. Parallel over lattice rows.
std::vector<std::int32_t> cell_divisions(const Lattice& lattice, std::span<const Division> level_divisions);

struct DemographicsReport {
    std::size_t applied = 0;
    std::vector<std::string> unknown_ids;
    std::vector<std::string> missing_ids;
};

/// CSV `division_id,gdp,population,house_price`; header row optional.
DemographicsReport load_demographics(const std::filesystem::path& path, std::vector<Division>& divisions);

}  // namespace uf
