#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uf/geo_grid.hpp"
#include "uf/ingest.hpp"

namespace uf {

enum class MetricKind : std::uint8_t { Vibrancy, Commutation, Diversity, Fluidity, Density };
inline constexpr std::array<MetricKind, 5> kAllMetrics = {MetricKind::Vibrancy, MetricKind::Commutation,
                                                          MetricKind::Diversity, MetricKind::Fluidity,
                                                          MetricKind::Density};

std::string_view metric_name(MetricKind m) noexcept;
std::optional<MetricKind> parse_metric(std::string_view s) noexcept;

enum class Basis : std::uint8_t { Poi, Div };

/// VIBRANCY/DIVERSITY use POI classes, COMMUTATION/FLUIDITY use divisions.
Basis metric_basis(MetricKind m) noexcept;
/// VIBRANCY/COMMUTATION stamp the user entropy; DIVERSITY/FLUIDITY the record entropy.
bool stamps_user_entropy(MetricKind m) noexcept;

/// Daily bands, half-open in minutes of the day. Ids 0..5 form the 3x2
/// comparison; 6 (Midnight) completes the day.
enum class DayBand : std::uint8_t { Morning, Forenoon, Noon, Afternoon, Evening, Night, Midnight };
inline constexpr int kDayBands = 7;
inline constexpr int kComparisonBands = 6;

std::string_view band_name(int band) noexcept;
int time_band(std::int64_t timeslot) noexcept;
/// 0 = weekday, 1 = weekend.
int week_part(std::int64_t timeslot, std::chrono::weekday epoch_weekday) noexcept;

struct TimeFilter {
    enum class Mode : std::uint8_t { All, TimeOfDay, DayOfWeek };
    Mode mode = Mode::All;
    int id = 0;

    static TimeFilter all() { return {}; }
    static TimeFilter time_of_day(int band) { return {Mode::TimeOfDay, band}; }
    static TimeFilter weekday() { return {Mode::DayOfWeek, 0}; }
    static TimeFilter weekend() { return {Mode::DayOfWeek, 1}; }

    std::string name() const;
    static std::optional<TimeFilter> parse(std::string_view s) noexcept;
    bool accepts(std::int64_t timeslot, std::chrono::weekday epoch_weekday) const noexcept;

    std::uint32_t code() const noexcept { return (static_cast<std::uint32_t>(mode) << 8) | static_cast<std::uint32_t>(id); }
    static std::optional<TimeFilter> from_code(std::uint32_t code) noexcept;

    bool operator==(const TimeFilter&) const = default;
};

/// A user's probability vector over M classes; p sums to 1 when usable.
struct UserFeatureVector {
    std::string mid;
    Basis basis = Basis::Poi;
    std::vector<double> p;
    std::size_t n_effective = 0;

    bool usable() const noexcept { return n_effective > 0; }
};

/// Aggregates the q rows of one user's records. All-zero rows are skipped;
/// if every row is zero the vector is returned unusable.
UserFeatureVector build_user_vector(std::string mid, Basis basis, std::size_t classes,
                                    std::span<const std::span<const double>> q_rows);

/// -sum p ln p with 0 ln 0 = 0.
double shannon_entropy(std::span<const double> p) noexcept;

std::optional<double> user_entropy(const UserFeatureVector& v) noexcept;

/// -sum_j q_j ln p_j. nullopt for an all-zero row. Throws Error(Invalid) if the
/// row has mass on a class the user vector never saw.
std::optional<double> record_entropy(std::span<const double> q_row, std::span<const double> p);

/// Read-only inputs shared by every shard task.
struct MetricContext {
    const Lattice* lattice = nullptr;
    const PoiProfiles* profiles = nullptr;
    // division index per lattice cell (-1 outside all divisions)
    const std::vector<std::int32_t>* cell_division = nullptr;
    std::size_t division_count = 0;
    std::chrono::weekday epoch_weekday{};
    // true: rebuild p from the filtered subset; false: p from all records
    bool filtered_p = true;

    std::size_t classes(Basis b) const noexcept { return b == Basis::Poi ? kPoiClasses : division_count; }
};

struct CellStat {
    std::uint32_t cell = 0;
    double mean = 0.0;
    std::uint64_t count = 0;
};

/// Per-cell aggregate for one metric under one time filter. Cells are sorted
/// by lattice index and all have count > 0. DENSITY stores the record count
/// as its mean.
struct GridMetricField {
    MetricKind metric = MetricKind::Density;
    TimeFilter filter;
    int cols = 0;
    int rows = 0;
    std::vector<CellStat> cells;
    // Per stored cell, the record-weighted mean of the contributing users'
    // p vectors (empty for DENSITY).
    std::size_t classes = 0;
    std::vector<double> breakdown;

    const CellStat* find(std::uint32_t cell) const noexcept;
    std::span<const double> breakdown_of(std::size_t stored_index) const noexcept;
    std::uint64_t total_count() const noexcept;
};

/// Shard-parallel aggregation. Shards are processed by `workers` threads and
/// merged in shard order, so the result does not depend on the worker count.
GridMetricField compute_metric_field(const ShardSet& shards, MetricKind metric, TimeFilter filter,
                                     const MetricContext& ctx, int workers = 1);

/// Same aggregation over in-memory records that are already grouped by mid.
GridMetricField compute_metric_field(std::span<const CleanRecord> grouped_records, MetricKind metric,
                                     TimeFilter filter, const MetricContext& ctx);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    double width = 0.0;
    std::vector<std::uint64_t> counts;
    std::vector<double> density;

    bool empty() const noexcept { return counts.empty(); }
};

/// Equal-width bins over [min, max] of the cell means; densities integrate to
/// one. A degenerate range is widened to [v - 0.5, v + 0.5].
Histogram field_histogram(const GridMetricField& field, int bins);

/// A set of lattice cells (sorted indices).
struct Region {
    std::vector<std::uint32_t> cells;
};

Region region_from_rect(const Lattice& lattice, const BBox& rect);
Region region_from_polygon(const Lattice& lattice, const Polygon& polygon);
Region region_from_division(const Lattice& lattice, const Division& division);
Region region_whole(const Lattice& lattice);

struct MetricSummary {
    MetricKind metric = MetricKind::Density;
    std::optional<double> value;
    std::uint64_t records = 0;
    std::size_t cells_with_data = 0;
    std::vector<double> breakdown;
};

struct RegionStats {
    std::size_t lattice_cells = 0;
    std::vector<MetricSummary> metrics;

    bool empty() const noexcept { return lattice_cells == 0; }
};

/// Count-weighted mean of each entropy metric over the region's cells; DENSITY
/// reports records per lattice cell of the region.
RegionStats region_stats(std::span<const GridMetricField* const> fields, const Region& region);

/// Cells whose mean lies within `tolerance` of `value`.
std::vector<std::uint32_t> iso_value_cells(const GridMetricField& field, double value, double tolerance);

/// "UFMF", u32 metric, u32 filter code, u32 cols, u32 rows, then
/// (u32 col, u32 row, f32 mean, u32 count) tuples. Little-endian.
std::string encode_field(const GridMetricField& field);
GridMetricField decode_field(std::string_view bytes);
void write_field_cache(const std::filesystem::path& path, const GridMetricField& field);
GridMetricField read_field_cache(const std::filesystem::path& path);

/// Companion "UFMB" file: u32 classes, u32 n, then n x (u32 cell, classes x f32).
void write_breakdown_cache(const std::filesystem::path& path, const GridMetricField& field);
void read_breakdown_cache(const std::filesystem::path& path, GridMetricField& field);

std::string field_file_stem(MetricKind metric, const TimeFilter& filter);

}  // namespace uf
