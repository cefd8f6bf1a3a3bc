#include "uf/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <unordered_map>

#include "binary_io.hpp"

namespace uf {

namespace fs = std::filesystem;

std::string_view metric_name(MetricKind m) noexcept {
    switch (m) {
        case MetricKind::Vibrancy: return "vibrancy";
        case MetricKind::Commutation: return "commutation";
        case MetricKind::Diversity: return "diversity";
        case MetricKind::Fluidity: return "fluidity";
        case MetricKind::Density: return "density";
    }
    return "?";
}

std::optional<MetricKind> parse_metric(std::string_view s) noexcept {
    for (MetricKind m : kAllMetrics)
        if (metric_name(m) == s) return m;
    return std::nullopt;
}

Basis metric_basis(MetricKind m) noexcept {
    return (m == MetricKind::Commutation || m == MetricKind::Fluidity) ? Basis::Div : Basis::Poi;
}

bool stamps_user_entropy(MetricKind m) noexcept {
    return m == MetricKind::Vibrancy || m == MetricKind::Commutation;
}

namespace {

constexpr std::array<std::string_view, kDayBands> kBandNames = {"morning", "forenoon", "noon",    "afternoon",
                                                                "evening", "night",    "midnight"};
// Band start minutes in day order for bands 0..5; Midnight covers [0, 360).
constexpr std::array<int, kComparisonBands + 1> kBandEdges = {360, 540, 720, 840, 1020, 1260, 1440};

}  // namespace

std::string_view band_name(int band) noexcept {
    if (band < 0 || band >= kDayBands) return "?";
    return kBandNames[static_cast<std::size_t>(band)];
}

int time_band(std::int64_t timeslot) noexcept {
    const std::int64_t slot_of_day = ((timeslot % kSlotsPerDay) + kSlotsPerDay) % kSlotsPerDay;
    const int minute = static_cast<int>(slot_of_day) * kSlotMinutes;
    if (minute < kBandEdges[0]) return static_cast<int>(DayBand::Midnight);
    for (int b = 0; b < kComparisonBands; ++b)
        if (minute < kBandEdges[static_cast<std::size_t>(b) + 1]) return b;
    return static_cast<int>(DayBand::Night);
}

int week_part(std::int64_t timeslot, std::chrono::weekday epoch_weekday) noexcept {
    const auto day = static_cast<int>(timeslot / kSlotsPerDay);
    const std::chrono::weekday wd = epoch_weekday + std::chrono::days{day};
    return (wd == std::chrono::Saturday || wd == std::chrono::Sunday) ? 1 : 0;
}

std::string TimeFilter::name() const {
    switch (mode) {
        case Mode::All: return "all";
        case Mode::TimeOfDay: return std::string(band_name(id));
        case Mode::DayOfWeek: return id == 0 ? "weekday" : "weekend";
    }
    return "?";
}

std::optional<TimeFilter> TimeFilter::parse(std::string_view s) noexcept {
    if (s == "all") return all();
    if (s == "weekday") return weekday();
    if (s == "weekend") return weekend();
    for (int b = 0; b < kDayBands; ++b)
        if (kBandNames[static_cast<std::size_t>(b)] == s) return time_of_day(b);
    return std::nullopt;
}

bool TimeFilter::accepts(std::int64_t timeslot, std::chrono::weekday epoch_weekday) const noexcept {
    switch (mode) {
        case Mode::All: return true;
        case Mode::TimeOfDay: return time_band(timeslot) == id;
        case Mode::DayOfWeek: return week_part(timeslot, epoch_weekday) == id;
    }
    return false;
}

std::optional<TimeFilter> TimeFilter::from_code(std::uint32_t code) noexcept {
    const auto mode = code >> 8;
    const int id = static_cast<int>(code & 0xFFu);
    if (mode == 0 && id == 0) return all();
    if (mode == 1 && id < kDayBands) return time_of_day(id);
    if (mode == 2 && id < 2) return TimeFilter{Mode::DayOfWeek, id};
    return std::nullopt;
}

UserFeatureVector build_user_vector(std::string mid, Basis basis, std::size_t classes,
                                    std::span<const std::span<const double>> q_rows) {
    UserFeatureVector v{std::move(mid), basis, std::vector<double>(classes, 0.0), 0};
    double total = 0.0;
    for (const auto& row : q_rows) {
        double row_sum = 0.0;
        for (double q : row) row_sum += q;
        if (row_sum <= 0.0) continue;
        for (std::size_t j = 0; j < classes; ++j) v.p[j] += row[j];
        total += row_sum;
        ++v.n_effective;
    }
    if (v.n_effective == 0) return v;
    for (double& p : v.p) p /= total;
    return v;
}

double shannon_entropy(std::span<const double> p) noexcept {
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h;
}

std::optional<double> user_entropy(const UserFeatureVector& v) noexcept {
    if (!v.usable()) return std::nullopt;
    return shannon_entropy(v.p);
}

std::optional<double> record_entropy(std::span<const double> q_row, std::span<const double> p) {
    double h = 0.0;
    bool any = false;
    for (std::size_t j = 0; j < q_row.size(); ++j) {
        if (q_row[j] <= 0.0) continue;
        any = true;
        if (!(p[j] > 0.0)) fail(ErrorKind::Invalid, "record mass on a class absent from its user vector");
        h -= q_row[j] * std::log(p[j]);
    }
    if (!any) return std::nullopt;
    return h;
}

const CellStat* GridMetricField::find(std::uint32_t cell) const noexcept {
    auto it = std::lower_bound(cells.begin(), cells.end(), cell,
                               [](const CellStat& s, std::uint32_t c) { return s.cell < c; });
    return (it != cells.end() && it->cell == cell) ? &*it : nullptr;
}

std::span<const double> GridMetricField::breakdown_of(std::size_t stored_index) const noexcept {
    if (classes == 0 || breakdown.empty()) return {};
    return std::span<const double>(breakdown).subspan(stored_index * classes, classes);
}

std::uint64_t GridMetricField::total_count() const noexcept {
    std::uint64_t n = 0;
    for (const auto& c : cells) n += c.count;
    return n;
}

namespace {

struct PartialCell {
    CompensatedSum sum;
    std::uint64_t count = 0;
    std::vector<double> mix;
};

// Accumulation for one shard; merged into the dense totals in shard order.
using Partial = std::unordered_map<std::uint32_t, PartialCell>;

class FieldKernel {
public:
    FieldKernel(MetricKind metric, TimeFilter filter, const MetricContext& ctx)
        : metric_(metric), filter_(filter), ctx_(ctx), basis_(metric_basis(metric)) {
        if (!ctx.lattice) fail(ErrorKind::Invalid, "metric context needs a lattice");
        if (metric != MetricKind::Density) {
            classes_ = ctx.classes(basis_);
            if (basis_ == Basis::Poi && !ctx.profiles) fail(ErrorKind::Invalid, "POI metrics need grid profiles");
            if (basis_ == Basis::Div) {
                if (!ctx.cell_division || classes_ == 0)
                    fail(ErrorKind::Invalid, "division metrics need division membership");
                identity_.assign(classes_ * classes_, 0.0);
                for (std::size_t j = 0; j < classes_; ++j) identity_[j * classes_ + j] = 1.0;
            }
        }
    }

    std::size_t classes() const noexcept { return classes_; }

    void device(std::span<const CleanRecord> records, Partial& out) const {
        const Lattice& lattice = *ctx_.lattice;
        if (metric_ == MetricKind::Density) {
            for (const auto& r : records) {
                if (!filter_.accepts(r.timeslot, ctx_.epoch_weekday)) continue;
                if (auto cell = lattice.assign(r.lon, r.lat)) {
                    auto& pc = out[static_cast<std::uint32_t>(lattice.index(*cell))];
                    pc.sum.add(1.0);
                    ++pc.count;
                }
            }
            return;
        }

        struct Located {
            std::uint32_t cell;
            std::span<const double> q;
            bool in_filter;
        };
        std::vector<Located> located;
        located.reserve(records.size());
        for (const auto& r : records) {
            const bool in_filter = filter_.accepts(r.timeslot, ctx_.epoch_weekday);
            if (!in_filter && ctx_.filtered_p) continue;
            auto cell = lattice.assign(r.lon, r.lat);
            if (!cell) continue;
            const auto idx = static_cast<std::uint32_t>(lattice.index(*cell));
            auto q = row(idx);
            if (q.empty()) continue;
            located.push_back({idx, q, in_filter});
        }
        std::vector<std::span<const double>> rows;
        rows.reserve(located.size());
        for (const auto& l : located) rows.push_back(l.q);
        const auto user = build_user_vector(records.front().mid, basis_, classes_, rows);
        if (!user.usable()) return;

        double user_h = 0.0;
        if (stamps_user_entropy(metric_)) user_h = *user_entropy(user);
        for (const auto& l : located) {
            if (!l.in_filter) continue;
            const double value = stamps_user_entropy(metric_) ? user_h : *record_entropy(l.q, user.p);
            auto& pc = out[l.cell];
            pc.sum.add(value);
            ++pc.count;
            if (pc.mix.empty()) pc.mix.assign(classes_, 0.0);
            for (std::size_t j = 0; j < classes_; ++j) pc.mix[j] += user.p[j];
        }
    }

private:
    // Empty span for a zero row.
    std::span<const double> row(std::uint32_t cell) const noexcept {
        if (basis_ == Basis::Poi) {
            if (ctx_.profiles->empty_at(cell)) return {};
            return ctx_.profiles->row(cell);
        }
        const std::int32_t d = (*ctx_.cell_division)[cell];
        if (d < 0 || static_cast<std::size_t>(d) >= classes_) return {};
        return std::span<const double>(identity_).subspan(static_cast<std::size_t>(d) * classes_, classes_);
    }

    MetricKind metric_;
    TimeFilter filter_;
    const MetricContext& ctx_;
    Basis basis_;
    std::size_t classes_ = 0;
    std::vector<double> identity_;
};

class FieldTotals {
public:
    FieldTotals(std::size_t cells, std::size_t classes)
        : sums_(cells), counts_(cells, 0), classes_(classes), mix_(cells * classes, 0.0) {}

    void merge(const Partial& part) {
        for (const auto& [cell, pc] : part) {
            sums_[cell].merge(pc.sum);
            counts_[cell] += pc.count;
            for (std::size_t j = 0; j < pc.mix.size(); ++j) mix_[cell * classes_ + j] += pc.mix[j];
        }
    }

    GridMetricField finish(MetricKind metric, TimeFilter filter, const Lattice& lattice) const {
        GridMetricField f;
        f.metric = metric;
        f.filter = filter;
        f.cols = lattice.cols;
        f.rows = lattice.rows;
        f.classes = metric == MetricKind::Density ? 0 : classes_;
        for (std::size_t c = 0; c < counts_.size(); ++c) {
            if (counts_[c] == 0) continue;
            const double n = static_cast<double>(counts_[c]);
            const double mean = metric == MetricKind::Density ? n : sums_[c].value() / n;
            f.cells.push_back({static_cast<std::uint32_t>(c), mean, counts_[c]});
            for (std::size_t j = 0; j < f.classes; ++j) f.breakdown.push_back(mix_[c * classes_ + j] / n);
        }
        return f;
    }

private:
    std::vector<CompensatedSum> sums_;
    std::vector<std::uint64_t> counts_;
    std::size_t classes_;
    std::vector<double> mix_;
};

}  // namespace

GridMetricField compute_metric_field(const ShardSet& shards, MetricKind metric, TimeFilter filter,
                                     const MetricContext& ctx, int workers) {
    const FieldKernel kernel(metric, filter, ctx);
    FieldTotals totals(ctx.lattice->size(), kernel.classes());
    std::exception_ptr error;
    const long n = static_cast<long>(shards.size());

#pragma omp parallel for ordered schedule(dynamic, 1) num_threads(std::max(1, workers))
    for (long s = 0; s < n; ++s) {
        Partial part;
        std::exception_ptr local;
        try {
            const auto records = read_shard(shards.path(static_cast<std::size_t>(s)));
            for_each_device(records, [&](std::span<const CleanRecord> dev) { kernel.device(dev, part); });
        } catch (...) {
            local = std::current_exception();
        }
#pragma omp ordered
        {
            if (local && !error) error = local;
            if (!error) totals.merge(part);
        }
    }
    if (error) std::rethrow_exception(error);
    return totals.finish(metric, filter, *ctx.lattice);
}

GridMetricField compute_metric_field(std::span<const CleanRecord> grouped_records, MetricKind metric,
                                     TimeFilter filter, const MetricContext& ctx) {
    const FieldKernel kernel(metric, filter, ctx);
    FieldTotals totals(ctx.lattice->size(), kernel.classes());
    Partial part;
    for_each_device(grouped_records, [&](std::span<const CleanRecord> dev) { kernel.device(dev, part); });
    totals.merge(part);
    return totals.finish(metric, filter, *ctx.lattice);
}

Histogram field_histogram(const GridMetricField& field, int bins) {
    if (bins < 1) fail(ErrorKind::Invalid, "bins must be >= 1");
    Histogram h;
    if (field.cells.empty()) return h;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& c : field.cells) {
        lo = std::min(lo, c.mean);
        hi = std::max(hi, c.mean);
    }
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    h.lo = lo;
    h.hi = hi;
    h.width = (hi - lo) / bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    for (const auto& c : field.cells) {
        auto b = static_cast<long>(std::floor((c.mean - lo) / h.width));
        b = std::clamp(b, 0L, static_cast<long>(bins) - 1);
        ++h.counts[static_cast<std::size_t>(b)];
    }
    const double n = static_cast<double>(field.cells.size());
    for (auto k : h.counts) h.density.push_back(static_cast<double>(k) / (n * h.width));
    return h;
}

namespace {

// Lattice index range whose centers can fall inside [lo, hi] along one axis.
std::pair<int, int> axis_range(double lo, double hi, double origin, double step, int n) {
    const int a = std::max(0, static_cast<int>(std::floor((lo - origin) / step)) - 1);
    const int b = std::min(n - 1, static_cast<int>(std::ceil((hi - origin) / step)) + 1);
    return {a, b};
}

template <typename Pred>
Region scan_region(const Lattice& lattice, const BBox& bounds, Pred&& inside) {
    Region region;
    const auto [c0, c1] = axis_range(bounds.lon_min, bounds.lon_max, lattice.lon0, lattice.step_lon, lattice.cols);
    const auto [r0, r1] = axis_range(bounds.lat_min, bounds.lat_max, lattice.lat0, lattice.step_lat, lattice.rows);
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
            const Cell cell{c, r};
            if (inside(lattice.center(cell))) region.cells.push_back(static_cast<std::uint32_t>(lattice.index(cell)));
        }
    return region;
}

}  // namespace

Region region_from_rect(const Lattice& lattice, const BBox& rect) {
    return scan_region(lattice, rect, [&](LonLat p) { return rect.contains(p.lon, p.lat); });
}

Region region_from_polygon(const Lattice& lattice, const Polygon& polygon) {
    return scan_region(lattice, polygon_bounds(polygon), [&](LonLat p) { return polygon_contains(polygon, p); });
}

Region region_from_division(const Lattice& lattice, const Division& division) {
    return scan_region(lattice, division.bounds, [&](LonLat p) { return division.contains(p); });
}

Region region_whole(const Lattice& lattice) {
    Region r;
    r.cells.resize(lattice.size());
    for (std::size_t i = 0; i < r.cells.size(); ++i) r.cells[i] = static_cast<std::uint32_t>(i);
    return r;
}

RegionStats region_stats(std::span<const GridMetricField* const> fields, const Region& region) {
    RegionStats stats;
    stats.lattice_cells = region.cells.size();
    if (stats.empty()) return stats;
    for (const GridMetricField* field : fields) {
        MetricSummary s;
        s.metric = field->metric;
        CompensatedSum weighted;
        std::vector<double> mix(field->classes, 0.0);
        for (std::uint32_t cell : region.cells) {
            const CellStat* c = field->find(cell);
            if (!c) continue;
            ++s.cells_with_data;
            s.records += c->count;
            const double w = static_cast<double>(c->count);
            weighted.add(field->metric == MetricKind::Density ? w : c->mean * w);
            const auto b = field->breakdown_of(static_cast<std::size_t>(c - field->cells.data()));
            for (std::size_t j = 0; j < b.size(); ++j) mix[j] += b[j] * w;
        }
        if (field->metric == MetricKind::Density) {
            s.value = weighted.value() / static_cast<double>(stats.lattice_cells);
        } else if (s.records > 0) {
            s.value = weighted.value() / static_cast<double>(s.records);
            if (!mix.empty()) {
                for (double& m : mix) m /= static_cast<double>(s.records);
                s.breakdown = std::move(mix);
            }
        }
        stats.metrics.push_back(std::move(s));
    }
    return stats;
}

std::vector<std::uint32_t> iso_value_cells(const GridMetricField& field, double value, double tolerance) {
    std::vector<std::uint32_t> out;
    for (const auto& c : field.cells)
        if (std::abs(c.mean - value) <= tolerance) out.push_back(c.cell);
    return out;
}

namespace {
constexpr char kFieldMagic[4] = {'U', 'F', 'M', 'F'};
constexpr char kBreakdownMagic[4] = {'U', 'F', 'M', 'B'};
}  // namespace

std::string encode_field(const GridMetricField& field) {
    std::string out(kFieldMagic, 4);
    detail::put_u32(out, static_cast<std::uint32_t>(field.metric));
    detail::put_u32(out, field.filter.code());
    detail::put_u32(out, static_cast<std::uint32_t>(field.cols));
    detail::put_u32(out, static_cast<std::uint32_t>(field.rows));
    const auto cols = static_cast<std::uint32_t>(field.cols);
    for (const auto& c : field.cells) {
        if (c.count > std::numeric_limits<std::uint32_t>::max())
            fail(ErrorKind::DataContract, "cell count exceeds the u32 field cache limit");
        detail::put_u32(out, c.cell % cols);
        detail::put_u32(out, c.cell / cols);
        detail::put_f32(out, static_cast<float>(c.mean));
        detail::put_u32(out, static_cast<std::uint32_t>(c.count));
    }
    return out;
}

GridMetricField decode_field(std::string_view bytes) {
    detail::ByteReader in(bytes);
    if (in.take(4) != std::string_view(kFieldMagic, 4)) fail(ErrorKind::DataContract, "not a UFMF field cache");
    GridMetricField f;
    const auto metric = in.u32();
    if (metric >= kAllMetrics.size()) fail(ErrorKind::DataContract, "field cache has unknown metric");
    f.metric = static_cast<MetricKind>(metric);
    const auto filter = TimeFilter::from_code(in.u32());
    if (!filter) fail(ErrorKind::DataContract, "field cache has unknown filter");
    f.filter = *filter;
    f.cols = static_cast<int>(in.u32());
    f.rows = static_cast<int>(in.u32());
    if (in.remaining() % 16 != 0) fail(ErrorKind::DataContract, "field cache tuple stream is truncated");
    std::int64_t prev = -1;
    while (!in.at_end()) {
        const auto col = in.u32();
        const auto row = in.u32();
        const float mean = in.f32();
        const auto count = in.u32();
        if (col >= static_cast<std::uint32_t>(f.cols) || row >= static_cast<std::uint32_t>(f.rows) || count == 0)
            fail(ErrorKind::DataContract, "field cache cell out of range or empty");
        const std::uint32_t cell = row * static_cast<std::uint32_t>(f.cols) + col;
        if (static_cast<std::int64_t>(cell) <= prev) fail(ErrorKind::DataContract, "field cache cells not sorted");
        prev = cell;
        f.cells.push_back({cell, static_cast<double>(mean), count});
    }
    return f;
}

void write_field_cache(const fs::path& path, const GridMetricField& field) { write_file(path, encode_field(field)); }

GridMetricField read_field_cache(const fs::path& path) { return decode_field(read_file(path)); }

void write_breakdown_cache(const fs::path& path, const GridMetricField& field) {
    std::string out(kBreakdownMagic, 4);
    detail::put_u32(out, static_cast<std::uint32_t>(field.classes));
    detail::put_u32(out, static_cast<std::uint32_t>(field.cells.size()));
    for (std::size_t i = 0; i < field.cells.size(); ++i) {
        detail::put_u32(out, field.cells[i].cell);
        for (double v : field.breakdown_of(i)) detail::put_f32(out, static_cast<float>(v));
    }
    write_file(path, out);
}

void read_breakdown_cache(const fs::path& path, GridMetricField& field) {
    const std::string bytes = read_file(path);
    detail::ByteReader in(bytes);
    if (in.take(4) != std::string_view(kBreakdownMagic, 4)) fail(ErrorKind::DataContract, "not a UFMB file");
    const std::size_t classes = in.u32();
    const std::size_t n = in.u32();
    if (n != field.cells.size()) fail(ErrorKind::DataContract, "breakdown does not match its field");
    std::vector<double> mix;
    mix.reserve(n * classes);
    for (std::size_t i = 0; i < n; ++i) {
        if (in.u32() != field.cells[i].cell) fail(ErrorKind::DataContract, "breakdown cell order mismatch");
        for (std::size_t j = 0; j < classes; ++j) mix.push_back(in.f32());
    }
    field.classes = classes;
    field.breakdown = std::move(mix);
}

std::string field_file_stem(MetricKind metric, const TimeFilter& filter) {
    return std::string(metric_name(metric)) + "__" + filter.name();
}

}  // namespace uf
