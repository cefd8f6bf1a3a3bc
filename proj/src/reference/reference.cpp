#include "uf/reference.hpp"

#include <cmath>
#include <map>
#include <string>

namespace uf::reference {

PoiProfiles grid_poi_profiles(const Lattice& lattice, std::span<const Poi> pois, const CityConfig& cfg) {
    PoiProfiles out{lattice.cols, lattice.rows, std::vector<double>(lattice.size() * kPoiClasses, 0.0)};
    const double mx = kMetersPerDegree * std::cos(cfg.ref_lat * 3.14159265358979323846 / 180.0);
    for (std::size_t cell = 0; cell < lattice.size(); ++cell) {
        const std::size_t col = cell % static_cast<std::size_t>(lattice.cols);
        const std::size_t row = cell / static_cast<std::size_t>(lattice.cols);
        const double lon = lattice.lon0 + static_cast<double>(col) * lattice.step_lon;
        const double lat = lattice.lat0 + static_cast<double>(row) * lattice.step_lat;
        double acc[kPoiClasses] = {};
        for (const auto& p : pois) {
            const double dx = (lon - p.center.lon) * mx;
            const double dy = (lat - p.center.lat) * kMetersPerDegree;
            const double d = std::sqrt(dx * dx + dy * dy);
            if (d > cfg.poi_valid_range_m) continue;
            const double sigma = p.kind == PoiKind::Area ? 1.5 * p.radius_m : 100.0;
            acc[p.class_id] += std::exp(-d * d / (2 * sigma * sigma)) / (sigma * std::sqrt(2 * 3.14159265358979323846));
        }
        double total = 0.0;
        for (double a : acc) total += a;
        if (total <= 0.0) continue;
        for (int j = 0; j < kPoiClasses; ++j) out.q[cell * kPoiClasses + static_cast<std::size_t>(j)] = acc[j] / total;
    }
    return out;
}

ScalarRaster rasterize_seeds(std::span<const Seed> seeds, int width, int height, double radius_px) {
    ScalarRaster out{width, height, std::vector<double>(static_cast<std::size_t>(width) * height, 0.0), 0.0, 0.0};
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            double v = 0.0;
            for (const auto& s : seeds) {
                const double d = std::hypot(x - s.x, y - s.y);
                if (d < radius_px) v += s.value * (1.0 - d / radius_px);
            }
            out.values[static_cast<std::size_t>(y) * width + x] = v;
        }
    out.update_range();
    return out;
}

std::vector<Stamp> stamp_records(std::span<const CleanRecord> records, MetricKind metric, TimeFilter filter,
                                 const MetricContext& ctx) {
    const Lattice& lattice = *ctx.lattice;
    std::map<std::string, std::vector<std::size_t>> by_device;
    for (std::size_t i = 0; i < records.size(); ++i) by_device[records[i].mid].push_back(i);

    const Basis basis = metric_basis(metric);
    const std::size_t m = basis == Basis::Poi ? kPoiClasses : ctx.division_count;
    std::vector<Stamp> stamps;

    for (const auto& [mid, idx] : by_device) {
        struct Rec {
            std::uint32_t cell;
            bool in_filter;
            std::vector<double> q;
        };
        std::vector<Rec> recs;
        for (std::size_t i : idx) {
            const auto& r = records[i];
            const bool in_filter = filter.accepts(r.timeslot, ctx.epoch_weekday);
            auto cell = lattice.assign(r.lon, r.lat);
            if (!cell) continue;
            const auto ci = static_cast<std::uint32_t>(lattice.index(*cell));
            if (metric == MetricKind::Density) {
                if (in_filter) stamps.push_back({ci, 1.0});
                continue;
            }
            std::vector<double> q(m, 0.0);
            if (basis == Basis::Poi) {
                for (std::size_t j = 0; j < m; ++j) q[j] = ctx.profiles->q[ci * kPoiClasses + j];
            } else {
                const auto d = (*ctx.cell_division)[ci];
                if (d >= 0) q[static_cast<std::size_t>(d)] = 1.0;
            }
            recs.push_back({ci, in_filter, std::move(q)});
        }
        if (metric == MetricKind::Density) continue;

        auto counts_toward_p = [&](const Rec& r) { return ctx.filtered_p ? r.in_filter : true; };
        auto nonzero = [](const Rec& r) {
            for (double v : r.q)
                if (v > 0.0) return true;
            return false;
        };

        std::vector<double> p(m, 0.0);
        double total = 0.0;
        for (std::size_t j = 0; j < m; ++j)
            for (const auto& r : recs)
                if (counts_toward_p(r) && nonzero(r)) {
                    p[j] += r.q[j];
                    total += r.q[j];
                }
        if (total <= 0.0) continue;
        for (double& v : p) v /= total;

        double hp = 0.0;
        for (double v : p)
            if (v > 0.0) hp -= v * std::log(v);

        for (const auto& r : recs) {
            if (!r.in_filter || !nonzero(r)) continue;
            double value = hp;
            if (!stamps_user_entropy(metric)) {
                value = 0.0;
                for (std::size_t j = 0; j < m; ++j)
                    if (r.q[j] > 0.0) value -= r.q[j] * std::log(p[j]);
            }
            stamps.push_back({r.cell, value});
        }
    }
    return stamps;
}

GridMetricField compute_metric_field(std::span<const CleanRecord> records, MetricKind metric, TimeFilter filter,
                                     const MetricContext& ctx) {
    std::map<std::uint32_t, std::pair<double, std::uint64_t>> acc;
    for (const auto& s : stamp_records(records, metric, filter, ctx)) {
        auto& a = acc[s.cell];
        a.first += s.value;
        ++a.second;
    }
    GridMetricField f;
    f.metric = metric;
    f.filter = filter;
    f.cols = ctx.lattice->cols;
    f.rows = ctx.lattice->rows;
    for (const auto& [cell, a] : acc) {
        const double n = static_cast<double>(a.second);
        f.cells.push_back({cell, metric == MetricKind::Density ? n : a.first / n, a.second});
    }
    return f;
}

}  // namespace uf::reference
