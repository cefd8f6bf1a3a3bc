// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <string>

#include <json.hpp>

#include "city_dir.hpp"
#include "fixture.hpp"
#include "support.hpp"
#include "uf/raster.hpp"
#include "uf/service.hpp"

using namespace uf;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;

    void expect(bool cond, const std::string& what) {
        if (!cond && ok) {
            ok = false;
            detail = what;
        }
    }
};

std::string fmt(const char* f, double a, double b = 0) {
    char buf[160];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::vector<double> random_simplex(SplitMix64& rng, std::size_t m, double zero_share) {
    std::vector<double> v(m);
    double s = 0;
    for (auto& x : v) s += (x = rng.uniform() < zero_share ? 0.0 : rng.uniform());
    if (s == 0) v[0] = s = 1;
    for (auto& x : v) x /= s;
    return v;
}

Outcome entropy_oracle() {
    Outcome o;
    SplitMix64 rng(101);
    for (int i = 0; i < 10000; ++i) {
        const std::size_t m = 2 + rng.below(30);
        const auto p = random_simplex(rng, m, 0.25);
        std::vector<std::span<const double>> rows{p};
        const auto h = user_entropy(build_user_vector("u", Basis::Poi, m, rows));
        double direct = 0;
        for (double x : p)
            if (x > 0) direct -= x * std::log(x);
        o.expect(h.has_value(), "usable vector reported unusable");
        if (!h) break;
        o.expect(std::abs(*h - direct) <= 1e-12, fmt("entropy %.17g vs direct %.17g", *h, direct));
        o.expect(*h >= 0.0 && *h <= std::log(static_cast<double>(m)) + 1e-12, fmt("entropy %.17g outside [0, ln %g]", *h, double(m)));
    }
    return o;
}

Outcome decomposition_identity() {
    Outcome o;
    SplitMix64 rng(202);
    for (int u = 0; u < 1000; ++u) {
        const int n = 1 + static_cast<int>(rng.below(200));
        std::vector<std::vector<double>> rows;
        for (int i = 0; i < n; ++i) rows.push_back(random_simplex(rng, kPoiClasses, 0.5));
        std::vector<std::span<const double>> spans(rows.begin(), rows.end());
        const auto v = build_user_vector("u", Basis::Poi, kPoiClasses, spans);
        const double hp = *user_entropy(v);
        double sum = 0;
        for (const auto& r : rows) sum += *record_entropy(r, v.p);
        const double scale = std::max(std::abs(n * hp), 1e-300);
        o.expect(std::abs(sum - n * hp) <= 1e-9 * scale, fmt("sum %.17g vs N*H %.17g", sum, n * hp));
    }
    return o;
}

Outcome voronoi_equivalence() {
    Outcome o;
    CityConfig cfg;
    cfg.name = "v";
    cfg.bbox = {116.30, 39.85, 116.36, 39.90};
    cfg.ref_lat = 39.875;
    const Lattice l = build_lattice(cfg);
    SplitMix64 rng(303);
    for (int i = 0; i < 10000; ++i) {
        const LonLat p{rng.uniform(cfg.bbox.lon_min, cfg.bbox.lon_max), rng.uniform(cfg.bbox.lat_min, cfg.bbox.lat_max)};
        double best = std::numeric_limits<double>::infinity(), second = best;
        std::size_t arg = 0;
        for (std::size_t k = 0; k < l.size(); ++k) {
            const LonLat c = l.center(l.cell_at(k));
            const double d = std::hypot((p.lon - c.lon) * l.meters_per_deg_lon(), (p.lat - c.lat) * l.meters_per_deg_lat());
            if (d < best) {
                second = best;
                best = d;
                arg = k;
            } else if (d < second) {
                second = d;
            }
        }
        if (second - best < 1e-6) continue;
        const auto got = l.assign(p.lon, p.lat);
        o.expect(got && l.index(*got) == arg, fmt("point %.9f,%.9f assigned to the wrong cell", p.lon, p.lat));
    }
    return o;
}

Outcome gaussian_profile() {
    Outcome o;
    CityConfig cfg;
    cfg.name = "g";
    cfg.bbox = {116.30, 39.85, 116.34, 39.88};
    cfg.ref_lat = 39.865;
    const Lattice l = build_lattice(cfg);
    const Cell c{8, 8};
    const LonLat at = l.center(c);
    Poi a{"a", 0, {at.lon, at.lat + 100.0 / l.meters_per_deg_lat()}};
    Poi b{"b", 1, {at.lon, at.lat - 200.0 / l.meters_per_deg_lat()}};
    const std::vector<Poi> pois{a, b};
    const auto row = grid_poi_profiles(l, pois, cfg).row(l.index(c));
    o.expect(std::abs(row[0] - 0.8175744761936437) <= 1e-3, fmt("q0 = %.6f", row[0]));
    o.expect(std::abs(row[1] - 0.18242552380635635) <= 1e-3, fmt("q1 = %.6f", row[1]));
    return o;
}

std::map<std::string, std::string> field_digests(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = file_digest(e.path());
    return out;
}

Outcome pipeline_determinism() {
    Outcome o;
    uf::testing::TempDir tmp("uf_accept");
    const fs::path dir = tmp / "city";
    const auto t0 = std::chrono::steady_clock::now();
    const auto synth = uf::testing::build_city_dir(default_synth_spec(), dir, 16, 1);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::size_t records = 0;
    for (const auto& u : synth.users) records += u.records;
    o.expect(records >= 100000, fmt("only %.0f records", double(records)));
    o.expect(seconds < 60.0, fmt("end-to-end took %.1f s", seconds));

    const CityPaths paths{dir};
    const auto one = field_digests(paths.fields());
    MetricsStage m;
    m.city_dir = dir;
    m.metrics.assign(kAllMetrics.begin(), kAllMetrics.end());
    m.filters = all_time_filters();
    m.workers = 8;
    run_metrics(m);
    const auto eight = field_digests(paths.fields());
    o.expect(one.size() == 90, fmt("%.0f field cache files", double(one.size())));
    o.expect(one == eight, "field caches differ between 1 and 8 workers");
    if (o.ok) o.detail = fmt("%.0f records end-to-end in %.1f s", double(records), seconds);
    return o;
}

Outcome archetype_separation() {
    Outcome o;
    const auto m = uf::testing::make_mini_city(default_synth_spec());
    std::map<std::string, std::vector<std::span<const double>>> rows;
    for (const auto& r : m.records)
        if (auto cell = m.lattice.assign(r.lon, r.lat)) rows[r.mid].push_back(m.profiles.row(m.lattice.index(*cell)));
    for (const auto& u : m.users) {
        const auto h = user_entropy(build_user_vector(u.mid, Basis::Poi, kPoiClasses, rows[u.mid]));
        if (u.archetype == Archetype::Homebody) o.expect(h && *h == 0.0, "homebody " + u.mid + " has nonzero vibrancy");
        if (u.archetype == Archetype::Wanderer) {
            o.expect(u.records >= 1000, "wanderer has fewer than 1000 records");
            o.expect(h && *h >= 0.95 * std::log(10.0), "wanderer " + u.mid + fmt(" vibrancy %.4f", h.value_or(0)));
        }
    }
    const auto f = compute_metric_field(m.records, MetricKind::Fluidity, TimeFilter::all(), m.context());
    const GridMetricField* ptr = &f;
    auto fluidity = [&](std::size_t d) {
        return region_stats(std::span(&ptr, 1), region_from_division(m.lattice, m.divs[d])).metrics[0].value.value_or(0.0);
    };
    const auto tourist = static_cast<std::size_t>(m.spec.tourist_index());
    const double t = fluidity(tourist);
    double residential = 0;
    for (std::size_t d = 0; d < m.divs.size(); ++d)
        if (d != tourist) residential = std::max(residential, fluidity(d));
    o.expect(t > residential, fmt("tourist fluidity %.4f vs residential max %.4f", t, residential));
    if (o.ok) o.detail = fmt("tourist fluidity %.3f > residential max %.3f", t, residential);
    return o;
}

Outcome raster_oracle() {
    Outcome o;
    SplitMix64 rng(707);
    for (int trial = 0; trial < 5; ++trial) {
        const int w = 64, h = 48;
        const double r = rng.uniform(2.0, 25.0);
        std::vector<Seed> seeds;
        for (int k = 0; k < 20; ++k)
            seeds.push_back({rng.uniform(-r, w + r), rng.uniform(-r, h + r), rng.uniform(0.1, 3.0)});
        const auto raster = rasterize_seeds(seeds, w, h, r);
        for (int j = 0; j < h; ++j)
            for (int i = 0; i < w; ++i) {
                double want = 0;
                for (const auto& s : seeds) want += s.value * std::max(0.0, 1.0 - std::hypot(i - s.x, j - s.y) / r);
                o.expect(std::abs(raster.at(i, j) - want) <= 1e-6, fmt("pixel off by %.3g", raster.at(i, j) - want));
            }
    }
    const std::vector<Seed> one{{10, 10, 2.5}};
    const auto single = rasterize_seeds(one, 32, 32, 8.0);
    o.expect(single.at(10, 10) == 2.5, "kernel center is not v");
    o.expect(single.at(18, 10) == 0.0 && single.at(10, 2) == 0.0, "kernel is nonzero at the radius");
    return o;
}

Outcome conservation() {
    Outcome o;
    const auto m = uf::testing::make_mini_city(uf::testing::mini_spec(808, 3));
    const auto ctx = m.context();
    const auto weekday = std::chrono::weekday{m.city.config.epoch};
    for (const auto& f : all_time_filters()) {
        std::uint64_t passing = 0;
        for (const auto& r : m.records) passing += f.accepts(r.timeslot, weekday) ? 1 : 0;
        const auto field = compute_metric_field(m.records, MetricKind::Density, f, ctx);
        o.expect(field.total_count() == passing, "density count mismatch for filter " + f.name());
    }
    const auto all = compute_metric_field(m.records, MetricKind::Density, TimeFilter::all(), ctx);
    std::map<std::uint32_t, std::uint64_t> bands;
    for (int b = 0; b < kDayBands; ++b)
        for (const auto& c : compute_metric_field(m.records, MetricKind::Density, TimeFilter::time_of_day(b), ctx).cells)
            bands[c.cell] += c.count;
    o.expect(bands.size() == all.cells.size(), "band cells differ from ALL cells");
    for (const auto& c : all.cells) o.expect(bands[c.cell] == c.count, "ALL differs from the band sum in a cell");
    o.expect(all.total_count() == m.records.size(), "ALL does not hold every retained record");
    return o;
}

Outcome api_contract() {
    Outcome o;
    uf::testing::TempDir root("uf_accept_api");
    uf::testing::build_city_dir(uf::testing::mini_spec(909, 2), root / "mini");
    ApiService api(root.path());
    const auto& city = *api.snapshot()->cities.at("mini");
    auto call = [&](const std::string& method, const std::string& path, const Params& p, const json& body = {}) {
        const auto r = api.handle(method, path, p, body.is_null() ? "" : body.dump());
        if (r.status != 200) throw Error(ErrorKind::Invalid, path + " returned " + std::to_string(r.status));
        return json::parse(r.body);
    };
    for (const std::string filter : {"all", "evening", "weekend"}) {
        const auto star = call("GET", "/starplot", {{"city", "mini"}, {"filter", filter}});
        const auto divs = city.level(DivisionLevel::Div);
        for (std::size_t i = 0; i < divs.size(); ++i) {
            const auto region = call("POST", "/region/stats", {},
                                     {{"city", "mini"}, {"filter", filter}, {"selection", {{"kind", "division"}, {"id", divs[i]->id}}}});
            for (const auto& mm : region["metrics"]) {
                const std::string name = mm["metric"];
                const auto& sv = star[i]["values"][name];
                if (mm["value"].is_null() || sv.is_null()) {
                    o.expect(mm["value"].is_null() == sv.is_null(), "null mismatch for " + name);
                    continue;
                }
                o.expect(std::abs(sv.get<double>() - mm["value"].get<double>()) <= 1e-6,
                         "starplot and region differ on " + name);
            }
        }
        for (MetricKind metric : kAllMetrics) {
            const std::string name(metric_name(metric));
            const auto h = call("GET", "/histogram", {{"city", "mini"}, {"metric", name}, {"filter", filter}});
            const auto whole = call("POST", "/region/stats", {},
                                    {{"city", "mini"}, {"filter", filter}, {"metrics", {name}}, {"selection", {{"kind", "whole"}}}});
            std::uint64_t n = 0;
            for (const auto& c : h["counts"]) n += c.get<std::uint64_t>();
            o.expect(n == whole["metrics"][0]["cells_with_data"].get<std::uint64_t>(),
                     "histogram cells differ from region cells for " + name);
            const auto& field = *city.field(metric, *TimeFilter::parse(filter));
            const auto ref = field_histogram(field, 20);
            o.expect(h["counts"].get<std::vector<std::uint64_t>>() == ref.counts, "histogram counts differ for " + name);
            if (field.cells.empty()) continue;
            double lo = field.cells[0].mean, hi = lo;
            for (const auto& c : field.cells) lo = std::min(lo, c.mean), hi = std::max(hi, c.mean);
            o.expect(whole["metrics"][0]["value"].is_null() || metric == MetricKind::Density ||
                         (whole["metrics"][0]["value"].get<double>() >= lo - 1e-6 &&
                          whole["metrics"][0]["value"].get<double>() <= hi + 1e-6),
                     "city mean outside the histogram range for " + name);
        }
    }
    SplitMix64 rng(910);
    for (MetricKind metric : {MetricKind::Vibrancy, MetricKind::Fluidity, MetricKind::Density}) {
        const auto& field = *city.field(metric, TimeFilter::all());
        for (int t = 0; t < 10; ++t) {
            const auto& c = field.cells[rng.below(field.cells.size())];
            const double tol = t == 0 ? 0.0 : rng.uniform(0.0, 0.3);
            const LonLat at = city.lattice.center(city.lattice.cell_at(c.cell));
            const auto r = call("POST", "/region/stats", {},
                                {{"city", "mini"}, {"metrics", {metric_name(metric)}},
                                 {"selection", {{"kind", "iso-point"}, {"metric", metric_name(metric)}, {"lon", at.lon},
                                                {"lat", at.lat}, {"tolerance", tol}}}});
            std::vector<std::uint32_t> scan;
            for (const auto& x : field.cells)
                if (std::abs(x.mean - c.mean) <= tol) scan.push_back(x.cell);
            o.expect(r["iso"]["cells"].get<std::vector<std::uint32_t>>() == scan, "iso-point differs from linear scan");
        }
    }
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"entropy oracle", entropy_oracle},
        {"decomposition identity", decomposition_identity},
        {"voronoi equivalence", voronoi_equivalence},
        {"gaussian profile", gaussian_profile},
        {"pipeline determinism", pipeline_determinism},
        {"archetype separation", archetype_separation},
        {"raster oracle", raster_oracle},
        {"conservation", conservation},
        {"api contract", api_contract},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.ok ? 0 : 1;
        std::printf("%s %s%s%s\n", o.ok ? "PASS" : "FAIL", name.c_str(), o.detail.empty() ? "" : ": ", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
