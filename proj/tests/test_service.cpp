#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <thread>

#include <json.hpp>

#include "city_dir.hpp"
#include "fixture.hpp"
#include "support.hpp"
#include "uf/http.hpp"
#include "uf/service.hpp"

using namespace uf;
using nlohmann::json;
using uf::testing::TempDir;

namespace {

struct Env {
    TempDir root;
    std::filesystem::path dir;
    std::unique_ptr<ApiService> service;

    Env() : dir(root / "mini") {
        uf::testing::build_city_dir(uf::testing::mini_spec(71), dir);
        service = std::make_unique<ApiService>(root.path());
    }
    const CityData& city() const { return *service->snapshot()->cities.at("mini"); }
};

Env& env() {
    static Env e;
    return e;
}

Response get(const ApiService& s, const std::string& path, const Params& p = {}) { return s.handle("GET", path, p); }
Response get(const std::string& path, const Params& p = {}) { return get(*env().service, path, p); }

json get_json(const std::string& path, const Params& p = {}) {
    const auto r = get(path, p);
    REQUIRE(r.status == 200);
    return json::parse(r.body);
}

json post_region(const ApiService& s, const json& body, int want = 200) {
    const auto r = s.handle("POST", "/region/stats", {}, body.dump());
    CHECK(r.status == want);
    return json::parse(r.body);
}
json post_region(const json& body, int want = 200) { return post_region(*env().service, body, want); }

struct Decoded {
    json header;
    std::vector<float> values;
};

Decoded decode_raster(const std::string& bytes) {
    std::uint32_t n = 0;
    std::memcpy(&n, bytes.data(), 4);
    Decoded d{json::parse(bytes.substr(4, n)), {}};
    const std::size_t count = (bytes.size() - 4 - n) / 4;
    d.values.resize(count);
    std::memcpy(d.values.data(), bytes.data() + 4 + n, count * 4);
    return d;
}

std::string csv(const BBox& b) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", b.lon_min, b.lat_min, b.lon_max, b.lat_max);
    return buf;
}

// Viewport whose pixel (c, rows-1-r) sits exactly on lattice point (c, r).
BBox pixel_aligned_bbox(const Lattice& l) {
    return {l.lon0 - l.step_lon / 2, l.lat0 - l.step_lat / 2, l.lon0 + (l.cols - 0.5) * l.step_lon,
            l.lat0 + (l.rows - 0.5) * l.step_lat};
}

Division rect_division(const std::string& id, const BBox& b) {
    Division d;
    d.id = id;
    d.name = id;
    d.parts = {Polygon{{Ring{{b.lon_min, b.lat_min}, {b.lon_max, b.lat_min}, {b.lon_max, b.lat_max},
                             {b.lon_min, b.lat_max}}}}};
    d.update_bounds();
    return d;
}

// Two-division toy city; metric values on the left and right halves are set per test.
std::shared_ptr<const Catalog> toy_catalog(double left, double right) {
    auto c = std::make_shared<CityData>();
    c->id = "toy";
    c->config.name = "toy";
    c->config.bbox = {0.0, 0.0, 0.02, 0.01};
    c->config.ref_lat = 0.0;
    c->lattice = build_lattice(c->config);
    c->divisions = {rect_division("L", {0.0, 0.0, 0.01, 0.01}), rect_division("R", {0.01, 0.0, 0.02, 0.01})};
    for (MetricKind m : kAllMetrics) {
        GridMetricField f;
        f.metric = m;
        f.filter = TimeFilter::all();
        f.cols = c->lattice.cols;
        f.rows = c->lattice.rows;
        for (std::size_t k = 0; k < c->lattice.size(); ++k) {
            const LonLat at = c->lattice.center(c->lattice.cell_at(k));
            if (!c->config.bbox.contains(at.lon, at.lat) || std::abs(at.lon - 0.01) < 1e-9) continue;
            const double v = at.lon < 0.01 ? left : right;
            f.cells.push_back({static_cast<std::uint32_t>(k), v, 1});
        }
        c->fields.emplace(std::make_pair(m, f.filter.code()), std::move(f));
    }
    auto cat = std::make_shared<Catalog>();
    cat->cities["toy"] = c;
    return cat;
}

}  // namespace

TEST_CASE("an empty deployment lists no cities") {
    TempDir empty;
    ApiService s(empty.path());
    const auto r = get(s, "/cities");
    CHECK(r.status == 200);
    CHECK(json::parse(r.body) == json::array());
}

TEST_CASE("one city yields one descriptor with its bbox") {
    const auto j = get_json("/cities");
    REQUIRE(j.size() == 1);
    const auto& c = j[0];
    const auto& b = env().city().config.bbox;
    CHECK(c["id"] == "mini");
    CHECK(c["bbox"] == json{b.lon_min, b.lat_min, b.lon_max, b.lat_max});
    CHECK(c["metrics"].size() == 5);
    CHECK(c["filters"].size() == 10);
    CHECK(c["fields"].size() == 50);
    CHECK(c["levels"] == json{"DIV", "SUBDISTRICT"});
    CHECK(c["demographics"] == true);
}

TEST_CASE("density raster peaks at the densest cell") {
    const auto& city = env().city();
    const auto& l = city.lattice;
    const auto& field = *city.field(MetricKind::Density, TimeFilter::all());
    const auto r = get("/raster", {{"city", "mini"}, {"metric", "density"}, {"bbox", csv(pixel_aligned_bbox(l))},
                                   {"width", std::to_string(l.cols)}, {"height", std::to_string(l.rows)},
                                   {"radius_px", "0.5"}});
    REQUIRE(r.status == 200);
    CHECK(r.content_type == "application/octet-stream");
    const auto d = decode_raster(r.body);
    REQUIRE(d.values.size() == l.size());
    const auto best = std::max_element(field.cells.begin(), field.cells.end(),
                                       [](const CellStat& a, const CellStat& b) { return a.mean < b.mean; });
    const Cell cell = l.cell_at(best->cell);
    const std::size_t pixel = static_cast<std::size_t>(l.rows - 1 - cell.row) * l.cols + cell.col;
    const auto top = std::max_element(d.values.begin(), d.values.end());
    CHECK(*top == doctest::Approx(best->mean));
    CHECK(d.values[pixel] == *top);
    CHECK(d.header["value_range"][1].get<double>() == *top);
}

TEST_CASE("default raster header brackets its payload and responses are stateless") {
    const Params p = {{"city", "mini"}, {"metric", "vibrancy"}, {"filter", "evening"}, {"width", "200"},
                      {"height", "150"}};
    const auto a = get("/raster", p);
    const auto b = get("/raster", p);
    REQUIRE(a.status == 200);
    CHECK(a.body == b.body);
    const auto d = decode_raster(a.body);
    CHECK(d.header["width"] == 200);
    CHECK(d.header["height"] == 150);
    const double lo = d.header["value_range"][0], hi = d.header["value_range"][1];
    for (float v : d.values) {
        CHECK(v >= lo);
        CHECK(v <= hi);
    }
    CHECK(hi > 0.0);
}

TEST_CASE("a zero-record field renders an all-zero raster") {
    auto cat = std::make_shared<Catalog>(*env().service->snapshot());
    auto city = std::make_shared<CityData>(env().city());
    city->fields.at({MetricKind::Density, TimeFilter::time_of_day(6).code()}).cells.clear();
    cat->cities["mini"] = city;
    ApiService s(cat);
    const auto r = get(s, "/raster", {{"city", "mini"}, {"metric", "density"}, {"filter", "midnight"}});
    REQUIRE(r.status == 200);
    const auto d = decode_raster(r.body);
    CHECK(d.values.size() == 256u * 256u);
    for (float v : d.values) CHECK(v == 0.0f);
}

TEST_CASE("raster request errors") {
    CHECK(get("/raster", {{"city", "nowhere"}, {"metric", "density"}}).status == 404);
    CHECK(get("/raster", {{"city", "mini"}, {"metric", "facet"}}).status == 404);
    CHECK(get("/raster", {{"city", "mini"}}).status == 422);
    CHECK(get("/raster", {{"city", "mini"}, {"metric", "density"}, {"bbox", "1,2,3"}}).status == 422);
    CHECK(get("/raster", {{"city", "mini"}, {"metric", "density"}, {"bbox", "1,2,1,3"}}).status == 422);
    CHECK(get("/raster", {{"city", "mini"}, {"metric", "density"}, {"width", "0"}}).status == 422);
    CHECK(get("/raster", {{"city", "mini"}, {"metric", "density"}, {"width", "5000"}}).status == 422);
    CHECK(get("/raster", {{"city", "mini"}, {"metric", "density"}, {"radius_px", "-1"}}).status == 422);
    CHECK(get("/raster", {{"city", "mini"}, {"metric", "density"}, {"filter", "dawn"}}).status == 422);
    const auto e = json::parse(get("/raster", {{"city", "nowhere"}, {"metric", "density"}}).body);
    CHECK(e["code"] == 404);
    CHECK(e["message"].is_string());
}

TEST_CASE("demographic rasters take each division's value") {
    const auto& city = env().city();
    const auto r = get("/raster", {{"city", "mini"}, {"metric", "population"}, {"width", "60"}, {"height", "50"}});
    REQUIRE(r.status == 200);
    const auto d = decode_raster(r.body);
    const auto& b = city.config.bbox;
    for (int j = 0; j < 50; j += 7)
        for (int i = 0; i < 60; i += 7) {
            const LonLat at{b.lon_min + (i + 0.5) / 60 * b.width(), b.lat_max - (j + 0.5) / 50 * b.height()};
            for (const Division* div : city.level(DivisionLevel::Div))
                if (div->contains(at))
                    CHECK(d.values[static_cast<std::size_t>(j) * 60 + i] ==
                          static_cast<float>(div->demographics->population));
        }
}

TEST_CASE("histogram passes the field histogram through") {
    const auto& field = *env().city().field(MetricKind::Diversity, TimeFilter::weekend());
    const auto j = get_json("/histogram", {{"city", "mini"}, {"metric", "diversity"}, {"filter", "weekend"},
                                           {"bins", "13"}});
    const auto h = field_histogram(field, 13);
    CHECK(j["counts"].get<std::vector<std::uint64_t>>() == h.counts);
    CHECK(j["density"].get<std::vector<double>>() == h.density);
    CHECK(j["lo"].get<double>() == h.lo);
    CHECK(j["hi"].get<double>() == h.hi);

    const auto one = get_json("/histogram", {{"city", "mini"}, {"metric", "diversity"}, {"bins", "1"}});
    CHECK(one["density"][0].get<double>() == doctest::Approx(1.0 / one["width"].get<double>()));
    CHECK(get_json("/histogram", {{"city", "mini"}, {"metric", "diversity"}})["counts"].size() == 20);
    CHECK(get("/histogram", {{"city", "mini"}, {"metric", "diversity"}, {"bins", "0"}}).status == 422);
    CHECK(get("/histogram", {{"city", "mini"}, {"metric", "diversity"}, {"bins", "x"}}).status == 422);
    CHECK(get("/histogram", {{"city", "nowhere"}, {"metric", "diversity"}}).status == 404);
}

TEST_CASE("whole-bbox rectangle reports city means") {
    const auto& city = env().city();
    const auto& b = city.config.bbox;
    const auto rect = post_region({{"city", "mini"},
                                   {"selection", {{"kind", "rect"}, {"bbox", {b.lon_min, b.lat_min, b.lon_max, b.lat_max}}}}});
    const auto whole = post_region({{"city", "mini"}, {"selection", {{"kind", "whole"}}}});
    CHECK(rect["metrics"] == whole["metrics"]);
    REQUIRE(whole["metrics"].size() == 5);
    for (const auto& m : whole["metrics"]) {
        const auto kind = *parse_metric(m["metric"].get<std::string>());
        const auto& f = *city.field(kind, TimeFilter::all());
        if (kind == MetricKind::Density) {
            CHECK(m["value"].get<double>() ==
                  doctest::Approx(static_cast<double>(f.total_count()) / whole["lattice_cells"].get<double>()));
            continue;
        }
        double sum = 0;
        for (const auto& c : f.cells) sum += c.mean * static_cast<double>(c.count);
        CHECK(m["value"].get<double>() == doctest::Approx(sum / static_cast<double>(f.total_count())).epsilon(1e-9));
        CHECK(m["records"] == f.total_count());
    }
}

TEST_CASE("division selection equals polygon selection of that division") {
    const auto& city = env().city();
    for (const Division* d : city.level(DivisionLevel::Subdistrict)) {
        json rings = json::array();
        for (const auto& ring : d->parts[0].rings) {
            json r = json::array();
            for (const auto& p : ring) r.push_back({p.lon, p.lat});
            rings.push_back(r);
        }
        const auto by_id = post_region({{"city", "mini"}, {"filter", "noon"}, {"selection", {{"kind", "division"}, {"id", d->id}}}});
        const auto by_poly = post_region({{"city", "mini"}, {"filter", "noon"}, {"selection", {{"kind", "polygon"}, {"rings", rings}}}});
        CHECK(by_id["metrics"] == by_poly["metrics"]);
        CHECK(by_id["lattice_cells"] == by_poly["lattice_cells"]);
    }
}

TEST_CASE("iso-point selection returns exactly the cells within tolerance") {
    const auto& city = env().city();
    const auto& field = *city.field(MetricKind::Commutation, TimeFilter::all());
    for (std::size_t pick : {field.cells.size() / 4, field.cells.size() / 2}) {
        const auto& c = field.cells[pick];
        const LonLat at = city.lattice.center(city.lattice.cell_at(c.cell));
        for (double tol : {0.0, 0.02, 0.2}) {
            const auto j = post_region({{"city", "mini"},
                                        {"metrics", {"commutation"}},
                                        {"selection", {{"kind", "iso-point"}, {"metric", "commutation"},
                                                       {"lon", at.lon}, {"lat", at.lat}, {"tolerance", tol}}}});
            std::vector<std::uint32_t> scan;
            for (const auto& x : field.cells)
                if (std::abs(x.mean - c.mean) <= tol) scan.push_back(x.cell);
            CHECK(j["iso"]["cells"].get<std::vector<std::uint32_t>>() == scan);
            CHECK(j["iso"]["value"].get<double>() == c.mean);
            CHECK(j["lattice_cells"] == scan.size());
        }
    }
}

TEST_CASE("invalid selections are rejected") {
    const auto& b = env().city().config.bbox;
    post_region({{"city", "mini"}, {"selection", {{"kind", "rect"}, {"bbox", {b.lon_max, b.lat_min, b.lon_min, b.lat_max}}}}}, 422);
    post_region({{"city", "mini"}, {"selection", {{"kind", "rect"}, {"bbox", {1, 2, 3}}}}}, 422);
    post_region({{"city", "mini"}, {"selection", {{"kind", "rect"}, {"bbox", {0, 0, 1, 1}}}}}, 422);
    post_region({{"city", "mini"}, {"selection", {{"kind", "polygon"}, {"rings", {{{b.lon_min, b.lat_min}, {b.lon_max, b.lat_max}}}}}}}, 422);
    post_region({{"city", "mini"}, {"selection", {{"kind", "polygon"}, {"rings", {{{0, 0}, {1, 0}, {1, 1}}}}}}}, 422);
    post_region({{"city", "mini"}, {"selection", {{"kind", "division"}, {"id", "nope"}}}}, 404);
    post_region({{"city", "mini"}, {"selection", {{"kind", "lasso"}}}}, 422);
    post_region({{"city", "mini"}}, 422);
    post_region({{"city", "mini"}, {"metrics", {"facet"}}, {"selection", {{"kind", "whole"}}}}, 404);
    post_region({{"city", "gone"}, {"selection", {{"kind", "whole"}}}}, 404);
    CHECK(env().service->handle("POST", "/region/stats", {}, "{nope").status == 422);
    CHECK(env().service->handle("POST", "/region/stats", {}, "[1]").status == 422);
}

TEST_CASE("star plot values equal region stats, then min/max normalized") {
    const auto j = get_json("/starplot", {{"city", "mini"}, {"filter", "all"}});
    const auto divs = env().city().level(DivisionLevel::Div);
    REQUIRE(j.size() == divs.size());
    const std::vector<std::string> axes = {"fluidity", "vibrancy", "commutation", "diversity"};
    std::map<std::string, std::pair<double, double>> range;
    std::map<std::string, std::vector<std::optional<double>>> values;
    for (std::size_t i = 0; i < divs.size(); ++i) {
        const auto r = post_region({{"city", "mini"}, {"selection", {{"kind", "division"}, {"id", divs[i]->id}}}});
        for (const auto& m : r["metrics"]) {
            const std::string name = m["metric"];
            const auto v = m["value"].is_null() ? std::optional<double>{} : std::optional<double>(m["value"].get<double>());
            values[name].push_back(v);
            if (v) {
                auto [it, fresh] = range.try_emplace(name, *v, *v);
                it->second.first = std::min(it->second.first, *v);
                it->second.second = std::max(it->second.second, *v);
            }
        }
    }
    for (std::size_t i = 0; i < divs.size(); ++i) {
        const auto& d = j[i];
        CHECK(d["id"] == divs[i]->id);
        auto norm = [&](const std::string& name) {
            const auto& v = values[name][i];
            if (!v) return 0.0;
            const auto [lo, hi] = range[name];
            return hi > lo ? (*v - lo) / (hi - lo) : 0.5;
        };
        for (const auto& a : axes) {
            CHECK(d["axes"][a].get<double>() == doctest::Approx(norm(a)).epsilon(1e-6));
            CHECK(d["axes"][a].get<double>() >= 0.0);
            CHECK(d["axes"][a].get<double>() <= 1.0);
            if (values[a][i]) CHECK(d["values"][a].get<double>() == doctest::Approx(*values[a][i]).epsilon(1e-6));
        }
        CHECK(d["density_norm"].get<double>() == doctest::Approx(norm("density")).epsilon(1e-6));
    }
    CHECK(get_json("/starplot", {{"city", "mini"}, {"level", "SUBDISTRICT"}}).size() == 36);
    CHECK(get("/starplot", {{"city", "mini"}, {"level", "COUNTY"}}).status == 422);
    CHECK(get("/starplot", {{"city", "nowhere"}}).status == 404);
}

TEST_CASE("star plot normalization endpoints and collapse") {
    ApiService split(toy_catalog(1.0, 2.0));
    const auto j = json::parse(get(split, "/starplot", {{"city", "toy"}}).body);
    REQUIRE(j.size() == 2);
    for (const auto& a : {"fluidity", "vibrancy", "commutation", "diversity"}) {
        CHECK(j[0]["axes"][a] == 0.0);
        CHECK(j[1]["axes"][a] == 1.0);
    }
    ApiService flat(toy_catalog(1.5, 1.5));
    const auto k = json::parse(get(flat, "/starplot", {{"city", "toy"}}).body);
    for (const auto& d : k) {
        for (const auto& a : {"fluidity", "vibrancy", "commutation", "diversity"}) CHECK(d["axes"][a] == 0.5);
        CHECK(d["density_norm"] == 0.5);
    }
}

TEST_CASE("histogram, region and star plot agree on the same field") {
    const auto& city = env().city();
    const Division* d = city.level(DivisionLevel::Div)[2];
    const auto star = get_json("/starplot", {{"city", "mini"}, {"filter", "weekday"}});
    const auto region = post_region({{"city", "mini"}, {"filter", "weekday"}, {"metrics", {"vibrancy"}},
                                     {"selection", {{"kind", "division"}, {"id", d->id}}}});
    CHECK(star[2]["values"]["vibrancy"].get<double>() ==
          doctest::Approx(region["metrics"][0]["value"].get<double>()).epsilon(1e-6));
    const auto h = get_json("/histogram", {{"city", "mini"}, {"metric", "vibrancy"}, {"filter", "weekday"}});
    const auto whole = post_region({{"city", "mini"}, {"filter", "weekday"}, {"metrics", {"vibrancy"}},
                                    {"selection", {{"kind", "whole"}}}});
    std::uint64_t n = 0;
    for (auto c : h["counts"]) n += c.get<std::uint64_t>();
    CHECK(n == h["cells"].get<std::uint64_t>());
    CHECK(whole["metrics"][0]["cells_with_data"].get<std::uint64_t>() == n);
}

TEST_CASE("compare bundles") {
    const auto t = get_json("/compare", {{"mode", "time"}, {"city", "mini"}, {"metric", "fluidity"}});
    REQUIRE(t["views"].size() == 6);
    const std::vector<std::string> order = {"morning", "forenoon", "noon", "afternoon", "evening", "night"};
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(t["views"][i]["filter"] == order[i]);
        CHECK(t["views"][i]["available"] == true);
    }
    CHECK(t["synchronized"] == true);

    const auto w = get_json("/compare", {{"mode", "week"}, {"city", "mini"}, {"metric", "fluidity"}});
    REQUIRE(w["views"].size() == 2);
    CHECK(w["views"][0]["filter"] == "weekday");
    CHECK(w["views"][1]["filter"] == "weekend");

    const auto c = get_json("/compare", {{"mode", "city"}, {"cities", "mini"}, {"metric", "density"}});
    CHECK(c["synchronized"] == false);
    CHECK(c["views"].size() == 1);
    CHECK(get("/compare", {{"mode", "city"}, {"cities", "mini,mini,mini,mini,mini"}, {"metric", "density"}}).status ==
          422);
    CHECK(get("/compare", {{"mode", "time"}, {"city", "mini"}, {"metric", "density"}, {"filters", "noon"}}).status ==
          422);
    CHECK(get("/compare", {{"mode", "space"}, {"metric", "density"}}).status == 422);

    // every advertised sub-view URL resolves
    const auto with_view = get_json("/compare", {{"mode", "time"}, {"city", "mini"}, {"metric", "density"},
                                                 {"width", "40"}, {"height", "30"}});
    for (const auto& v : with_view["views"]) {
        const std::string url = v["raster"];
        Params p;
        const auto q = url.substr(url.find('?') + 1);
        std::size_t start = 0;
        while (start < q.size()) {
            auto amp = q.find('&', start);
            if (amp == std::string::npos) amp = q.size();
            const auto kv = q.substr(start, amp - start);
            p[kv.substr(0, kv.find('='))] = kv.substr(kv.find('=') + 1);
            start = amp + 1;
        }
        const auto r = get(url.substr(0, url.find('?')), p);
        CHECK(r.status == 200);
        CHECK(decode_raster(r.body).header["width"] == 40);
    }
}

TEST_CASE("POI top-q filter matches a sort-based oracle") {
    const auto& city = env().city();
    const int cls = 3;
    std::size_t of_class = 0;
    for (const auto& p : city.pois) of_class += p.class_id == cls ? 1 : 0;
    CHECK(get_json("/pois", {{"city", "mini"}, {"class", "3"}}).size() == of_class);

    const auto& field = *city.field(MetricKind::Vibrancy, TimeFilter::all());
    for (double q : {0.0, 0.1, 0.35, 0.8}) {
        std::vector<std::pair<double, std::uint32_t>> ranked;
        for (const auto& c : field.cells) ranked.emplace_back(c.mean, c.cell);
        std::sort(ranked.begin(), ranked.end(), std::greater<>());
        const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(q * ranked.size())));
        const double threshold = ranked[k - 1].first;
        std::vector<std::string> want;
        for (const auto& p : city.pois) {
            if (p.class_id != cls) continue;
            const auto cell = city.lattice.assign(p.center.lon, p.center.lat);
            if (!cell) continue;
            const auto* st = field.find(static_cast<std::uint32_t>(city.lattice.index(*cell)));
            if (st && st->mean >= threshold) want.push_back(p.id);
        }
        const auto j = get_json("/pois", {{"city", "mini"}, {"class", "3"}, {"metric", "vibrancy"},
                                          {"q", std::to_string(q)}});
        std::vector<std::string> got;
        for (const auto& p : j) got.push_back(p["id"]);
        CHECK(got == want);
    }
    CHECK(get("/pois", {{"city", "mini"}, {"class", "10"}}).status == 422);
    CHECK(get("/pois", {{"city", "mini"}}).status == 422);
    CHECK(get("/pois", {{"city", "mini"}, {"class", "1"}, {"q", "1.5"}}).status == 422);
}

TEST_CASE("unknown routes and wrong methods") {
    CHECK(get("/nothing").status == 404);
    CHECK(get("/region/stats").status == 405);
    CHECK(env().service->handle("POST", "/cities", {}).status == 405);
    CHECK(env().service->handle("DELETE", "/raster", {}).status == 405);
}

TEST_CASE("reload swaps in newly added cities") {
    TempDir root;
    ApiService s(root.path());
    CHECK(json::parse(get(s, "/cities").body).empty());
    auto spec = uf::testing::mini_spec(72);
    write_city(generate_city(spec), root / "late");
    s.reload();
    const auto j = json::parse(get(s, "/cities").body);
    REQUIRE(j.size() == 1);
    CHECK(j[0]["id"] == "late");
    CHECK(j[0]["fields"].empty());
    CHECK(get(s, "/histogram", {{"city", "late"}, {"metric", "density"}}).status == 404);
}

TEST_CASE("HTTP transport serves the same bytes with CORS") {
    httplib::Server server;
    mount_service(server, *env().service);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto r = client.Get("/histogram?city=mini&metric=density&bins=7");
    REQUIRE(r);
    CHECK(r->status == 200);
    CHECK(r->get_header_value("Access-Control-Allow-Origin") == "*");
    CHECK(r->body == get("/histogram", {{"city", "mini"}, {"metric", "density"}, {"bins", "7"}}).body);

    auto p = client.Post("/region/stats", json{{"city", "mini"}, {"selection", {{"kind", "whole"}}}}.dump(),
                         "application/json");
    REQUIRE(p);
    CHECK(p->status == 200);
    auto e = client.Get("/raster?city=mini&metric=nope");
    REQUIRE(e);
    CHECK(e->status == 404);
    CHECK(json::parse(e->body)["code"] == 404);
    auto put = client.Put("/cities", "", "text/plain");
    REQUIRE(put);
    CHECK(put->status == 405);
    auto pre = client.Options("/region/stats");
    REQUIRE(pre);
    CHECK(pre->status == 204);

    server.stop();
    t.join();
}
