#include "uf/service.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

#include <json.hpp>

#include "csv.hpp"
#include "uf/http.hpp"
#include "uf/pipeline.hpp"

namespace uf {

namespace fs = std::filesystem;
using nlohmann::json;

const GridMetricField* CityData::field(MetricKind m, const TimeFilter& f) const {
    auto it = fields.find({m, f.code()});
    return it == fields.end() ? nullptr : &it->second;
}

std::vector<const Division*> CityData::level(DivisionLevel lvl) const {
    std::vector<const Division*> out;
    for (const auto& d : divisions)
        if (d.level == lvl) out.push_back(&d);
    return out;
}

std::shared_ptr<const CityData> load_city_data(const fs::path& dir) {
    CityInputs in = load_city_inputs(dir);
    auto city = std::make_shared<CityData>();
    city->id = dir.filename().string();
    if (city->id.empty() || city->id == ".") city->id = fs::absolute(dir).lexically_normal().parent_path().filename().string();
    city->config = std::move(in.config);
    city->lattice = in.lattice;
    city->pois = std::move(in.pois);
    city->divisions = std::move(in.divisions);
    city->has_demographics = in.demographics.applied > 0;

    const CityPaths paths{dir};
    if (fs::is_directory(paths.fields())) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(paths.fields()))
            if (e.path().extension() == ".ufmf") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            GridMetricField field = read_field_cache(f);
            if (field.cols != city->lattice.cols || field.rows != city->lattice.rows)
                fail(ErrorKind::DataContract, "field cache " + f.string() + " does not match the city lattice");
            auto companion = f;
            companion.replace_extension(".ufmb");
            if (fs::exists(companion)) read_breakdown_cache(companion, field);
            const auto key = std::make_pair(field.metric, field.filter.code());
            city->fields.emplace(key, std::move(field));
        }
    }
    return city;
}

std::shared_ptr<const Catalog> load_catalog(const fs::path& data_dir) {
    if (!fs::is_directory(data_dir)) fail(ErrorKind::Io, "data directory not found: " + data_dir.string());
    auto catalog = std::make_shared<Catalog>();
    auto add = [&](const fs::path& dir) {
        auto city = load_city_data(dir);
        catalog->cities[city->id] = std::move(city);
    };
    if (fs::exists(data_dir / "city.json")) {
        add(data_dir);
    } else {
        std::vector<fs::path> dirs;
        for (const auto& e : fs::directory_iterator(data_dir))
            if (e.is_directory() && fs::exists(e.path() / "city.json")) dirs.push_back(e.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& d : dirs) add(d);
    }
    return catalog;
}

namespace {

struct HttpError {
    int status;
    std::string message;
};

[[noreturn]] void reject(int status, const std::string& message) { throw HttpError{status, message}; }

Response json_response(const json& j) { return {200, "application/json", j.dump()}; }

Response error_response(int status, const std::string& message) {
    return {status, "application/json", json{{"code", status}, {"message", message}}.dump()};
}

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> param(const Params& p, const std::string& key) {
    auto it = p.find(key);
    if (it == p.end() || it->second.empty()) return std::nullopt;
    return it->second;
}

std::string required(const Params& p, const std::string& key) {
    auto v = param(p, key);
    if (!v) reject(422, "missing parameter '" + key + "'");
    return *v;
}

double number(const Params& p, const std::string& key, double fallback) {
    auto v = param(p, key);
    if (!v) return fallback;
    double d = 0.0;
    if (!detail::to_double(*v, d)) reject(422, "parameter '" + key + "' is not a number");
    return d;
}

int integer(const Params& p, const std::string& key, int fallback) {
    auto v = param(p, key);
    if (!v) return fallback;
    int i = 0;
    if (!detail::to_int(*v, i)) reject(422, "parameter '" + key + "' is not an integer");
    return i;
}

bool flag(const Params& p, const std::string& key) {
    auto v = param(p, key);
    if (!v) return false;
    if (*v == "1" || *v == "true") return true;
    if (*v == "0" || *v == "false") return false;
    reject(422, "parameter '" + key + "' must be true or false");
}

std::vector<std::string> list(const std::string& s) {
    std::vector<std::string> out;
    for (auto f : detail::split_csv(s)) out.emplace_back(f);
    return out;
}

BBox parse_bbox(const std::string& s) {
    const auto parts = list(s);
    if (parts.size() != 4) reject(422, "bbox needs lon_min,lat_min,lon_max,lat_max");
    double v[4];
    for (int i = 0; i < 4; ++i) {
        if (!detail::to_double(parts[static_cast<std::size_t>(i)], v[i])) reject(422, "bbox has a non-numeric value");
    }
    return {v[0], v[1], v[2], v[3]};
}

TimeFilter parse_filter(const std::string& s) {
    auto f = TimeFilter::parse(s);
    if (!f) reject(422, "unknown time filter '" + s + "'");
    return *f;
}

TimeFilter filter_param(const Params& p) { return parse_filter(param(p, "filter").value_or("all")); }

MetricKind parse_metric_name(const std::string& s) {
    auto m = parse_metric(s);
    if (!m) reject(404, "unknown metric '" + s + "'");
    return *m;
}

const GridMetricField& field_of(const CityData& city, MetricKind m, const TimeFilter& f) {
    const GridMetricField* field = city.field(m, f);
    if (!field)
        reject(404, "no cached field " + field_file_stem(m, f) + " for city '" + city.id + "'");
    return *field;
}

enum class Demographic { Gdp, Population, HousePrice };

std::optional<Demographic> parse_demographic(const std::string& s) {
    if (s == "gdp") return Demographic::Gdp;
    if (s == "population") return Demographic::Population;
    if (s == "house_price") return Demographic::HousePrice;
    return std::nullopt;
}

double demographic_value(const Demographics& d, Demographic which) {
    switch (which) {
        case Demographic::Gdp: return d.gdp;
        case Demographic::Population: return d.population;
        case Demographic::HousePrice: return d.house_price;
    }
    return 0.0;
}

std::optional<std::pair<double, double>> mean_range(const GridMetricField& field) {
    if (field.cells.empty()) return std::nullopt;
    auto [lo, hi] = std::minmax_element(field.cells.begin(), field.cells.end(),
                                        [](const CellStat& a, const CellStat& b) { return a.mean < b.mean; });
    return std::make_pair(lo->mean, hi->mean);
}

class Handler {
public:
    explicit Handler(std::shared_ptr<const Catalog> catalog) : catalog_(std::move(catalog)) {}

    Response dispatch(const std::string& method, const std::string& path, const Params& params,
                      const std::string& body) const {
        using Route = Response (Handler::*)(const Params&, const std::string&) const;
        static const std::map<std::pair<std::string, std::string>, Route> routes = {
            {{"GET", "/cities"}, &Handler::cities},       {{"GET", "/raster"}, &Handler::raster},
            {{"GET", "/histogram"}, &Handler::histogram}, {{"POST", "/region/stats"}, &Handler::region},
            {{"GET", "/starplot"}, &Handler::starplot},   {{"GET", "/compare"}, &Handler::compare},
            {{"GET", "/pois"}, &Handler::pois},
        };
        auto it = routes.find({method, path});
        if (it == routes.end()) {
            for (const auto& [key, _] : routes)
                if (key.second == path) return error_response(405, "method not allowed");
            return error_response(404, "no route " + path);
        }
        try {
            return (this->*(it->second))(params, body);
        } catch (const HttpError& e) {
            return error_response(e.status, e.message);
        } catch (const Error& e) {
            switch (e.kind()) {
                case ErrorKind::NotFound: return error_response(404, e.what());
                case ErrorKind::Io: return error_response(500, e.what());
                default: return error_response(422, e.what());
            }
        }
    }

private:
    const CityData& city_of(const std::string& id) const {
        auto it = catalog_->cities.find(id);
        if (it == catalog_->cities.end()) reject(404, "unknown city '" + id + "'");
        return *it->second;
    }

    const CityData& city_param(const Params& p) const { return city_of(required(p, "city")); }

    Response cities(const Params&, const std::string&) const {
        json out = json::array();
        for (const auto& [id, c] : catalog_->cities) {
            const auto& b = c->config.bbox;
            json levels = json::array();
            for (auto lvl : {DivisionLevel::Div, DivisionLevel::Subdistrict})
                if (!c->level(lvl).empty()) levels.push_back(level_name(lvl));
            json metrics = json::array();
            json filters = json::array();
            json cached = json::array();
            for (MetricKind m : kAllMetrics) {
                bool any = false;
                for (const auto& [key, field] : c->fields)
                    if (key.first == m) any = true;
                if (any) metrics.push_back(metric_name(m));
            }
            for (const auto& f : all_time_filters()) {
                bool any = false;
                for (const auto& [key, field] : c->fields)
                    if (key.second == f.code()) any = true;
                if (any) filters.push_back(f.name());
            }
            for (const auto& [key, field] : c->fields) cached.push_back(field_file_stem(field.metric, field.filter));
            out.push_back({{"id", id},
                           {"name", c->config.name},
                           {"bbox", {b.lon_min, b.lat_min, b.lon_max, b.lat_max}},
                           {"ref_lat", c->config.ref_lat},
                           {"lattice", {{"cols", c->lattice.cols}, {"rows", c->lattice.rows},
                                        {"step_m", c->config.lattice_step_m}}},
                           {"levels", levels},
                           {"metrics", metrics},
                           {"filters", filters},
                           {"fields", cached},
                           {"demographics", c->has_demographics},
                           {"pois", c->pois.size()}});
        }
        return json_response(out);
    }

    static Viewport viewport_param(const Params& p, const CityData& city) {
        Viewport v;
        v.bbox = param(p, "bbox") ? parse_bbox(*param(p, "bbox")) : city.config.bbox;
        v.width = integer(p, "width", 256);
        v.height = integer(p, "height", 256);
        v.zoom = number(p, "zoom", 1.0);
        if (v.width > 4096 || v.height > 4096) reject(422, "viewport larger than 4096 pixels");
        try {
            v.validate();
        } catch (const Error& e) {
            reject(422, e.what());
        }
        return v;
    }

    Response raster(const Params& p, const std::string&) const {
        const CityData& city = city_param(p);
        const std::string metric = required(p, "metric");
        const Viewport v = viewport_param(p, city);
        if (auto demo = parse_demographic(metric)) return demographic_raster(city, *demo, v);
        const MetricKind m = parse_metric_name(metric);
        const GridMetricField& field = field_of(city, m, filter_param(p));
        Viewport base = v;
        base.zoom = 1.0;
        const double radius = number(p, "radius_px", default_radius_px(city.lattice, base));
        if (!(radius > 0.0)) reject(422, "radius_px must be positive");
        const DiffusionParams params{radius, flag(p, "adaptive"), v};
        return {200, "application/octet-stream", encode_raster(rasterize_field(field, city.lattice, params))};
    }

    // Uniform per-division values: every pixel takes its DIV's figure.
    static Response demographic_raster(const CityData& city, Demographic which, const Viewport& v) {
        if (!city.has_demographics) reject(404, "city '" + city.id + "' has no demographics");
        const auto divs = city.level(DivisionLevel::Div);
        ScalarRaster out{v.width, v.height, std::vector<double>(static_cast<std::size_t>(v.width) * v.height, 0.0),
                         0.0, 0.0};
        for (int j = 0; j < v.height; ++j)
            for (int i = 0; i < v.width; ++i) {
                const LonLat at{v.bbox.lon_min + (i + 0.5) / v.width * v.bbox.width(),
                                v.bbox.lat_max - (j + 0.5) / v.height * v.bbox.height()};
                for (const Division* d : divs)
                    if (d->demographics && d->contains(at)) {
                        out.values[static_cast<std::size_t>(j) * v.width + i] = demographic_value(*d->demographics, which);
                        break;
                    }
            }
        out.update_range();
        return {200, "application/octet-stream", encode_raster(out)};
    }

    Response histogram(const Params& p, const std::string&) const {
        const CityData& city = city_param(p);
        const MetricKind m = parse_metric_name(required(p, "metric"));
        const TimeFilter f = filter_param(p);
        const int bins = integer(p, "bins", 20);
        if (bins < 1 || bins > 10000) reject(422, "bins must be in [1, 10000]");
        const GridMetricField& field = field_of(city, m, f);
        const Histogram h = field_histogram(field, bins);
        return json_response({{"city", city.id},
                              {"metric", metric_name(m)},
                              {"filter", f.name()},
                              {"cells", field.cells.size()},
                              {"lo", h.lo},
                              {"hi", h.hi},
                              {"width", h.width},
                              {"counts", h.counts},
                              {"density", h.density}});
    }

    static LonLat point_of(const json& j) {
        if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
            reject(422, "points are [lon, lat] pairs");
        return {j[0].get<double>(), j[1].get<double>()};
    }

    static Polygon polygon_of(const json& rings, const BBox& bbox) {
        if (!rings.is_array() || rings.empty()) reject(422, "polygon needs at least one ring");
        Polygon poly;
        for (const auto& r : rings) {
            if (!r.is_array()) reject(422, "polygon rings are arrays of points");
            Ring ring;
            for (const auto& pt : r) {
                const LonLat ll = point_of(pt);
                if (!std::isfinite(ll.lon) || !std::isfinite(ll.lat) || !bbox.contains(ll.lon, ll.lat))
                    reject(422, "polygon vertex outside the city bbox");
                ring.push_back(ll);
            }
            if (ring.size() < 3) reject(422, "polygon ring needs at least 3 vertices");
            poly.rings.push_back(std::move(ring));
        }
        return poly;
    }

    Response region(const Params& p, const std::string& body) const {
        json req;
        try {
            req = body.empty() ? json::object() : json::parse(body);
        } catch (const json::exception& e) {
            reject(422, std::string("body is not JSON: ") + e.what());
        }
        if (!req.is_object()) reject(422, "body must be a JSON object");
        try {
            return region_request(p, req);
        } catch (const json::exception& e) {
            reject(422, std::string("malformed selection: ") + e.what());
        }
    }

    Response region_request(const Params& p, const json& req) const {
        const std::string city_id = req.contains("city") ? req.at("city").get<std::string>() : required(p, "city");
        const CityData& city = city_of(city_id);
        const TimeFilter f = parse_filter(req.value("filter", param(p, "filter").value_or("all")));
        std::vector<MetricKind> metrics;
        if (req.contains("metrics")) {
            for (const auto& m : req.at("metrics")) metrics.push_back(parse_metric_name(m.get<std::string>()));
        } else {
            metrics.assign(kAllMetrics.begin(), kAllMetrics.end());
        }
        if (!req.contains("selection")) reject(422, "missing selection");
        const json& sel = req.at("selection");
        const std::string kind = sel.at("kind").get<std::string>();
        const BBox& bbox = city.config.bbox;

        json extra = json::object();
        Region region;
        if (kind == "whole") {
            region = region_whole(city.lattice);
        } else if (kind == "rect") {
            const auto b = sel.at("bbox").get<std::vector<double>>();
            if (b.size() != 4) reject(422, "rect bbox needs 4 numbers");
            const BBox r{b[0], b[1], b[2], b[3]};
            if (!(r.lon_min < r.lon_max && r.lat_min < r.lat_max)) reject(422, "rect is degenerate");
            if (r.lon_max < bbox.lon_min || r.lon_min > bbox.lon_max || r.lat_max < bbox.lat_min ||
                r.lat_min > bbox.lat_max)
                reject(422, "rect lies outside the city bbox");
            region = region_from_rect(city.lattice, r);
        } else if (kind == "polygon") {
            region = region_from_polygon(city.lattice, polygon_of(sel.at("rings"), bbox));
        } else if (kind == "division") {
            const std::string id = sel.at("id").get<std::string>();
            const Division* found = nullptr;
            for (const auto& d : city.divisions)
                if (d.id == id) found = &d;
            if (!found) reject(404, "unknown division '" + id + "'");
            region = region_from_division(city.lattice, *found);
        } else if (kind == "iso-point") {
            const MetricKind m = parse_metric_name(sel.at("metric").get<std::string>());
            const double lon = sel.at("lon").get<double>();
            const double lat = sel.at("lat").get<double>();
            const double tol = sel.value("tolerance", 0.0);
            if (!(tol >= 0.0)) reject(422, "tolerance must be >= 0");
            const auto cell = city.lattice.assign(lon, lat);
            if (!cell) reject(422, "iso-point lies outside the city bbox");
            const GridMetricField& field = field_of(city, m, f);
            const CellStat* at = field.find(static_cast<std::uint32_t>(city.lattice.index(*cell)));
            if (!at) reject(422, "no data at the iso-point");
            region.cells = iso_value_cells(field, at->mean, tol);
            extra = {{"metric", metric_name(m)}, {"value", at->mean}, {"tolerance", tol}, {"cells", region.cells}};
        } else {
            reject(422, "unknown selection kind '" + kind + "'");
        }

        std::vector<const GridMetricField*> fields;
        for (MetricKind m : metrics) fields.push_back(&field_of(city, m, f));
        const RegionStats stats = region_stats(fields, region);
        json ms = json::array();
        for (const auto& s : stats.metrics)
            ms.push_back({{"metric", metric_name(s.metric)},
                          {"value", opt(s.value)},
                          {"records", s.records},
                          {"cells_with_data", s.cells_with_data},
                          {"breakdown", s.breakdown}});
        json out = {{"city", city.id}, {"filter", f.name()}, {"kind", kind}, {"lattice_cells", stats.lattice_cells},
                    {"metrics", ms}};
        if (!extra.empty()) out["iso"] = extra;
        return json_response(out);
    }

    Response starplot(const Params& p, const std::string&) const {
        const CityData& city = city_param(p);
        const std::string level_s = param(p, "level").value_or("DIV");
        const auto level = parse_level(level_s);
        if (!level) reject(422, "unknown level '" + level_s + "'");
        const TimeFilter f = filter_param(p);
        const auto divs = city.level(*level);
        if (divs.empty()) reject(404, "city '" + city.id + "' has no divisions at level " + level_s);

        // axes in glyph order, then density
        constexpr std::array<MetricKind, 5> order = {MetricKind::Fluidity, MetricKind::Vibrancy,
                                                     MetricKind::Commutation, MetricKind::Diversity,
                                                     MetricKind::Density};
        std::vector<const GridMetricField*> fields;
        for (MetricKind m : order) fields.push_back(&field_of(city, m, f));

        std::vector<RegionStats> stats;
        for (const Division* d : divs) stats.push_back(region_stats(fields, region_from_division(city.lattice, *d)));

        std::array<double, 5> lo, hi;
        lo.fill(std::numeric_limits<double>::infinity());
        hi.fill(-std::numeric_limits<double>::infinity());
        for (const auto& s : stats)
            for (std::size_t k = 0; k < order.size() && k < s.metrics.size(); ++k)
                if (s.metrics[k].value) {
                    lo[k] = std::min(lo[k], *s.metrics[k].value);
                    hi[k] = std::max(hi[k], *s.metrics[k].value);
                }
        // min/max normalization; a collapsed range maps to 0.5
        auto norm = [&](std::size_t k, const std::optional<double>& v) {
            if (!v) return 0.0;
            if (!(hi[k] > lo[k])) return 0.5;
            return std::clamp((*v - lo[k]) / (hi[k] - lo[k]), 0.0, 1.0);
        };

        json out = json::array();
        for (std::size_t i = 0; i < divs.size(); ++i) {
            const auto& s = stats[i];
            auto value = [&](std::size_t k) { return s.empty() ? std::optional<double>{} : s.metrics[k].value; };
            const LonLat c = divs[i]->centroid();
            json axes, values;
            for (std::size_t k = 0; k + 1 < order.size(); ++k) {
                axes[std::string(metric_name(order[k]))] = norm(k, value(k));
                values[std::string(metric_name(order[k]))] = opt(value(k));
            }
            values["density"] = opt(value(4));
            out.push_back({{"id", divs[i]->id},
                           {"name", divs[i]->name},
                           {"centroid", {c.lon, c.lat}},
                           {"axes", axes},
                           {"density_norm", norm(4, value(4))},
                           {"values", values},
                           {"records", s.empty() ? 0 : s.metrics[4].records}});
        }
        return json_response(out);
    }

    json view(const CityData& city, MetricKind m, const TimeFilter& f, const std::string& label,
              const std::string& suffix) const {
        const GridMetricField* field = city.field(m, f);
        json v = {{"label", label}, {"city", city.id}, {"metric", metric_name(m)}, {"filter", f.name()},
                  {"available", field != nullptr}};
        v["raster"] = "/raster?city=" + city.id + "&metric=" + std::string(metric_name(m)) + "&filter=" + f.name() + suffix;
        v["histogram"] = "/histogram?city=" + city.id + "&metric=" + std::string(metric_name(m)) + "&filter=" + f.name();
        auto range = field ? mean_range(*field) : std::nullopt;
        v["value_range"] = range ? json{range->first, range->second} : json(nullptr);
        v["records"] = field ? field->total_count() : 0;
        return v;
    }

    Response compare(const Params& p, const std::string&) const {
        const std::string mode = required(p, "mode");
        const MetricKind m = parse_metric_name(required(p, "metric"));
        // viewport parameters are forwarded to every sub-view's raster URL
        std::string suffix;
        for (const char* key : {"bbox", "width", "height", "zoom", "radius_px", "adaptive"})
            if (auto v = param(p, key)) suffix += std::string("&") + key + "=" + *v;

        json views = json::array();
        bool synchronized = true;
        if (mode == "time") {
            const CityData& city = city_param(p);
            std::vector<TimeFilter> filters;
            if (auto fs_ = param(p, "filters")) {
                for (const auto& name : list(*fs_)) filters.push_back(parse_filter(name));
            } else {
                for (int b = 0; b < kComparisonBands; ++b) filters.push_back(TimeFilter::time_of_day(b));
            }
            if (filters.size() < 2 || filters.size() > 6) reject(422, "time comparison takes 2 to 6 sub-views");
            for (const auto& f : filters) views.push_back(view(city, m, f, f.name(), suffix));
        } else if (mode == "week") {
            const CityData& city = city_param(p);
            for (const auto& f : {TimeFilter::weekday(), TimeFilter::weekend()})
                views.push_back(view(city, m, f, f.name(), suffix));
        } else if (mode == "city") {
            const auto ids = list(required(p, "cities"));
            if (ids.empty() || ids.size() > 4) reject(422, "city comparison takes 1 to 4 cities");
            const TimeFilter f = filter_param(p);
            synchronized = false;
            // each city keeps its own viewport, so only size parameters are forwarded
            std::string own;
            for (const char* key : {"width", "height", "radius_px", "adaptive"})
                if (auto v = param(p, key)) own += std::string("&") + key + "=" + *v;
            for (const auto& id : ids) views.push_back(view(city_of(id), m, f, id, own));
        } else {
            reject(422, "mode must be time, week or city");
        }
        return json_response({{"mode", mode}, {"metric", metric_name(m)}, {"synchronized", synchronized},
                              {"views", views}});
    }

    Response pois(const Params& p, const std::string&) const {
        const CityData& city = city_param(p);
        const int cls = integer(p, "class", -1);
        if (cls < 0 || cls >= kPoiClasses) reject(422, "class must be in [0, 9]");
        const double q = number(p, "q", 1.0);
        if (!(q >= 0.0 && q <= 1.0)) reject(422, "q must be in [0, 1]");

        std::vector<std::uint32_t> keep;
        const bool everything = q >= 1.0;
        if (!everything) {
            const MetricKind m = parse_metric_name(param(p, "metric").value_or("density"));
            const GridMetricField& field = field_of(city, m, filter_param(p));
            if (!field.cells.empty()) {
                std::vector<double> means;
                for (const auto& c : field.cells) means.push_back(c.mean);
                std::sort(means.begin(), means.end(), std::greater<>());
                const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(q * means.size())));
                const double threshold = means[std::min(k, means.size()) - 1];
                for (const auto& c : field.cells)
                    if (c.mean >= threshold) keep.push_back(c.cell);
            }
        }
        json out = json::array();
        for (const auto& poi : city.pois) {
            if (poi.class_id != cls) continue;
            if (!everything) {
                const auto cell = city.lattice.assign(poi.center.lon, poi.center.lat);
                if (!cell) continue;
                const auto idx = static_cast<std::uint32_t>(city.lattice.index(*cell));
                if (!std::binary_search(keep.begin(), keep.end(), idx)) continue;
            }
            out.push_back({{"id", poi.id},
                           {"class_id", poi.class_id},
                           {"class", poi_class_name(poi.class_id)},
                           {"lon", poi.center.lon},
                           {"lat", poi.center.lat},
                           {"kind", poi.kind == PoiKind::Area ? "area" : "point"},
                           {"radius_m", poi.radius_m}});
        }
        return json_response(out);
    }

    std::shared_ptr<const Catalog> catalog_;
};

}  // namespace

ApiService::ApiService(fs::path data_dir) : data_dir_(std::move(data_dir)), catalog_(load_catalog(data_dir_)) {}

ApiService::ApiService(std::shared_ptr<const Catalog> catalog) : catalog_(std::move(catalog)) {}

std::shared_ptr<const Catalog> ApiService::snapshot() const {
    std::lock_guard lock(mutex_);
    return catalog_;
}

void ApiService::reload() {
    if (data_dir_.empty()) return;
    auto fresh = load_catalog(data_dir_);
    std::lock_guard lock(mutex_);
    catalog_ = std::move(fresh);
}

Response ApiService::handle(const std::string& method, const std::string& path, const Params& params,
                            const std::string& body) const {
    return Handler(snapshot()).dispatch(method, path, params, body);
}

void mount_service(httplib::Server& server, const ApiService& service) {
    auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
        Params params;
        for (const auto& [k, v] : req.params) params.emplace(k, v);
        const Response r = service.handle(req.method, req.path, params, req.body);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    server.Get(".*", bridge);
    server.Post(".*", bridge);
    server.Put(".*", bridge);
    server.Delete(".*", bridge);
    server.Patch(".*", bridge);
}

void run_server(ApiService& service, const std::string& host, int port) {
    httplib::Server server;
    mount_service(server, service);
    if (!server.listen(host, port)) fail(ErrorKind::Io, "cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace uf
