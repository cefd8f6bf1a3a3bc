#include "uf/geo_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "csv.hpp"

namespace uf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view poi_class_name(int class_id) {
    static constexpr std::array<std::string_view, kPoiClasses> kNames = {
        "Food & Supply",    "Entertainment & Leisure", "Education",          "Transportation",
        "Healthcare & Emergency", "Financial & Bank",  "Accommodation",      "Office & Commercial",
        "Natural Landscape", "Factory & Manufacturer",
    };
    if (class_id < 0 || class_id >= kPoiClasses) return "?";
    return kNames[static_cast<std::size_t>(class_id)];
}

std::chrono::sys_days parse_date(const std::string& ymd) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    char tail = 0;
    if (std::sscanf(ymd.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3)
        fail(ErrorKind::DataContract, "bad date '" + ymd + "', expected YYYY-MM-DD");
    const std::chrono::year_month_day date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!date.ok()) fail(ErrorKind::DataContract, "invalid calendar date '" + ymd + "'");
    return std::chrono::sys_days{date};
}

std::string format_date(std::chrono::sys_days d) {
    const std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

void CityConfig::validate() const {
    const auto& b = bbox;
    if (!(b.lon_min < b.lon_max) || !(b.lat_min < b.lat_max))
        fail(ErrorKind::Invalid, "unsupported region: degenerate or antimeridian-spanning bbox");
    if (b.lon_min < -180.0 || b.lon_max > 180.0 || b.lat_min <= -90.0 || b.lat_max >= 90.0)
        fail(ErrorKind::Invalid, "unsupported region: bbox touches a pole or leaves [-180,180]");
    if (ref_lat <= -90.0 || ref_lat >= 90.0) fail(ErrorKind::Invalid, "ref_lat must lie strictly inside (-90, 90)");
    if (!(lattice_step_m > 0.0)) fail(ErrorKind::Invalid, "lattice_step_m must be positive");
    if (!(poi_valid_range_m >= lattice_step_m / 2.0))
        fail(ErrorKind::Invalid, "poi_valid_range_m must be at least half the lattice step");
    if (days < 1) fail(ErrorKind::Invalid, "days must be >= 1");
}

CityConfig load_city_config(const fs::path& path) {
    CityConfig cfg;
    try {
        const json j = json::parse(read_file(path));
        cfg.name = j.at("name").get<std::string>();
        const auto bb = j.at("bbox").get<std::vector<double>>();
        if (bb.size() != 4) fail(ErrorKind::DataContract, "bbox needs 4 numbers");
        cfg.bbox = {bb[0], bb[1], bb[2], bb[3]};
        cfg.ref_lat = j.value("ref_lat", (bb[1] + bb[3]) / 2.0);
        cfg.lattice_step_m = j.value("lattice_step_m", 200.0);
        cfg.poi_valid_range_m = j.value("poi_valid_range_m", 500.0);
        cfg.epoch = parse_date(j.value("epoch", std::string("2015-07-01")));
        cfg.days = j.value("days", 90);
    } catch (const json::exception& e) {
        fail(ErrorKind::DataContract, path.string() + ": " + e.what());
    }
    // an invalid config on disk is a broken input, not a bad argument
    try {
        cfg.validate();
    } catch (const Error& e) {
        fail(ErrorKind::DataContract, path.string() + ": " + e.what());
    }
    return cfg;
}

void write_city_config(const fs::path& path, const CityConfig& cfg) {
    json j;
    j["name"] = cfg.name;
    j["bbox"] = {cfg.bbox.lon_min, cfg.bbox.lat_min, cfg.bbox.lon_max, cfg.bbox.lat_max};
    j["ref_lat"] = cfg.ref_lat;
    j["lattice_step_m"] = cfg.lattice_step_m;
    j["poi_valid_range_m"] = cfg.poi_valid_range_m;
    j["epoch"] = format_date(cfg.epoch);
    j["days"] = cfg.days;
    write_file(path, j.dump(2) + "\n");
}

double Lattice::meters_per_deg_lon() const noexcept {
    return kMetersPerDegree * std::cos(ref_lat * std::numbers::pi / 180.0);
}

std::optional<Cell> Lattice::assign(double lon, double lat) const noexcept {
    if (!bbox.contains(lon, lat)) return std::nullopt;
    const double inv_lon = 1.0 / step_lon;
    const double inv_lat = 1.0 / step_lat;
    long c = std::lround((lon - lon0) * inv_lon);
    long r = std::lround((lat - lat0) * inv_lat);
    c = std::clamp(c, 0L, static_cast<long>(cols) - 1);
    r = std::clamp(r, 0L, static_cast<long>(rows) - 1);
    return Cell{static_cast<int>(c), static_cast<int>(r)};
}

Lattice build_lattice(const CityConfig& cfg) {
    cfg.validate();
    Lattice l;
    l.bbox = cfg.bbox;
    l.ref_lat = cfg.ref_lat;
    l.lon0 = cfg.bbox.lon_min;
    l.lat0 = cfg.bbox.lat_min;
    l.step_lat = cfg.lattice_step_m / kMetersPerDegree;
    l.step_lon = cfg.lattice_step_m / (kMetersPerDegree * std::cos(cfg.ref_lat * std::numbers::pi / 180.0));
    // exact multiples of the step must not gain a spurious extra column
    constexpr double kSlack = 1e-9;
    l.cols = std::max(1, static_cast<int>(std::ceil(cfg.bbox.width() / l.step_lon - kSlack)));
    l.rows = std::max(1, static_cast<int>(std::ceil(cfg.bbox.height() / l.step_lat - kSlack)));
    return l;
}

double distance_m(LonLat a, LonLat b, double ref_lat) noexcept {
    const double dx = (a.lon - b.lon) * kMetersPerDegree * std::cos(ref_lat * std::numbers::pi / 180.0);
    const double dy = (a.lat - b.lat) * kMetersPerDegree;
    return std::sqrt(dx * dx + dy * dy);
}

std::vector<Poi> load_pois(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open POI file " + path.string());
    std::vector<Poi> pois;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto f = detail::split_csv(line);
        if (f.size() == 1 && f[0].empty()) continue;
        if (line_no == 1 && f[0] == "id") continue;
        auto bad = [&](const char* why) {
            fail(ErrorKind::DataContract, path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        if (f.size() != 6) bad("expected 6 fields");
        Poi p;
        p.id = std::string(f[0]);
        if (!detail::to_int(f[1], p.class_id) || p.class_id < 0 || p.class_id >= kPoiClasses) bad("bad class_id");
        if (!detail::to_double(f[2], p.center.lon) || !detail::to_double(f[3], p.center.lat)) bad("bad coordinate");
        if (f[4] == "point")
            p.kind = PoiKind::Point;
        else if (f[4] == "area")
            p.kind = PoiKind::Area;
        else
            bad("kind must be point or area");
        if (f[5].empty()) {
            p.radius_m = 0.0;
        } else if (!detail::to_double(f[5], p.radius_m) || p.radius_m < 0.0) {
            bad("bad radius_m");
        }
        if (p.kind == PoiKind::Area && !(p.radius_m > 0.0)) bad("area POI needs radius_m > 0");
        pois.push_back(std::move(p));
    }
    return pois;
}

void write_pois(const fs::path& path, std::span<const Poi> pois) {
    std::string out = "id,class_id,lon,lat,kind,radius_m\n";
    char buf[160];
    for (const auto& p : pois) {
        std::snprintf(buf, sizeof buf, ",%d,%.7f,%.7f,%s,%.1f\n", p.class_id, p.center.lon, p.center.lat,
                      p.kind == PoiKind::Area ? "area" : "point", p.radius_m);
        out += p.id;
        out += buf;
    }
    write_file(path, out);
}

bool PoiProfiles::empty_at(std::size_t cell) const noexcept {
    for (double v : row(cell))
        if (v != 0.0) return false;
    return true;
}

std::array<double, kPoiClasses> poi_influence(LonLat at, std::span<const Poi> pois, double valid_range_m,
                                              double ref_lat) {
    std::array<double, kPoiClasses> acc{};
    for (const auto& p : pois) {
        const double d = distance_m(at, p.center, ref_lat);
        if (d <= valid_range_m) acc[static_cast<std::size_t>(p.class_id)] += normal_pdf(d, p.sigma_m());
    }
    return acc;
}

namespace {

void normalize_row(std::span<double> row) {
    double total = 0.0;
    for (double v : row) total += v;
    if (total > 0.0) {
        for (double& v : row) v /= total;
    } else {
        std::fill(row.begin(), row.end(), 0.0);
    }
}

// Uniform bucket grid over POIs with bucket edge = query radius, so a radius
// query touches at most the 3x3 neighbourhood.
class PoiBuckets {
public:
    PoiBuckets(std::span<const Poi> pois, const Lattice& lattice, double range_m)
        : pois_(pois), range_m_(range_m) {
        size_lon_ = range_m / lattice.meters_per_deg_lon();
        size_lat_ = range_m / lattice.meters_per_deg_lat();
        lon0_ = lattice.bbox.lon_min - size_lon_;
        lat0_ = lattice.bbox.lat_min - size_lat_;
        nx_ = static_cast<int>(std::ceil(lattice.bbox.width() / size_lon_)) + 3;
        ny_ = static_cast<int>(std::ceil(lattice.bbox.height() / size_lat_)) + 3;
        buckets_.resize(static_cast<std::size_t>(nx_) * static_cast<std::size_t>(ny_));
        for (std::size_t i = 0; i < pois.size(); ++i) {
            const int bx = bucket_x(pois[i].center.lon);
            const int by = bucket_y(pois[i].center.lat);
            // POIs beyond one bucket outside the bbox cannot reach a lattice point
            if (bx < 0 || by < 0 || bx >= nx_ || by >= ny_) continue;
            buckets_[static_cast<std::size_t>(by) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(bx)]
                .push_back(static_cast<std::uint32_t>(i));
        }
    }

    template <typename Fn>
    void for_each_near(LonLat at, Fn&& fn) const {
        const int bx = bucket_x(at.lon);
        const int by = bucket_y(at.lat);
        for (int y = std::max(0, by - 1); y <= std::min(ny_ - 1, by + 1); ++y)
            for (int x = std::max(0, bx - 1); x <= std::min(nx_ - 1, bx + 1); ++x)
                for (std::uint32_t i :
                     buckets_[static_cast<std::size_t>(y) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(x)])
                    fn(pois_[i]);
    }

private:
    int bucket_x(double lon) const { return static_cast<int>(std::floor((lon - lon0_) / size_lon_)); }
    int bucket_y(double lat) const { return static_cast<int>(std::floor((lat - lat0_) / size_lat_)); }

    std::span<const Poi> pois_;
    double range_m_;
    double size_lon_ = 0.0;
    double size_lat_ = 0.0;
    double lon0_ = 0.0;
    double lat0_ = 0.0;
    int nx_ = 0;
    int ny_ = 0;
    std::vector<std::vector<std::uint32_t>> buckets_;
};

}  // namespace

PoiProfiles grid_poi_profiles(const Lattice& lattice, std::span<const Poi> pois, const CityConfig& cfg) {
    PoiProfiles out{lattice.cols, lattice.rows, std::vector<double>(lattice.size() * kPoiClasses, 0.0)};
    if (pois.empty()) return out;
    const PoiBuckets buckets(pois, lattice, cfg.poi_valid_range_m);
    const double range = cfg.poi_valid_range_m;

#pragma omp parallel for schedule(dynamic, 4)
    for (int r = 0; r < lattice.rows; ++r) {
        for (int c = 0; c < lattice.cols; ++c) {
            const Cell cell{c, r};
            const LonLat at = lattice.center(cell);
            std::span<double> row(out.q.data() + lattice.index(cell) * kPoiClasses, kPoiClasses);
            buckets.for_each_near(at, [&](const Poi& p) {
                const double d = distance_m(at, p.center, lattice.ref_lat);
                if (d <= range) row[static_cast<std::size_t>(p.class_id)] += normal_pdf(d, p.sigma_m());
            });
            normalize_row(row);
        }
    }
    return out;
}

namespace {
constexpr char kProfileMagic[4] = {'U', 'F', 'G', 'P'};
}

void write_profile_cache(const fs::path& path, const PoiProfiles& profiles) {
    std::string out(kProfileMagic, 4);
    detail::put_u32(out, static_cast<std::uint32_t>(profiles.cols));
    detail::put_u32(out, static_cast<std::uint32_t>(profiles.rows));
    detail::put_u32(out, kPoiClasses);
    out.reserve(out.size() + profiles.q.size() * 4);
    for (double v : profiles.q) detail::put_f32(out, static_cast<float>(v));
    write_file(path, out);
}

PoiProfiles read_profile_cache(const fs::path& path) {
    const std::string bytes = read_file(path);
    detail::ByteReader in(bytes);
    if (in.take(4) != std::string_view(kProfileMagic, 4)) fail(ErrorKind::DataContract, "not a UFGP profile cache");
    PoiProfiles p;
    p.cols = static_cast<int>(in.u32());
    p.rows = static_cast<int>(in.u32());
    if (in.u32() != kPoiClasses) fail(ErrorKind::DataContract, "profile cache class count must be 10");
    const std::size_t n = p.cells() * kPoiClasses;
    if (in.remaining() != n * 4) fail(ErrorKind::DataContract, "profile cache size mismatch");
    p.q.resize(n);
    for (auto& v : p.q) v = in.f32();
    return p;
}

// ---------------------------------------------------------------------------
// Divisions

std::string_view level_name(DivisionLevel level) noexcept {
    return level == DivisionLevel::Div ? "DIV" : "SUBDISTRICT";
}

std::optional<DivisionLevel> parse_level(std::string_view s) noexcept {
    if (s == "DIV" || s == "div") return DivisionLevel::Div;
    if (s == "SUBDISTRICT" || s == "subdistrict") return DivisionLevel::Subdistrict;
    return std::nullopt;
}

namespace {

bool ring_crossings(const Ring& ring, LonLat p) noexcept {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const LonLat& a = ring[i];
        const LonLat& b = ring[j];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
            if (p.lon < x) inside = !inside;
        }
    }
    return inside;
}

double segment_distance(LonLat p, LonLat a, LonLat b) noexcept {
    const double dx = b.lon - a.lon;
    const double dy = b.lat - a.lat;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.lon - a.lon) * dx + (p.lat - a.lat) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.lon + t * dx - p.lon;
    const double ey = a.lat + t * dy - p.lat;
    return std::sqrt(ex * ex + ey * ey);
}

double boundary_distance(const Division& d, LonLat p) noexcept {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& part : d.parts)
        for (const auto& ring : part.rings)
            for (std::size_t i = 0; i + 1 < ring.size(); ++i) best = std::min(best, segment_distance(p, ring[i], ring[i + 1]));
    return best;
}

bool bbox_overlap(const BBox& a, const BBox& b) noexcept {
    return a.lon_min < b.lon_max && b.lon_min < a.lon_max && a.lat_min < b.lat_max && b.lat_min < a.lat_max;
}

Ring parse_ring(const json& j) {
    Ring ring;
    for (const auto& pt : j) {
        if (!pt.is_array() || pt.size() < 2) fail(ErrorKind::DataContract, "GeoJSON position must be [lon, lat]");
        ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
    }
    if (ring.size() < 3) fail(ErrorKind::DataContract, "GeoJSON ring needs at least 3 positions");
    if (ring.front().lon != ring.back().lon || ring.front().lat != ring.back().lat) ring.push_back(ring.front());
    return ring;
}

Polygon parse_polygon(const json& j) {
    Polygon p;
    for (const auto& r : j) p.rings.push_back(parse_ring(r));
    if (p.rings.empty()) fail(ErrorKind::DataContract, "empty GeoJSON polygon");
    return p;
}

std::string id_string(const json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<long long>());
    fail(ErrorKind::DataContract, "division id must be a string or integer");
}

}  // namespace

bool polygon_contains(const Polygon& polygon, LonLat p) noexcept {
    bool inside = false;
    for (const auto& ring : polygon.rings)
        if (ring_crossings(ring, p)) inside = !inside;
    return inside;
}

BBox polygon_bounds(const Polygon& polygon) noexcept {
    BBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& ring : polygon.rings)
        for (const auto& p : ring) {
            b.lon_min = std::min(b.lon_min, p.lon);
            b.lat_min = std::min(b.lat_min, p.lat);
            b.lon_max = std::max(b.lon_max, p.lon);
            b.lat_max = std::max(b.lat_max, p.lat);
        }
    return b;
}

void Division::update_bounds() {
    bounds = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
              -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& part : parts)
        for (const auto& ring : part.rings)
            for (const auto& p : ring) {
                bounds.lon_min = std::min(bounds.lon_min, p.lon);
                bounds.lat_min = std::min(bounds.lat_min, p.lat);
                bounds.lon_max = std::max(bounds.lon_max, p.lon);
                bounds.lat_max = std::max(bounds.lat_max, p.lat);
            }
}

bool Division::contains(LonLat p) const noexcept {
    if (!bounds.contains(p.lon, p.lat)) return false;
    bool inside = false;
    for (const auto& part : parts)
        for (const auto& ring : part.rings)
            if (ring_crossings(ring, p)) inside = !inside;
    return inside;
}

LonLat Division::centroid() const noexcept {
    double a = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    for (const auto& part : parts) {
        if (part.rings.empty()) continue;
        const Ring& r = part.rings.front();
        for (std::size_t i = 0; i + 1 < r.size(); ++i) {
            const double cross = r[i].lon * r[i + 1].lat - r[i + 1].lon * r[i].lat;
            a += cross;
            cx += (r[i].lon + r[i + 1].lon) * cross;
            cy += (r[i].lat + r[i + 1].lat) * cross;
        }
    }
    if (std::abs(a) < 1e-18) return {(bounds.lon_min + bounds.lon_max) / 2, (bounds.lat_min + bounds.lat_max) / 2};
    return {cx / (3.0 * a), cy / (3.0 * a)};
}

std::vector<Division> load_divisions(const fs::path& path) {
    std::vector<Division> out;
    try {
        const json j = json::parse(read_file(path));
        if (j.value("type", "") != "FeatureCollection") fail(ErrorKind::DataContract, "expected a FeatureCollection");
        for (const auto& f : j.at("features")) {
            const auto& props = f.at("properties");
            Division d;
            d.id = id_string(props.at("id"));
            d.name = props.value("name", d.id);
            const auto level = parse_level(props.value("level", std::string("DIV")));
            if (!level) fail(ErrorKind::DataContract, "division " + d.id + ": unknown level");
            d.level = *level;
            const auto& g = f.at("geometry");
            const std::string type = g.at("type").get<std::string>();
            if (type == "Polygon") {
                d.parts.push_back(parse_polygon(g.at("coordinates")));
            } else if (type == "MultiPolygon") {
                for (const auto& poly : g.at("coordinates")) d.parts.push_back(parse_polygon(poly));
            } else {
                fail(ErrorKind::DataContract, "division " + d.id + ": unsupported geometry " + type);
            }
            d.update_bounds();
            out.push_back(std::move(d));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::DataContract, path.string() + ": " + e.what());
    }
    return out;
}

void write_divisions(const fs::path& path, std::span<const Division> divisions) {
    json features = json::array();
    for (const auto& d : divisions) {
        json polys = json::array();
        for (const auto& part : d.parts) {
            json rings = json::array();
            for (const auto& ring : part.rings) {
                json pts = json::array();
                for (const auto& p : ring) pts.push_back({p.lon, p.lat});
                rings.push_back(pts);
            }
            polys.push_back(rings);
        }
        json geometry = d.parts.size() == 1 ? json{{"type", "Polygon"}, {"coordinates", polys[0]}}
                                            : json{{"type", "MultiPolygon"}, {"coordinates", polys}};
        features.push_back({{"type", "Feature"},
                            {"properties", {{"id", d.id}, {"name", d.name}, {"level", level_name(d.level)}}},
                            {"geometry", geometry}});
    }
    write_file(path, json{{"type", "FeatureCollection"}, {"features", features}}.dump() + "\n");
}

void validate_disjoint(std::span<const Division> divisions, double tolerance_deg) {
    auto probe_inside = [&](const Division& from, const Division& into) {
        for (const auto& part : from.parts)
            for (const auto& ring : part.rings)
                for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
                    const LonLat mid{(ring[i].lon + ring[i + 1].lon) / 2, (ring[i].lat + ring[i + 1].lat) / 2};
                    for (const LonLat& p : {ring[i], mid})
                        if (into.contains(p) && boundary_distance(into, p) > tolerance_deg) return true;
                }
        return into.contains(from.centroid()) && from.contains(from.centroid());
    };
    for (std::size_t i = 0; i < divisions.size(); ++i)
        for (std::size_t j = i + 1; j < divisions.size(); ++j) {
            const auto& a = divisions[i];
            const auto& b = divisions[j];
            if (a.level != b.level || !bbox_overlap(a.bounds, b.bounds)) continue;
            if (probe_inside(a, b) || probe_inside(b, a))
                fail(ErrorKind::DataContract, "divisions " + a.id + " and " + b.id + " overlap");
        }
}

std::optional<std::size_t> division_of(LonLat p, std::span<const Division> divisions) {
    for (std::size_t i = 0; i < divisions.size(); ++i)
        if (divisions[i].contains(p)) return i;
    return std::nullopt;
}

std::vector<Division> divisions_at(std::span<const Division> all, DivisionLevel level) {
    std::vector<Division> out;
    for (const auto& d : all)
        if (d.level == level) out.push_back(d);
    return out;
}

std::vector<std::int32_t> cell_divisions(const Lattice& lattice, std::span<const Division> level_divisions) {
    std::vector<std::int32_t> out(lattice.size(), -1);
#pragma omp parallel for schedule(dynamic, 4)
    for (int r = 0; r < lattice.rows; ++r)
        for (int c = 0; c < lattice.cols; ++c) {
            const Cell cell{c, r};
            if (auto d = division_of(lattice.center(cell), level_divisions))
                out[lattice.index(cell)] = static_cast<std::int32_t>(*d);
        }
    return out;
}

DemographicsReport load_demographics(const fs::path& path, std::vector<Division>& divisions) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open demographics file " + path.string());
    DemographicsReport report;
    std::vector<bool> seen(divisions.size(), false);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto f = detail::split_csv(line);
        if (f.size() == 1 && f[0].empty()) continue;
        if (line_no == 1 && f[0] == "division_id") continue;
        if (f.size() != 4)
            fail(ErrorKind::DataContract, path.string() + ":" + std::to_string(line_no) + ": expected 4 fields");
        Demographics d;
        if (!detail::to_double(f[1], d.gdp) || !detail::to_double(f[2], d.population) ||
            !detail::to_double(f[3], d.house_price) || d.gdp < 0 || d.population < 0 || d.house_price < 0)
            fail(ErrorKind::DataContract, path.string() + ":" + std::to_string(line_no) + ": bad value");
        const auto it = std::find_if(divisions.begin(), divisions.end(), [&](const Division& div) { return div.id == f[0]; });
        if (it == divisions.end()) {
            report.unknown_ids.emplace_back(f[0]);
            continue;
        }
        it->demographics = d;
        seen[static_cast<std::size_t>(it - divisions.begin())] = true;
        ++report.applied;
    }
    if (report.applied > 0)
        for (std::size_t i = 0; i < divisions.size(); ++i)
            if (!seen[i]) report.missing_ids.push_back(divisions[i].id);
    return report;
}

}  // namespace uf
