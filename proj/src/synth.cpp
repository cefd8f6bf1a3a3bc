#include "uf/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

namespace uf {

namespace fs = std::filesystem;
using nlohmann::json;

double SplitMix64::normal() noexcept {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t SplitMix64::weighted(std::span<const double> weights) noexcept {
    double total = 0.0;
    for (double w : weights) total += w;
    double x = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (x < weights[i]) return i;
        x -= weights[i];
    }
    // rounding fell off the end: last positive weight
    for (std::size_t i = weights.size(); i-- > 0;)
        if (weights[i] > 0.0) return i;
    return 0;
}

std::string_view archetype_name(Archetype a) noexcept {
    switch (a) {
        case Archetype::Homebody: return "HOMEBODY";
        case Archetype::Commuter: return "COMMUTER";
        case Archetype::Wanderer: return "WANDERER";
        case Archetype::Tourist: return "TOURIST";
    }
    return "?";
}

std::optional<Archetype> parse_archetype(std::string_view s) noexcept {
    for (auto a : {Archetype::Homebody, Archetype::Commuter, Archetype::Wanderer, Archetype::Tourist})
        if (archetype_name(a) == s) return a;
    return std::nullopt;
}

namespace {

constexpr int kAccommodation = 6;
constexpr int kOffice = 7;

// Band [start, end) in minutes of the day, indexed like DayBand.
constexpr std::array<std::pair<int, int>, kDayBands> kBandMinutes = {
    {{360, 540}, {540, 720}, {720, 840}, {840, 1020}, {1020, 1260}, {1260, 1440}, {0, 360}}};

template <std::size_t N>
void check_weights(const std::array<double, N>& w, const char* what) {
    double total = 0.0;
    for (double x : w) {
        if (x < 0.0 || !std::isfinite(x)) fail(ErrorKind::Invalid, std::string(what) + " must be non-negative");
        total += x;
    }
    if (!(total > 0.0)) fail(ErrorKind::Invalid, std::string(what) + " must not be all zero");
}

}  // namespace

void ArchetypeSpec::validate() const {
    check_weights(poi_class_weights, "poi_class_weights");
    check_weights(time_profile, "time_profile");
    if (!division_weights.empty()) {
        double total = 0.0;
        for (double x : division_weights) {
            if (x < 0.0) fail(ErrorKind::Invalid, "division_weights must be non-negative");
            total += x;
        }
        if (!(total > 0.0)) fail(ErrorKind::Invalid, "division_weights must not be all zero");
    }
    if (users < 0) fail(ErrorKind::Invalid, "users must be >= 0");
    if (records_min < 1 || records_max < records_min) fail(ErrorKind::Invalid, "records_per_user must be [lo, hi], lo >= 1");
}

ArchetypeSpec default_archetype(Archetype kind) {
    ArchetypeSpec a;
    a.kind = kind;
    switch (kind) {
        case Archetype::Homebody:
            a.users = 50;
            a.poi_class_weights[kAccommodation] = 1.0;
            a.records_min = 400;
            a.records_max = 700;
            a.time_profile = {2, 2, 1, 2, 3, 3, 2};
            break;
        case Archetype::Commuter:
            a.users = 50;
            a.poi_class_weights[kAccommodation] = 0.5;
            a.poi_class_weights[kOffice] = 0.5;
            a.records_min = 400;
            a.records_max = 700;
            a.time_profile = {2, 3, 1, 3, 2, 2, 1};
            break;
        case Archetype::Wanderer:
            a.users = 25;
            a.poi_class_weights.fill(1.0);
            a.records_min = 1000;
            a.records_max = 1000;
            a.time_profile = {1, 1, 1, 1, 1, 1, 1};
            break;
        case Archetype::Tourist:
            a.users = 50;
            a.poi_class_weights[0] = 0.3;
            a.poi_class_weights[1] = 0.3;
            a.poi_class_weights[8] = 0.4;
            a.records_min = 300;
            a.records_max = 600;
            a.time_profile = {1, 3, 2, 3, 2, 1, 0.5};
            break;
    }
    return a;
}

void SyntheticCitySpec::validate() const {
    CityConfig probe;
    probe.bbox = bbox;
    probe.ref_lat = (bbox.lat_min + bbox.lat_max) / 2;
    probe.days = days;
    probe.validate();
    parse_date(epoch);
    if (divisions_k < 1) fail(ErrorKind::Invalid, "divisions must be >= 1");
    if (pois_per_class < 0) fail(ErrorKind::Invalid, "pois_per_class must be >= 0");
    if (area_poi_fraction < 0 || area_poi_fraction > 1) fail(ErrorKind::Invalid, "area_poi_fraction must be in [0,1]");
    if (tourist_division >= divisions_k * divisions_k) fail(ErrorKind::Invalid, "tourist_division out of range");
    if (tourist_visit_share < 0 || tourist_visit_share > 1) fail(ErrorKind::Invalid, "tourist_visit_share must be in [0,1]");
    if (noise_fraction < 0 || noise_fraction > 1) fail(ErrorKind::Invalid, "noise_fraction must be in [0,1]");
    if (!(jitter_m >= 0)) fail(ErrorKind::Invalid, "jitter_m must be >= 0");
    for (const auto& a : archetypes) {
        a.validate();
        if (!a.division_weights.empty() && a.division_weights.size() != static_cast<std::size_t>(divisions_k * divisions_k))
            fail(ErrorKind::Invalid, "division_weights needs one weight per DIV");
    }
}

int SyntheticCitySpec::tourist_index() const noexcept {
    if (tourist_division >= 0) return tourist_division;
    return (divisions_k / 2) * divisions_k + divisions_k / 2;
}

SyntheticCitySpec default_synth_spec() {
    SyntheticCitySpec s;
    for (auto a : {Archetype::Homebody, Archetype::Commuter, Archetype::Wanderer, Archetype::Tourist})
        s.archetypes.push_back(default_archetype(a));
    return s;
}

SyntheticCitySpec parse_synth_spec(const std::string& json_text) {
    SyntheticCitySpec s;
    try {
        const json j = json::parse(json_text);
        s.seed = j.value("seed", s.seed);
        s.name = j.value("name", s.name);
        if (j.contains("bbox")) {
            const auto bb = j.at("bbox").get<std::vector<double>>();
            if (bb.size() != 4) fail(ErrorKind::DataContract, "bbox needs 4 numbers");
            s.bbox = {bb[0], bb[1], bb[2], bb[3]};
        }
        s.epoch = j.value("epoch", s.epoch);
        s.days = j.value("days", s.days);
        s.divisions_k = j.value("divisions", s.divisions_k);
        s.subdistricts = j.value("subdistricts", s.subdistricts);
        s.pois_per_class = j.value("pois_per_class", s.pois_per_class);
        s.area_poi_fraction = j.value("area_poi_fraction", s.area_poi_fraction);
        s.tourist_division = j.value("tourist_division", s.tourist_division);
        s.tourist_visit_share = j.value("tourist_visit_share", s.tourist_visit_share);
        s.noise_fraction = j.value("noise_fraction", s.noise_fraction);
        s.jitter_m = j.value("jitter_m", s.jitter_m);
        if (j.contains("archetypes")) {
            for (const auto& aj : j.at("archetypes")) {
                const auto kind = parse_archetype(aj.at("name").get<std::string>());
                if (!kind) fail(ErrorKind::DataContract, "unknown archetype " + aj.at("name").get<std::string>());
                ArchetypeSpec a = default_archetype(*kind);
                a.users = aj.value("users", a.users);
                if (aj.contains("records_per_user")) {
                    const auto r = aj.at("records_per_user").get<std::vector<int>>();
                    if (r.size() != 2) fail(ErrorKind::DataContract, "records_per_user needs [lo, hi]");
                    a.records_min = r[0];
                    a.records_max = r[1];
                }
                if (aj.contains("poi_class_weights")) {
                    const auto w = aj.at("poi_class_weights").get<std::vector<double>>();
                    if (w.size() != kPoiClasses) fail(ErrorKind::DataContract, "poi_class_weights needs 10 entries");
                    std::copy(w.begin(), w.end(), a.poi_class_weights.begin());
                }
                if (aj.contains("time_profile")) {
                    const auto w = aj.at("time_profile").get<std::vector<double>>();
                    if (w.size() != kDayBands) fail(ErrorKind::DataContract, "time_profile needs 7 entries");
                    std::copy(w.begin(), w.end(), a.time_profile.begin());
                }
                if (aj.contains("division_weights")) a.division_weights = aj.at("division_weights").get<std::vector<double>>();
                s.archetypes.push_back(a);
            }
        } else {
            s.archetypes = default_synth_spec().archetypes;
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::DataContract, std::string("synth spec: ") + e.what());
    }
    s.validate();
    return s;
}

SyntheticCitySpec load_synth_spec(const fs::path& path) { return parse_synth_spec(read_file(path)); }

namespace {

Division rect_division(std::string id, std::string name, DivisionLevel level, double x0, double y0, double x1,
                       double y1) {
    Division d;
    d.id = std::move(id);
    d.name = std::move(name);
    d.level = level;
    d.parts.push_back(Polygon{{Ring{{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}, {x0, y0}}}});
    d.update_bounds();
    return d;
}

}  // namespace

SyntheticCity generate_city(const SyntheticCitySpec& spec) {
    spec.validate();
    SplitMix64 rng(spec.seed);
    SyntheticCity city;
    auto& cfg = city.config;
    cfg.name = spec.name;
    cfg.bbox = spec.bbox;
    cfg.ref_lat = (spec.bbox.lat_min + spec.bbox.lat_max) / 2.0;
    cfg.epoch = parse_date(spec.epoch);
    cfg.days = spec.days;

    const int k = spec.divisions_k;
    const double dx = spec.bbox.width() / k;
    const double dy = spec.bbox.height() / k;
    // Edges are shared exactly: the last column/row ends on the bbox edge.
    auto xe = [&](int i) { return i == k ? spec.bbox.lon_max : spec.bbox.lon_min + i * dx; };
    auto ye = [&](int i) { return i == k ? spec.bbox.lat_max : spec.bbox.lat_min + i * dy; };
    for (int r = 0; r < k; ++r)
        for (int c = 0; c < k; ++c) {
            char id[32];
            std::snprintf(id, sizeof id, "D%d_%d", r, c);
            auto d = rect_division(id, std::string("Division ") + id, DivisionLevel::Div, xe(c), ye(r), xe(c + 1), ye(r + 1));
            d.demographics = Demographics{rng.uniform(0.5e9, 5e9), std::round(rng.uniform(1e5, 1e6)),
                                          std::round(rng.uniform(2e4, 1e5))};
            city.divisions.push_back(std::move(d));
        }
    if (spec.subdistricts) {
        for (int r = 0; r < k; ++r)
            for (int c = 0; c < k; ++c) {
                const double x0 = xe(c), x1 = xe(c + 1), y0 = ye(r), y1 = ye(r + 1);
                const double xm = (x0 + x1) / 2, ym = (y0 + y1) / 2;
                const double xs[3] = {x0, xm, x1};
                const double ys[3] = {y0, ym, y1};
                for (int sr = 0; sr < 2; ++sr)
                    for (int sc = 0; sc < 2; ++sc) {
                        char id[32];
                        std::snprintf(id, sizeof id, "S%d_%d_%d", r, c, sr * 2 + sc);
                        city.divisions.push_back(rect_division(id, std::string("Subdistrict ") + id,
                                                               DivisionLevel::Subdistrict, xs[sc], ys[sr], xs[sc + 1],
                                                               ys[sr + 1]));
                    }
            }
    }

    for (int cls = 0; cls < kPoiClasses; ++cls)
        for (int i = 0; i < spec.pois_per_class; ++i) {
            Poi p;
            char id[32];
            std::snprintf(id, sizeof id, "P%d_%d", cls, i);
            p.id = id;
            p.class_id = cls;
            p.center = {rng.uniform(spec.bbox.lon_min, spec.bbox.lon_max), rng.uniform(spec.bbox.lat_min, spec.bbox.lat_max)};
            if (rng.uniform() < spec.area_poi_fraction) {
                p.kind = PoiKind::Area;
                p.radius_m = std::round(rng.uniform(50.0, 300.0));
            }
            city.pois.push_back(std::move(p));
        }
    return city;
}

void write_city(const SyntheticCity& city, const fs::path& dir) {
    fs::create_directories(dir);
    write_city_config(dir / "city.json", city.config);
    write_pois(dir / "pois.csv", city.pois);
    write_divisions(dir / "divisions.geojson", city.divisions);
    std::string demo = "division_id,gdp,population,house_price\n";
    char buf[128];
    for (const auto& d : city.divisions) {
        if (!d.demographics) continue;
        std::snprintf(buf, sizeof buf, ",%.2f,%.0f,%.0f\n", d.demographics->gdp, d.demographics->population,
                      d.demographics->house_price);
        demo += d.id;
        demo += buf;
    }
    write_file(dir / "demographics.csv", demo);
}

namespace {

class RecordWriter {
public:
    RecordWriter(const SyntheticCitySpec& spec, const SyntheticCity& city)
        : spec_(spec),
          city_(city),
          lattice_(build_lattice(city.config)),
          profiles_(grid_poi_profiles(lattice_, city.pois, city.config)),
          divs_(divisions_at(city.divisions, DivisionLevel::Div)),
          cell_div_(cell_divisions(lattice_, divs_)),
          epoch_(city.config.epoch) {
        by_class_div_.resize(kPoiClasses * divs_.size());
        for (std::size_t i = 0; i < city.pois.size(); ++i) {
            const auto& p = city.pois[i];
            if (auto d = division_of(p.center, divs_))
                by_class_div_[static_cast<std::size_t>(p.class_id) * divs_.size() + *d].push_back(i);
        }
        for (std::size_t d = 0; d < divs_.size(); ++d)
            if (static_cast<int>(d) != spec.tourist_index()) residential_.push_back(static_cast<int>(d));
        if (residential_.empty()) residential_.push_back(0);
    }

    std::size_t division_count() const noexcept { return divs_.size(); }

    UserLabel user(const ArchetypeSpec& a, std::size_t user_index, SplitMix64& rng, std::ostream& out) {
        UserLabel label;
        char mid[32];
        std::snprintf(mid, sizeof mid, "%llu",
                      static_cast<unsigned long long>(1460000000000ULL + user_index * 9973ULL + rng.below(9973)));
        label.mid = mid;
        label.archetype = a.kind;
        const auto n = static_cast<std::size_t>(a.records_min) +
                       static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(a.records_max - a.records_min + 1)));

        const int home = residential_[rng.below(residential_.size())];
        int work = home;
        if (residential_.size() > 1)
            while (work == home) work = residential_[rng.below(residential_.size())];
        label.home_division = home;

        std::optional<std::size_t> home_cell;
        int home_class = 0;
        if (a.kind == Archetype::Homebody) {
            home_class = static_cast<int>(rng.weighted(a.poi_class_weights));
            home_cell = pick_home_cell(home_class, home, rng);
            label.home_division = cell_div_[*home_cell];
        }

        for (std::size_t i = 0; i < n; ++i) {
            const auto day = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.days)));
            const auto band = rng.weighted(a.time_profile);
            const auto [b0, b1] = kBandMinutes[band];
            const int minute = b0 + static_cast<int>(rng.below(static_cast<std::uint64_t>(b1 - b0)));

            LonLat at;
            if (home_cell) {
                at = jitter_within(*home_cell, rng);
            } else {
                int cls = static_cast<int>(rng.weighted(a.poi_class_weights));
                int div = 0;
                if (!a.division_weights.empty()) {
                    div = static_cast<int>(rng.weighted(a.division_weights));
                } else if (a.kind == Archetype::Commuter) {
                    div = cls == kAccommodation ? home : work;
                } else if (a.kind == Archetype::Tourist) {
                    if (rng.uniform() < spec_.tourist_visit_share) {
                        div = spec_.tourist_index();
                    } else {
                        div = home;
                        cls = kAccommodation;
                    }
                } else {
                    div = static_cast<int>(rng.below(divs_.size()));
                }
                at = jitter(anchor(cls, div, rng), rng);
            }
            emit(out, day, minute, at, label.mid, rng.uniform() < 0.5 ? "GPS" : "WIFI");
            ++label.records;
        }
        const auto noise = static_cast<std::size_t>(std::lround(static_cast<double>(n) * spec_.noise_fraction));
        for (std::size_t i = 0; i < noise; ++i) {
            const auto day = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec_.days)));
            const int minute = static_cast<int>(rng.below(1440));
            const LonLat at{rng.uniform(spec_.bbox.lon_min, spec_.bbox.lon_max),
                            rng.uniform(spec_.bbox.lat_min, spec_.bbox.lat_max)};
            emit(out, day, minute, at, label.mid, rng.uniform() < 0.5 ? "BASE_STATION" : "IP");
        }
        return label;
    }

private:
    // A cell of the requested division whose profile is purely `cls`; falls
    // back to any pure cell, then to the cell with the largest q[cls].
    std::size_t pick_home_cell(int cls, int div, SplitMix64& rng) {
        auto key = std::make_pair(cls, div);
        auto it = pure_cells_.find(key);
        if (it == pure_cells_.end()) {
            std::vector<std::size_t> cells;
            for (std::size_t c = 0; c < lattice_.size(); ++c)
                if ((div < 0 || cell_div_[c] == div) && cell_div_[c] >= 0 && is_pure(c, cls)) cells.push_back(c);
            it = pure_cells_.emplace(key, std::move(cells)).first;
        }
        if (!it->second.empty()) return it->second[rng.below(it->second.size())];
        if (div >= 0) return pick_home_cell(cls, -1, rng);
        std::size_t best = 0;
        for (std::size_t c = 0; c < lattice_.size(); ++c)
            if (profiles_.row(c)[static_cast<std::size_t>(cls)] > profiles_.row(best)[static_cast<std::size_t>(cls)])
                best = c;
        return best;
    }

    bool is_pure(std::size_t cell, int cls) const {
        const auto row = profiles_.row(cell);
        for (int j = 0; j < kPoiClasses; ++j)
            if ((j == cls) != (row[static_cast<std::size_t>(j)] > 0.0)) return false;
        return true;
    }

    LonLat anchor(int cls, int div, SplitMix64& rng) const {
        const auto& local = by_class_div_[static_cast<std::size_t>(cls) * divs_.size() + static_cast<std::size_t>(div)];
        if (!local.empty()) return city_.pois[local[rng.below(local.size())]].center;
        const BBox& b = divs_[static_cast<std::size_t>(div)].bounds;
        return {rng.uniform(b.lon_min, b.lon_max), rng.uniform(b.lat_min, b.lat_max)};
    }

    LonLat jitter(LonLat at, SplitMix64& rng) const {
        const double jx = rng.normal() * spec_.jitter_m / lattice_.meters_per_deg_lon();
        const double jy = rng.normal() * spec_.jitter_m / lattice_.meters_per_deg_lat();
        return {std::clamp(at.lon + jx, spec_.bbox.lon_min, spec_.bbox.lon_max),
                std::clamp(at.lat + jy, spec_.bbox.lat_min, spec_.bbox.lat_max)};
    }

    LonLat jitter_within(std::size_t cell, SplitMix64& rng) const {
        const LonLat center = lattice_.center(lattice_.cell_at(cell));
        for (int attempt = 0; attempt < 16; ++attempt) {
            const LonLat p = jitter(center, rng);
            auto c = lattice_.assign(p.lon, p.lat);
            if (c && lattice_.index(*c) == cell) return p;
        }
        return center;
    }

    void emit(std::ostream& out, int day, int minute, LonLat at, const std::string& mid, const char* src) const {
        const std::chrono::year_month_day ymd{epoch_ + std::chrono::days{day}};
        char buf[160];
        std::snprintf(buf, sizeof buf, "%02d:%02d/%02u/%02u/%04d,%.7f,%.7f,%s,%s\n", minute / 60, minute % 60,
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(ymd.year()),
                      at.lon, at.lat, mid.c_str(), src);
        out << buf;
    }

    const SyntheticCitySpec& spec_;
    const SyntheticCity& city_;
    Lattice lattice_;
    PoiProfiles profiles_;
    std::vector<Division> divs_;
    std::vector<std::int32_t> cell_div_;
    std::chrono::sys_days epoch_;
    std::vector<std::vector<std::size_t>> by_class_div_;
    std::vector<int> residential_;
    std::map<std::pair<int, int>, std::vector<std::size_t>> pure_cells_;
};

}  // namespace

std::vector<UserLabel> generate_records(const SyntheticCitySpec& spec, const SyntheticCity& city, std::ostream& out) {
    spec.validate();
    RecordWriter writer(spec, city);
    // records use their own stream so that city layout and users stay independent
    SplitMix64 rng(spec.seed ^ 0x5eed5eed5eed5eedULL);
    std::vector<UserLabel> labels;
    std::size_t user_index = 0;
    for (const auto& a : spec.archetypes)
        for (int u = 0; u < a.users; ++u) labels.push_back(writer.user(a, user_index++, rng, out));
    return labels;
}

SynthOutput synthesize(const SyntheticCitySpec& spec, const fs::path& dir) {
    SynthOutput result{generate_city(spec), {}, dir / "records.csv"};
    write_city(result.city, dir);
    {
        std::ofstream out(result.records, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::Io, "cannot create " + result.records.string());
        result.users = generate_records(spec, result.city, out);
        if (!out) fail(ErrorKind::Io, "write failed: " + result.records.string());
    }
    std::string users = "mid,archetype,home_division,records\n";
    for (const auto& u : result.users)
        users += u.mid + "," + std::string(archetype_name(u.archetype)) + "," + std::to_string(u.home_division) + "," +
                 std::to_string(u.records) + "\n";
    write_file(dir / "users.csv", users);
    return result;
}

}  // namespace uf
