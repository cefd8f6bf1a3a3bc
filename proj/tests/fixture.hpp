#pragma once

// A small synthetic city held in memory, shared by the metric, raster and
// service tests.

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "uf/entropy.hpp"
#include "uf/geo_grid.hpp"
#include "uf/ingest.hpp"
#include "uf/synth.hpp"

namespace uf::testing {

inline SyntheticCitySpec mini_spec(std::uint64_t seed = 7, int scale = 1) {
    SyntheticCitySpec s = default_synth_spec();
    s.seed = seed;
    s.name = "mini";
    s.bbox = {116.30, 39.85, 116.36, 39.90};
    s.divisions_k = 3;
    s.pois_per_class = 12;
    for (auto& a : s.archetypes) {
        switch (a.kind) {
            case Archetype::Homebody: a.users = 6 * scale; a.records_min = 80; a.records_max = 120; break;
            case Archetype::Commuter: a.users = 6 * scale; a.records_min = 80; a.records_max = 120; break;
            case Archetype::Wanderer: a.users = 3 * scale; a.records_min = 200; a.records_max = 200; break;
            case Archetype::Tourist: a.users = 6 * scale; a.records_min = 60; a.records_max = 100; break;
        }
    }
    return s;
}

struct MiniCity {
    SyntheticCitySpec spec;
    SyntheticCity city;
    std::string feed;  // generated record lines, ingest format
    Lattice lattice;
    PoiProfiles profiles;
    std::vector<Division> divs;
    std::vector<std::int32_t> cell_div;
    std::vector<CleanRecord> records;  // GPS/WIFI only, sorted by (mid, timeslot)
    std::vector<UserLabel> users;

    MetricContext context(bool filtered_p = true) const {
        MetricContext ctx;
        ctx.lattice = &lattice;
        ctx.profiles = &profiles;
        ctx.cell_division = &cell_div;
        ctx.division_count = divs.size();
        ctx.epoch_weekday = std::chrono::weekday{city.config.epoch};
        ctx.filtered_p = filtered_p;
        return ctx;
    }
};

inline MiniCity make_mini_city(const SyntheticCitySpec& spec) {
    MiniCity m;
    m.spec = spec;
    m.city = generate_city(spec);
    std::ostringstream out;
    m.users = generate_records(spec, m.city, out);
    m.feed = out.str();
    m.lattice = build_lattice(m.city.config);
    m.profiles = grid_poi_profiles(m.lattice, m.city.pois, m.city.config);
    m.divs = divisions_at(m.city.divisions, DivisionLevel::Div);
    m.cell_div = cell_divisions(m.lattice, m.divs);
    std::istringstream in(m.feed);
    std::string line;
    while (std::getline(in, line)) {
        auto parsed = parse_record(line);
        if (!std::holds_alternative<RawRecord>(parsed)) continue;
        if (auto clean = filter_and_discretize(std::get<RawRecord>(parsed), m.city.config.epoch))
            m.records.push_back(*clean);
    }
    std::stable_sort(m.records.begin(), m.records.end(), [](const CleanRecord& a, const CleanRecord& b) {
        return a.mid != b.mid ? a.mid < b.mid : a.timeslot < b.timeslot;
    });
    return m;
}

}  // namespace uf::testing
