#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "uf/entropy.hpp"
#include "uf/geo_grid.hpp"

namespace uf {

/// SplitMix64 (Steele, Lea & Flood). Portable and seedable; all synthetic
/// output is a pure function of the seed.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) noexcept {
        return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
    }
    /// Standard normal via Box-Muller (one draw per call, two uniforms).
    double normal() noexcept;
    /// Index drawn proportionally to non-negative weights.
    std::size_t weighted(std::span<const double> weights) noexcept;

private:
    std::uint64_t state_;
};

enum class Archetype : std::uint8_t { Homebody, Commuter, Wanderer, Tourist };

std::string_view archetype_name(Archetype a) noexcept;
std::optional<Archetype> parse_archetype(std::string_view s) noexcept;

struct ArchetypeSpec {
    Archetype kind = Archetype::Wanderer;
    int users = 0;
    std::array<double, kPoiClasses> poi_class_weights{};
    // Optional explicit weights over DIV-level divisions; overrides the
    // archetype's own division choice.
    std::vector<double> division_weights;
    int records_min = 100;
    int records_max = 100;
    std::array<double, kDayBands> time_profile{};

    void validate() const;
};

ArchetypeSpec default_archetype(Archetype kind);

struct SyntheticCitySpec {
    std::uint64_t seed = 42;
    std::string name = "synthville";
    BBox bbox{116.30, 39.85, 116.50, 40.00};
    std::string epoch = "2015-07-01";
    int days = 90;
    int divisions_k = 3;  // k x k DIV tiling
    bool subdistricts = true;  // each DIV also split 2 x 2 at SUBDISTRICT level
    int pois_per_class = 60;
    double area_poi_fraction = 0.2;
    int tourist_division = -1;  // -1: the central DIV
    double tourist_visit_share = 0.2;
    double noise_fraction = 0.02;  // extra BASE_STATION / IP rows, dropped at ingest
    double jitter_m = 50.0;
    std::vector<ArchetypeSpec> archetypes;

    void validate() const;
    int tourist_index() const noexcept;
};

/// Built-in spec: 3x3 divisions, 60 POIs per class and roughly 10^5 records
/// over HOMEBODY / COMMUTER / WANDERER / TOURIST users.
SyntheticCitySpec default_synth_spec();
SyntheticCitySpec parse_synth_spec(const std::string& json_text);
SyntheticCitySpec load_synth_spec(const std::filesystem::path& path);

struct SyntheticCity {
    CityConfig config;
    std::vector<Poi> pois;
    std::vector<Division> divisions;  // DIV level first, then SUBDISTRICT
};

SyntheticCity generate_city(const SyntheticCitySpec& spec);

/// Writes city.json, pois.csv, divisions.geojson and demographics.csv.
void write_city(const SyntheticCity& city, const std::filesystem::path& dir);

struct UserLabel {
    std::string mid;
    Archetype archetype = Archetype::Wanderer;
    int home_division = -1;
    std::size_t records = 0;
};

/// Emits ingest-format rows for every synthetic user.
std::vector<UserLabel> generate_records(const SyntheticCitySpec& spec, const SyntheticCity& city, std::ostream& out);

struct SynthOutput {
    SyntheticCity city;
    std::vector<UserLabel> users;
    std::filesystem::path records;
};

/// generate_city + write_city + generate_records into dir/records.csv, with
/// ground-truth labels in dir/users.csv.
SynthOutput synthesize(const SyntheticCitySpec& spec, const std::filesystem::path& dir);

}  // namespace uf
