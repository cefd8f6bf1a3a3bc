#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "uf/entropy.hpp"
#include "uf/geo_grid.hpp"
#include "uf/ingest.hpp"
#include "uf/raster.hpp"
#include "uf/synth.hpp"

namespace uf {

/// File layout of one city directory. Stages talk only through these files.
struct CityPaths {
    std::filesystem::path dir;

    std::filesystem::path config() const { return dir / "city.json"; }
    std::filesystem::path pois() const { return dir / "pois.csv"; }
    std::filesystem::path divisions() const { return dir / "divisions.geojson"; }
    std::filesystem::path demographics() const { return dir / "demographics.csv"; }
    std::filesystem::path records() const { return dir / "records.csv"; }
    std::filesystem::path shards() const { return dir / "shards"; }
    std::filesystem::path profiles() const { return dir / "profiles.ufgp"; }
    std::filesystem::path fields() const { return dir / "fields"; }
    std::filesystem::path field(MetricKind m, const TimeFilter& f) const {
        return fields() / (field_file_stem(m, f) + ".ufmf");
    }
    std::filesystem::path breakdown(MetricKind m, const TimeFilter& f) const {
        return fields() / (field_file_stem(m, f) + ".ufmb");
    }
    std::filesystem::path manifest(const std::string& stage) const { return dir / "manifests" / (stage + ".json"); }
};

/// Static inputs of a city: config, lattice, POIs (optional file), divisions
/// (optional file) with demographics applied when present.
struct CityInputs {
    CityConfig config;
    Lattice lattice;
    std::vector<Poi> pois;
    std::vector<Division> divisions;
    DemographicsReport demographics;
};

CityInputs load_city_inputs(const std::filesystem::path& city_dir);

/// The ten time filters: all, the seven bands, weekday, weekend.
std::vector<TimeFilter> all_time_filters();

struct IngestStage {
    std::filesystem::path input;
    std::filesystem::path city_dir;
    std::filesystem::path out;  // empty: <city>/shards
    std::size_t shard_count = 10000;
    int writers = 1;
};

IngestReport run_ingest(const IngestStage& stage);

PoiProfiles run_grid_profiles(const std::filesystem::path& city_dir);

struct MetricsStage {
    std::filesystem::path city_dir;
    std::filesystem::path shards;  // empty: <city>/shards
    std::vector<MetricKind> metrics;
    std::vector<TimeFilter> filters;
    int workers = 1;
    bool filtered_p = true;
};

/// Computes and caches one field per (metric, filter). Returns the written
/// field cache paths.
std::vector<std::filesystem::path> run_metrics(const MetricsStage& stage);

struct RenderStage {
    std::filesystem::path city_dir;
    MetricKind metric = MetricKind::Density;
    TimeFilter filter;
    std::optional<BBox> bbox;  // default: city bbox
    int width = 800;
    int height = 600;
    double zoom = 1.0;
    std::optional<double> radius_px;  // default: three grid radii
    bool adaptive = false;
    std::optional<double> t_min;  // default: raster min
    std::optional<double> t_max;  // default: raster max
    bool reversed = false;
    double opacity = 1.0;
    std::filesystem::path png;
};

ScalarRaster run_render(const RenderStage& stage);

SynthOutput run_synth(const SyntheticCitySpec& spec, const std::filesystem::path& out_dir);

}  // namespace uf
