#include "uf/pipeline.hpp"

#include <chrono>

#include <json.hpp>

namespace uf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

json digests(const std::vector<fs::path>& files) {
    json out = json::object();
    for (const auto& f : files)
        if (fs::exists(f)) out[f.filename().string()] = file_digest(f);
    return out;
}

// Every stage leaves <city>/manifests/<stage>.json naming the digests of what
// it read and wrote, so manifests chain from records to rasters.
void write_stage_manifest(const CityPaths& paths, const std::string& stage, json parameters,
                          const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs, double seconds) {
    json m;
    m["stage"] = stage;
    m["parameters"] = std::move(parameters);
    m["inputs"] = digests(inputs);
    m["outputs"] = digests(outputs);
    m["seconds"] = seconds;
    fs::create_directories(paths.manifest(stage).parent_path());
    write_file(paths.manifest(stage), m.dump(2) + "\n");
}

}  // namespace

CityInputs load_city_inputs(const fs::path& city_dir) {
    const CityPaths paths{city_dir};
    if (!fs::exists(paths.config())) fail(ErrorKind::Io, "missing city config " + paths.config().string());
    CityInputs in;
    in.config = load_city_config(paths.config());
    in.lattice = build_lattice(in.config);
    if (fs::exists(paths.pois())) in.pois = load_pois(paths.pois());
    if (fs::exists(paths.divisions())) {
        in.divisions = load_divisions(paths.divisions());
        validate_disjoint(in.divisions);
    }
    if (fs::exists(paths.demographics())) in.demographics = load_demographics(paths.demographics(), in.divisions);
    return in;
}

std::vector<TimeFilter> all_time_filters() {
    std::vector<TimeFilter> out{TimeFilter::all()};
    for (int b = 0; b < kDayBands; ++b) out.push_back(TimeFilter::time_of_day(b));
    out.push_back(TimeFilter::weekday());
    out.push_back(TimeFilter::weekend());
    return out;
}

IngestReport run_ingest(const IngestStage& stage) {
    const auto t0 = Clock::now();
    const CityPaths paths{stage.city_dir};
    if (!fs::exists(paths.config())) fail(ErrorKind::Io, "missing city config " + paths.config().string());
    const CityConfig cfg = load_city_config(paths.config());
    IngestOptions opts;
    opts.input = stage.input;
    opts.out_dir = stage.out.empty() ? paths.shards() : stage.out;
    opts.epoch = cfg.epoch;
    opts.days = cfg.days;
    opts.shard_count = stage.shard_count;
    opts.writers = stage.writers;
    IngestReport report = ingest_records(opts);
    write_stage_manifest(paths, "ingest",
                         {{"input", stage.input.string()},
                          {"out", opts.out_dir.string()},
                          {"shards", stage.shard_count},
                          {"writers", stage.writers}},
                         {stage.input, paths.config()}, {opts.out_dir / "manifest.json"}, seconds_since(t0));
    return report;
}

PoiProfiles run_grid_profiles(const fs::path& city_dir) {
    const auto t0 = Clock::now();
    const CityPaths paths{city_dir};
    if (!fs::exists(paths.pois())) fail(ErrorKind::Io, "missing POI file " + paths.pois().string());
    const CityConfig cfg = load_city_config(paths.config());
    const Lattice lattice = build_lattice(cfg);
    const auto pois = load_pois(paths.pois());
    PoiProfiles profiles = grid_poi_profiles(lattice, pois, cfg);
    write_profile_cache(paths.profiles(), profiles);
    write_stage_manifest(paths, "grid-profiles",
                         {{"cols", lattice.cols},
                          {"rows", lattice.rows},
                          {"lattice_step_m", cfg.lattice_step_m},
                          {"poi_valid_range_m", cfg.poi_valid_range_m}},
                         {paths.config(), paths.pois()}, {paths.profiles()}, seconds_since(t0));
    return profiles;
}

std::vector<fs::path> run_metrics(const MetricsStage& stage) {
    const auto t0 = Clock::now();
    const CityPaths paths{stage.city_dir};
    const CityInputs city = load_city_inputs(stage.city_dir);
    if (!fs::exists(paths.profiles()))
        fail(ErrorKind::Io, "missing profile cache " + paths.profiles().string() + " (run grid-profiles first)");
    const PoiProfiles profiles = read_profile_cache(paths.profiles());
    if (profiles.cols != city.lattice.cols || profiles.rows != city.lattice.rows)
        fail(ErrorKind::DataContract, "profile cache does not match the city lattice");
    const fs::path shard_dir = stage.shards.empty() ? paths.shards() : stage.shards;
    const ShardSet shards = load_shard_set(shard_dir);

    const auto divs = divisions_at(city.divisions, DivisionLevel::Div);
    const auto cell_div = cell_divisions(city.lattice, divs);
    MetricContext ctx;
    ctx.lattice = &city.lattice;
    ctx.profiles = &profiles;
    ctx.cell_division = &cell_div;
    ctx.division_count = divs.size();
    ctx.epoch_weekday = std::chrono::weekday{city.config.epoch};
    ctx.filtered_p = stage.filtered_p;

    fs::create_directories(paths.fields());
    std::vector<fs::path> written;
    json produced = json::array();
    for (MetricKind m : stage.metrics)
        for (const TimeFilter& f : stage.filters) {
            const GridMetricField field = compute_metric_field(shards, m, f, ctx, stage.workers);
            write_field_cache(paths.field(m, f), field);
            written.push_back(paths.field(m, f));
            if (field.classes > 0) {
                write_breakdown_cache(paths.breakdown(m, f), field);
                written.push_back(paths.breakdown(m, f));
            }
            produced.push_back(field_file_stem(m, f));
        }
    // workers do not affect outputs, so they are not part of the parameters
    write_stage_manifest(paths, "metrics", {{"fields", produced}, {"filtered_p", stage.filtered_p}},
                         {paths.profiles(), paths.divisions(), shard_dir / "manifest.json"}, written,
                         seconds_since(t0));
    return written;
}

ScalarRaster run_render(const RenderStage& stage) {
    const auto t0 = Clock::now();
    const CityPaths paths{stage.city_dir};
    const CityConfig cfg = load_city_config(paths.config());
    const Lattice lattice = build_lattice(cfg);
    const fs::path field_path = paths.field(stage.metric, stage.filter);
    if (!fs::exists(field_path))
        fail(ErrorKind::Io, "missing field cache " + field_path.string() + " (run metrics first)");
    const GridMetricField field = read_field_cache(field_path);

    DiffusionParams params;
    params.viewport = Viewport{stage.bbox.value_or(cfg.bbox), stage.width, stage.height, stage.zoom};
    params.viewport.validate();
    params.adaptive = stage.adaptive;
    // the default radius is sized on the unzoomed view; zoom then applies through adapt_radius
    Viewport base = params.viewport;
    base.zoom = 1.0;
    params.radius_px = stage.radius_px.value_or(default_radius_px(lattice, base));
    const ScalarRaster raster = rasterize_field(field, lattice, params);

    ColorFilter filter{stage.t_min.value_or(raster.min), stage.t_max.value_or(raster.max), stage.reversed};
    const auto rgba = apply_color_filter(raster, filter, stage.opacity);
    if (!stage.png.empty()) {
        if (stage.png.has_parent_path()) fs::create_directories(stage.png.parent_path());
        write_png(stage.png, raster.width, raster.height, rgba);
        write_stage_manifest(paths, "render",
                             {{"metric", metric_name(stage.metric)},
                              {"filter", stage.filter.name()},
                              {"bbox",
                               {params.viewport.bbox.lon_min, params.viewport.bbox.lat_min, params.viewport.bbox.lon_max,
                                params.viewport.bbox.lat_max}},
                              {"width", stage.width},
                              {"height", stage.height},
                              {"zoom", stage.zoom},
                              {"radius_px", params.radius_px},
                              {"adaptive", stage.adaptive},
                              {"t_min", filter.t_min},
                              {"t_max", filter.t_max},
                              {"reversed", stage.reversed},
                              {"opacity", stage.opacity}},
                             {field_path}, {stage.png}, seconds_since(t0));
    }
    return raster;
}

SynthOutput run_synth(const SyntheticCitySpec& spec, const fs::path& out_dir) {
    const auto t0 = Clock::now();
    SynthOutput out = synthesize(spec, out_dir);
    const CityPaths paths{out_dir};
    std::uint64_t records = 0;
    for (const auto& u : out.users) records += u.records;
    write_stage_manifest(paths, "synth",
                         {{"seed", spec.seed}, {"name", spec.name}, {"users", out.users.size()}, {"records", records}},
                         {},
                         {paths.config(), paths.pois(), paths.divisions(), paths.demographics(), paths.records(),
                          out_dir / "users.csv"},
                         seconds_since(t0));
    return out;
}

}  // namespace uf
