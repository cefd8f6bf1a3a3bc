#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "uf/pipeline.hpp"
#include "uf/service.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 2, kIo = 3, kData = 4 };

int exit_code(uf::ErrorKind kind) {
    switch (kind) {
        case uf::ErrorKind::Io: return kIo;
        case uf::ErrorKind::DataContract: return kData;
        default: return kUsage;
    }
}

std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        out.push_back(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::vector<uf::MetricKind> parse_metrics(const std::string& s) {
    if (s == "all") return {uf::kAllMetrics.begin(), uf::kAllMetrics.end()};
    std::vector<uf::MetricKind> out;
    for (const auto& name : split(s)) {
        auto m = uf::parse_metric(name);
        if (!m) uf::fail(uf::ErrorKind::Usage, "unknown metric '" + name + "'");
        out.push_back(*m);
    }
    return out;
}

std::vector<uf::TimeFilter> parse_filters(const std::string& s) {
    if (s == "every") return uf::all_time_filters();
    std::vector<uf::TimeFilter> out;
    for (const auto& name : split(s)) {
        auto f = uf::TimeFilter::parse(name);
        if (!f) uf::fail(uf::ErrorKind::Usage, "unknown time filter '" + name + "'");
        out.push_back(*f);
    }
    return out;
}

uf::BBox parse_bbox(const std::string& s) {
    const auto parts = split(s);
    if (parts.size() != 4) uf::fail(uf::ErrorKind::Usage, "viewport needs lon_min,lat_min,lon_max,lat_max");
    double v[4];
    for (int i = 0; i < 4; ++i) {
        char* end = nullptr;
        v[i] = std::strtod(parts[static_cast<std::size_t>(i)].c_str(), &end);
        if (end == parts[static_cast<std::size_t>(i)].c_str() || *end != '\0')
            uf::fail(uf::ErrorKind::Usage, "viewport value '" + parts[static_cast<std::size_t>(i)] + "' is not a number");
    }
    return {v[0], v[1], v[2], v[3]};
}

int default_workers() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"urban mobility facets: ingest, grid, metrics, render, synth, serve"};
    app.require_subcommand(1);

    uf::IngestStage ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse, cleanse and shard a record file");
    ingest_cmd->add_option("--input", ingest.input, "Record file")->required();
    ingest_cmd->add_option("--city", ingest.city_dir, "City directory (holds city.json)")->required();
    ingest_cmd->add_option("--shards", ingest.shard_count, "Shard count B")->check(CLI::PositiveNumber);
    ingest_cmd->add_option("--out", ingest.out, "Shard directory (default <city>/shards)");
    ingest_cmd->add_option("--writers", ingest.writers, "Concurrent shard writers")->check(CLI::PositiveNumber);

    std::string city_dir;
    auto* profiles_cmd = app.add_subcommand("grid-profiles", "Precompute POI-class profiles of every grid cell");
    profiles_cmd->add_option("--city", city_dir, "City directory")->required();

    uf::MetricsStage metrics;
    metrics.workers = default_workers();
    std::string metric_arg, filter_arg = "all";
    bool full_p = false;
    auto* metrics_cmd = app.add_subcommand("metrics", "Aggregate metric fields from shards");
    metrics_cmd->add_option("--city", metrics.city_dir, "City directory")->required();
    metrics_cmd->add_option("--metric", metric_arg, "vibrancy|commutation|diversity|fluidity|density, a list, or all")
        ->required();
    metrics_cmd->add_option("--filter", filter_arg, "Time filter name, a list, or every");
    metrics_cmd->add_option("--workers", metrics.workers, "Shard-parallel width")->check(CLI::PositiveNumber);
    metrics_cmd->add_option("--shards", metrics.shards, "Shard directory (default <city>/shards)");
    metrics_cmd->add_flag("--unfiltered-p", full_p, "Build user vectors from all records, not the filtered subset");

    uf::RenderStage render;
    std::string render_metric, render_filter = "all", viewport;
    std::optional<double> radius, t_min, t_max;
    auto* render_cmd = app.add_subcommand("render", "Render a metric field to PNG");
    render_cmd->add_option("--city", render.city_dir, "City directory")->required();
    render_cmd->add_option("--metric", render_metric, "Metric name")->required();
    render_cmd->add_option("--filter", render_filter, "Time filter name");
    render_cmd->add_option("--viewport", viewport, "lon_min,lat_min,lon_max,lat_max (default city bbox)");
    render_cmd->add_option("--width", render.width, "Pixels")->check(CLI::Range(1, 16384));
    render_cmd->add_option("--height", render.height, "Pixels")->check(CLI::Range(1, 16384));
    render_cmd->add_option("--zoom", render.zoom, "Resolution relative to the base view");
    render_cmd->add_option("--radius", radius, "Diffusion radius in pixels at zoom 1");
    render_cmd->add_flag("--adaptive", render.adaptive, "Scale the radius with zoom");
    render_cmd->add_option("--t-min", t_min, "Lower color threshold (default raster min)");
    render_cmd->add_option("--t-max", t_max, "Upper color threshold (default raster max)");
    render_cmd->add_flag("--reversed", render.reversed, "Reverse the color ramp");
    render_cmd->add_option("--opacity", render.opacity, "Layer opacity")->check(CLI::Range(0.0, 1.0));
    render_cmd->add_option("--png", render.png, "Output PNG")->required();

    std::string spec_path, synth_out;
    std::optional<std::uint64_t> seed;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic city and its records");
    synth_cmd->add_option("--spec", spec_path, "Spec JSON (default built-in spec)");
    synth_cmd->add_option("--out", synth_out, "Output city directory")->required();
    synth_cmd->add_option("--seed", seed, "Override the spec seed");

    std::string data_dir, host = "0.0.0.0";
    int port = 8080;
    if (const char* env = std::getenv("UF_DATA_DIR")) data_dir = env;
    if (const char* env = std::getenv("UF_PORT")) port = std::atoi(env);
    auto* serve_cmd = app.add_subcommand("serve", "Serve cached fields over HTTP");
    serve_cmd->add_option("--data", data_dir, "Data root (env UF_DATA_DIR)");
    serve_cmd->add_option("--port", port, "Listen port (env UF_PORT)")->check(CLI::Range(1, 65535));
    serve_cmd->add_option("--host", host, "Listen address");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*ingest_cmd) {
            const auto r = uf::run_ingest(ingest);
            std::printf("lines %llu, rejected %llu, dropped by source %llu, dropped by cleansing %llu\n",
                        static_cast<unsigned long long>(r.lines), static_cast<unsigned long long>(r.rejected_total()),
                        static_cast<unsigned long long>(r.dropped_by_source),
                        static_cast<unsigned long long>(r.dropped_by_cleansing));
            std::printf("devices %llu retained of %llu; %llu records in %zu shards at %s\n",
                        static_cast<unsigned long long>(r.devices_retained),
                        static_cast<unsigned long long>(r.devices_seen),
                        static_cast<unsigned long long>(r.shards.total_records()), r.shards.size(),
                        r.shards.dir.string().c_str());
        } else if (*profiles_cmd) {
            const auto p = uf::run_grid_profiles(city_dir);
            std::size_t empty = 0;
            for (std::size_t c = 0; c < p.cells(); ++c) empty += p.empty_at(c) ? 1 : 0;
            std::printf("profiles %dx%d, %zu cells without POIs in range\n", p.cols, p.rows, empty);
        } else if (*metrics_cmd) {
            metrics.metrics = parse_metrics(metric_arg);
            metrics.filters = parse_filters(filter_arg);
            metrics.filtered_p = !full_p;
            for (const auto& f : uf::run_metrics(metrics)) std::printf("%s\n", f.string().c_str());
        } else if (*render_cmd) {
            auto m = uf::parse_metric(render_metric);
            if (!m) uf::fail(uf::ErrorKind::Usage, "unknown metric '" + render_metric + "'");
            auto f = uf::TimeFilter::parse(render_filter);
            if (!f) uf::fail(uf::ErrorKind::Usage, "unknown time filter '" + render_filter + "'");
            render.metric = *m;
            render.filter = *f;
            if (!viewport.empty()) render.bbox = parse_bbox(viewport);
            render.radius_px = radius;
            render.t_min = t_min;
            render.t_max = t_max;
            const auto r = uf::run_render(render);
            std::printf("%s %dx%d range [%g, %g]\n", render.png.string().c_str(), r.width, r.height, r.min, r.max);
        } else if (*synth_cmd) {
            auto spec = spec_path.empty() ? uf::default_synth_spec() : uf::load_synth_spec(spec_path);
            if (seed) spec.seed = *seed;
            const auto out = uf::run_synth(spec, synth_out);
            std::size_t records = 0;
            for (const auto& u : out.users) records += u.records;
            std::printf("%zu users, %zu records, %zu POIs, %zu divisions in %s\n", out.users.size(), records,
                        out.city.pois.size(), out.city.divisions.size(), synth_out.c_str());
        } else if (*serve_cmd) {
            if (data_dir.empty()) uf::fail(uf::ErrorKind::Usage, "no data directory (use --data or UF_DATA_DIR)");
            uf::ApiService service(data_dir);
            std::printf("serving %zu cities from %s on %s:%d\n", service.snapshot()->cities.size(), data_dir.c_str(),
                        host.c_str(), port);
            std::fflush(stdout);
            uf::run_server(service, host, port);
        }
    } catch (const uf::Error& e) {
        std::fprintf(stderr, "uf: %s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "uf: %s\n", e.what());
        return kIo;
    }
    return kOk;
}
