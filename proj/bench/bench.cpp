// Parallel kernels against their serial references.

#include <sstream>

#include <benchmark/benchmark.h>

#include "fixture.hpp"
#include "support.hpp"
#include "uf/reference.hpp"

using namespace uf;

namespace {

struct City {
    testing::MiniCity m;
    testing::TempDir tmp{"uf_bench"};
    ShardSet shards;
    std::vector<Seed> seeds;

    City() : m(testing::make_mini_city(testing::mini_spec(1, 20))) {
        write_file(tmp / "feed.csv", m.feed);
        IngestOptions o;
        o.input = tmp / "feed.csv";
        o.out_dir = tmp / "shards";
        o.epoch = m.city.config.epoch;
        o.days = m.city.config.days;
        o.shard_count = 64;
        shards = ingest_records(o).shards;
        SplitMix64 rng(3);
        for (int i = 0; i < 300; ++i) seeds.push_back({rng.uniform(0, 512), rng.uniform(0, 384), rng.uniform(0, 2)});
    }
};

City& city() {
    static City c;
    return c;
}

void BM_profiles_parallel(benchmark::State& state) {
    const auto& m = city().m;
    for (auto _ : state) benchmark::DoNotOptimize(grid_poi_profiles(m.lattice, m.city.pois, m.city.config));
}

void BM_profiles_reference(benchmark::State& state) {
    const auto& m = city().m;
    for (auto _ : state) benchmark::DoNotOptimize(reference::grid_poi_profiles(m.lattice, m.city.pois, m.city.config));
}

void BM_raster_parallel(benchmark::State& state) {
    const auto& s = city().seeds;
    for (auto _ : state) benchmark::DoNotOptimize(rasterize_seeds(s, 512, 384, static_cast<double>(state.range(0))));
}

void BM_raster_reference(benchmark::State& state) {
    const auto& s = city().seeds;
    for (auto _ : state)
        benchmark::DoNotOptimize(reference::rasterize_seeds(s, 512, 384, static_cast<double>(state.range(0))));
}

void BM_field_sharded(benchmark::State& state) {
    auto& c = city();
    const auto ctx = c.m.context();
    for (auto _ : state)
        benchmark::DoNotOptimize(compute_metric_field(c.shards, MetricKind::Vibrancy, TimeFilter::all(), ctx,
                                                      static_cast<int>(state.range(0))));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.m.records.size()));
}

void BM_field_reference(benchmark::State& state) {
    auto& c = city();
    const auto ctx = c.m.context();
    for (auto _ : state)
        benchmark::DoNotOptimize(reference::compute_metric_field(c.m.records, MetricKind::Vibrancy, TimeFilter::all(), ctx));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c.m.records.size()));
}

}  // namespace

BENCHMARK(BM_profiles_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_profiles_reference)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_raster_parallel)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_raster_reference)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_field_sharded)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_field_reference)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
