#pragma once

// Serial, deliberately naive implementations of the parallel kernels. They are
// kept for tests and benchmarks and share no code path with the kernels they
// check beyond the plain data types.

#include <cstdint>
#include <span>
#include <vector>

#include "uf/entropy.hpp"
#include "uf/geo_grid.hpp"
#include "uf/ingest.hpp"
#include "uf/raster.hpp"

namespace uf::reference {

/// Every POI against every lattice point, no spatial index.
PoiProfiles grid_poi_profiles(const Lattice& lattice, std::span<const Poi> pois, const CityConfig& cfg);

/// O(pixels x seeds) double loop.
ScalarRaster rasterize_seeds(std::span<const Seed> seeds, int width, int height, double radius_px);

struct Stamp {
    std::uint32_t cell = 0;
    double value = 0.0;
};

/// Per-record metric values for records in any order (devices are grouped
/// with an ordered map, q rows are materialized densely).
std::vector<Stamp> stamp_records(std::span<const CleanRecord> records, MetricKind metric, TimeFilter filter,
                                 const MetricContext& ctx);

/// Unsharded aggregation of stamp_records with plain summation.
GridMetricField compute_metric_field(std::span<const CleanRecord> records, MetricKind metric, TimeFilter filter,
                                     const MetricContext& ctx);

}  // namespace uf::reference
