#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "uf/entropy.hpp"
#include "uf/geo_grid.hpp"
#include "uf/raster.hpp"

namespace uf {

/// One city loaded read-only from its directory.
struct CityData {
    std::string id;  // directory name; the key used by every route
    CityConfig config;
    Lattice lattice;
    std::vector<Poi> pois;
    std::vector<Division> divisions;
    bool has_demographics = false;
    // keyed by (metric, filter code)
    std::map<std::pair<MetricKind, std::uint32_t>, GridMetricField> fields;

    const GridMetricField* field(MetricKind m, const TimeFilter& f) const;
    std::vector<const Division*> level(DivisionLevel level) const;
};

/// Immutable snapshot of every city under a data root. A directory holding
/// city.json is a city; the root may itself be one.
struct Catalog {
    std::map<std::string, std::shared_ptr<const CityData>> cities;
};

std::shared_ptr<const CityData> load_city_data(const std::filesystem::path& dir);
std::shared_ptr<const Catalog> load_catalog(const std::filesystem::path& data_dir);

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

using Params = std::map<std::string, std::string>;

/// Transport-independent request handling. Requests read one snapshot;
/// reload() swaps in a fresh snapshot atomically.
class ApiService {
public:
    explicit ApiService(std::filesystem::path data_dir);
    explicit ApiService(std::shared_ptr<const Catalog> catalog);

    Response handle(const std::string& method, const std::string& path, const Params& params,
                    const std::string& body = {}) const;
    void reload();
    std::shared_ptr<const Catalog> snapshot() const;

private:
    std::filesystem::path data_dir_;
    mutable std::mutex mutex_;
    std::shared_ptr<const Catalog> catalog_;
};

/// Blocks serving HTTP until the process is stopped.
void run_server(ApiService& service, const std::string& host, int port);

}  // namespace uf
