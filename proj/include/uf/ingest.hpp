#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "uf/common.hpp"

namespace uf {

enum class Source : std::uint8_t { Gps, Wifi, BaseStation, Ip };

std::string_view source_name(Source s) noexcept;
std::optional<Source> parse_source(std::string_view s) noexcept;

/// Minute-precision wall-clock time as written in the record feed.
struct CivilMinute {
    int year = 0;
    int month = 0;
    int day = 0;
    int hour = 0;
    int minute = 0;

    std::chrono::sys_days date() const;
    bool operator==(const CivilMinute&) const = default;
};

struct RawRecord {
    CivilMinute time;
    double lon = 0.0;
    double lat = 0.0;
    std::string mid;
    Source src = Source::Gps;
};

enum class RejectKind : std::uint8_t {
    FieldCount,
    BadTime,
    BadNumber,
    LonRange,
    LatRange,
    BadSource,
    EmptyDevice,
    BeforeEpoch,
};
inline constexpr std::size_t kRejectKinds = 8;

std::string_view reject_name(RejectKind k) noexcept;

struct ParseError {
    RejectKind kind;
    std::size_t line = 0;
};

using ParseResult = std::variant<RawRecord, ParseError>;

/// Decodes "HH:MM/MM/DD/YYYY,lon,lat,mid,src". A single space after each
/// comma is tolerated. The date part is month/day/year.
ParseResult parse_record(std::string_view line, std::size_t line_no = 0);

/// A record with its timestamp reduced to a 10-minute slot index counted from
/// midnight of the dataset's first day. Only GPS and WIFI records survive.
struct CleanRecord {
    std::int64_t timeslot = 0;
    double lon = 0.0;
    double lat = 0.0;
    std::string mid;
    Source src = Source::Gps;

    bool operator==(const CleanRecord&) const = default;
};

inline constexpr int kSlotMinutes = 10;
inline constexpr int kSlotsPerDay = 24 * 60 / kSlotMinutes;

/// Returns nullopt for BASE_STATION / IP records. Throws Error(Invalid) if
/// the record predates the epoch.
std::optional<CleanRecord> filter_and_discretize(const RawRecord& r, std::chrono::sys_days epoch);

struct DeviceSummary {
    std::string mid;
    std::uint64_t record_count = 0;
    double months_spanned = 1.0;
};

inline constexpr double kMinMonthlyRecords = 1.0;
inline constexpr double kMaxMonthlyRecords = 2500.0;

/// Devices whose monthly record rate lies in [1, 2500] (inclusive).
std::set<std::string> cleanse_devices(std::span<const DeviceSummary> summaries);

/// Months spanned by a dataset of `days` days, normalized to 30-day months.
inline double months_spanned(int days) { return static_cast<double>(days) / 30.0; }

std::size_t shard_of(std::string_view mid, std::size_t shard_count) noexcept;
std::string shard_file_name(std::size_t index);

/// Shard rows reuse the input layout with the timestamp replaced by the
/// timeslot: "timeslot,lon,lat,mid,src".
std::string format_shard_line(const CleanRecord& r);
std::optional<CleanRecord> parse_shard_line(std::string_view line);

struct ShardInfo {
    std::string file;
    std::uint64_t records = 0;
    std::string digest;
};

struct ShardSet {
    std::filesystem::path dir;
    std::vector<ShardInfo> shards;

    std::size_t size() const noexcept { return shards.size(); }
    std::filesystem::path path(std::size_t i) const { return dir / shards[i].file; }
    std::uint64_t total_records() const noexcept;
};

struct IngestOptions {
    std::filesystem::path input;
    std::filesystem::path out_dir;
    std::chrono::sys_days epoch{};
    int days = 90;
    std::size_t shard_count = 10000;
    // Concurrent shard writers in the routing pass. 0 or 1 means serial.
    int writers = 1;
};

struct IngestReport {
    std::uint64_t lines = 0;
    std::uint64_t blank_lines = 0;
    std::array<std::uint64_t, kRejectKinds> rejected{};
    std::uint64_t dropped_by_source = 0;
    std::uint64_t dropped_by_cleansing = 0;
    std::uint64_t devices_seen = 0;
    std::uint64_t devices_retained = 0;
    std::string input_digest;
    ShardSet shards;

    std::uint64_t rejected_total() const noexcept;
};

/// Out-of-core ingestion: counts records per device, cleanses devices, routes
/// surviving records to B spill files by FNV-1a(mid) mod B, then sorts every
/// spill into its final shard (grouped and ordered by mid). A marker file
/// `_INCOMPLETE` stays in out_dir until the run finishes; reruns discard any
/// previous partial output. Writes `manifest.json`.
IngestReport ingest_records(const IngestOptions& opts);

/// Sorts shard rows into canonical order (mid, timeslot, row text).
void canonical_sort(std::vector<std::string>& rows);

ShardSet load_shard_set(const std::filesystem::path& dir);
std::vector<CleanRecord> read_shard(const std::filesystem::path& path);

/// Calls fn(span of one device's records) for every run of equal mids.
template <typename Fn>
void for_each_device(std::span<const CleanRecord> records, Fn&& fn) {
    std::size_t begin = 0;
    while (begin < records.size()) {
        std::size_t end = begin + 1;
        while (end < records.size() && records[end].mid == records[begin].mid) ++end;
        fn(records.subspan(begin, end - begin));
        begin = end;
    }
}

}  // namespace uf
