#include "uf/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "bounded_queue.hpp"

namespace uf {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view source_name(Source s) noexcept {
    switch (s) {
        case Source::Gps: return "GPS";
        case Source::Wifi: return "WIFI";
        case Source::BaseStation: return "BASE_STATION";
        case Source::Ip: return "IP";
    }
    return "?";
}

std::optional<Source> parse_source(std::string_view s) noexcept {
    if (s == "GPS") return Source::Gps;
    if (s == "WIFI") return Source::Wifi;
    if (s == "BASE_STATION") return Source::BaseStation;
    if (s == "IP") return Source::Ip;
    return std::nullopt;
}

std::string_view reject_name(RejectKind k) noexcept {
    switch (k) {
        case RejectKind::FieldCount: return "field_count";
        case RejectKind::BadTime: return "bad_time";
        case RejectKind::BadNumber: return "bad_number";
        case RejectKind::LonRange: return "lon_range";
        case RejectKind::LatRange: return "lat_range";
        case RejectKind::BadSource: return "bad_source";
        case RejectKind::EmptyDevice: return "empty_device";
        case RejectKind::BeforeEpoch: return "before_epoch";
    }
    return "?";
}

std::chrono::sys_days CivilMinute::date() const {
    using namespace std::chrono;
    return sys_days{year_month_day{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                   std::chrono::day{static_cast<unsigned>(day)}}};
}

namespace {

template <typename T>
bool parse_int(std::string_view s, T& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

std::string_view trim_line(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ' || s.back() == '\t'))
        s.remove_suffix(1);
    return s;
}

// Splits on ',' into exactly N fields; drops one leading space per field.
template <std::size_t N>
bool split_fields(std::string_view line, std::array<std::string_view, N>& out) {
    std::size_t n = 0;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
        if (n > 0 && !field.empty() && field.front() == ' ') field.remove_prefix(1);
        if (n == N) return false;
        out[n++] = field;
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return n == N;
}

bool parse_time(std::string_view s, CivilMinute& t) {
    // HH:MM/MM/DD/YYYY
    if (s.size() != 16 || s[2] != ':' || s[5] != '/' || s[8] != '/' || s[11] != '/') return false;
    if (!parse_int(s.substr(0, 2), t.hour) || !parse_int(s.substr(3, 2), t.minute) ||
        !parse_int(s.substr(6, 2), t.month) || !parse_int(s.substr(9, 2), t.day) ||
        !parse_int(s.substr(12, 4), t.year))
        return false;
    if (t.hour < 0 || t.hour > 23 || t.minute < 0 || t.minute > 59) return false;
    if (t.month < 1 || t.month > 12 || t.day < 1 || t.day > 31) return false;
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{t.year}, std::chrono::month{static_cast<unsigned>(t.month)},
                             std::chrono::day{static_cast<unsigned>(t.day)}};
    return ymd.ok();
}

}  // namespace

ParseResult parse_record(std::string_view line, std::size_t line_no) {
    line = trim_line(line);
    std::array<std::string_view, 5> f;
    if (!split_fields(line, f)) return ParseError{RejectKind::FieldCount, line_no};

    RawRecord r;
    if (!parse_time(f[0], r.time)) return ParseError{RejectKind::BadTime, line_no};
    if (!parse_double(f[1], r.lon) || !parse_double(f[2], r.lat)) return ParseError{RejectKind::BadNumber, line_no};
    if (r.lon < -180.0 || r.lon > 180.0) return ParseError{RejectKind::LonRange, line_no};
    if (r.lat < -90.0 || r.lat > 90.0) return ParseError{RejectKind::LatRange, line_no};
    if (f[3].empty()) return ParseError{RejectKind::EmptyDevice, line_no};
    const auto src = parse_source(f[4]);
    if (!src) return ParseError{RejectKind::BadSource, line_no};
    r.mid = std::string(f[3]);
    r.src = *src;
    return r;
}

std::optional<CleanRecord> filter_and_discretize(const RawRecord& r, std::chrono::sys_days epoch) {
    const auto date = r.time.date();
    if (date < epoch) fail(ErrorKind::Invalid, "record predates dataset epoch");
    if (r.src != Source::Gps && r.src != Source::Wifi) return std::nullopt;
    const std::int64_t days = (date - epoch).count();
    const std::int64_t minutes = days * 24 * 60 + r.time.hour * 60 + r.time.minute;
    return CleanRecord{minutes / kSlotMinutes, r.lon, r.lat, r.mid, r.src};
}

std::set<std::string> cleanse_devices(std::span<const DeviceSummary> summaries) {
    std::set<std::string> kept;
    for (const auto& s : summaries) {
        const double rate = static_cast<double>(s.record_count) / s.months_spanned;
        if (rate >= kMinMonthlyRecords && rate <= kMaxMonthlyRecords) kept.insert(s.mid);
    }
    return kept;
}

std::size_t shard_of(std::string_view mid, std::size_t shard_count) noexcept {
    return static_cast<std::size_t>(fnv1a64(mid) % shard_count);
}

std::string shard_file_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "shard_%05zu.rec", index);
    return buf;
}

std::string format_shard_line(const CleanRecord& r) {
    char buf[96];
    const int n = std::snprintf(buf, sizeof buf, "%lld,%.7f,%.7f,", static_cast<long long>(r.timeslot), r.lon, r.lat);
    std::string out(buf, static_cast<std::size_t>(n));
    out += r.mid;
    out += ',';
    out += source_name(r.src);
    return out;
}

std::optional<CleanRecord> parse_shard_line(std::string_view line) {
    line = trim_line(line);
    std::array<std::string_view, 5> f;
    if (!split_fields(line, f)) return std::nullopt;
    CleanRecord r;
    if (!parse_int(f[0], r.timeslot) || !parse_double(f[1], r.lon) || !parse_double(f[2], r.lat)) return std::nullopt;
    if (f[3].empty()) return std::nullopt;
    const auto src = parse_source(f[4]);
    if (!src) return std::nullopt;
    r.mid = std::string(f[3]);
    r.src = *src;
    return r;
}

std::uint64_t ShardSet::total_records() const noexcept {
    std::uint64_t n = 0;
    for (const auto& s : shards) n += s.records;
    return n;
}

std::uint64_t IngestReport::rejected_total() const noexcept {
    return std::accumulate(rejected.begin(), rejected.end(), std::uint64_t{0});
}

void canonical_sort(std::vector<std::string>& rows) {
    struct Key {
        std::string_view mid;
        std::int64_t slot;
        std::size_t index;
    };
    std::vector<Key> keys;
    keys.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string_view row = rows[i];
        const std::size_t c0 = row.find(',');
        std::int64_t slot = 0;
        parse_int(row.substr(0, c0), slot);
        std::size_t c = c0;
        for (int k = 0; k < 2; ++k) c = row.find(',', c + 1);
        const std::size_t c3 = row.find(',', c + 1);
        keys.push_back({row.substr(c + 1, c3 - c - 1), slot, i});
    }
    std::sort(keys.begin(), keys.end(), [&](const Key& a, const Key& b) {
        if (a.mid != b.mid) return a.mid < b.mid;
        if (a.slot != b.slot) return a.slot < b.slot;
        return rows[a.index] < rows[b.index];
    });
    std::vector<std::string> sorted;
    sorted.reserve(rows.size());
    for (const auto& k : keys) sorted.push_back(std::move(rows[k.index]));
    rows = std::move(sorted);
}

namespace {

constexpr const char* kMarker = "_INCOMPLETE";
constexpr std::size_t kSpillFlushBytes = 1 << 15;
constexpr std::size_t kBufferedBudget = std::size_t{64} << 20;

std::string spill_name(std::size_t shard) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "shard_%05zu.spill", shard);
    return buf;
}

void append_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) fail(ErrorKind::Io, "cannot open spill " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::Io, "spill write failed: " + path.string());
}

// Buffers rows per shard and appends them to spill files in bulk. One owner
// per shard, so appends never interleave.
class SpillWriter {
public:
    SpillWriter(fs::path dir, std::size_t shard_count) : dir_(std::move(dir)), buffers_(shard_count) {}

    void add(std::size_t shard, std::string_view row) {
        auto& buf = buffers_[shard];
        buf.append(row);
        buf.push_back('\n');
        buffered_ += row.size() + 1;
        if (buf.size() >= kSpillFlushBytes) flush(shard);
        if (buffered_ >= kBufferedBudget) flush_all();
    }

    void flush_all() {
        for (std::size_t s = 0; s < buffers_.size(); ++s)
            if (!buffers_[s].empty()) flush(s);
    }

private:
    void flush(std::size_t shard) {
        auto& buf = buffers_[shard];
        append_bytes(dir_ / spill_name(shard), buf);
        buffered_ -= buf.size();
        buf.clear();
    }

    fs::path dir_;
    std::vector<std::string> buffers_;
    std::size_t buffered_ = 0;
};

void clear_previous_output(const fs::path& dir) {
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        const auto ext = entry.path().extension().string();
        if ((name.rfind("shard_", 0) == 0 && (ext == ".rec" || ext == ".spill" || ext == ".tmp")) ||
            name == "manifest.json")
            fs::remove(entry.path());
    }
}

template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open input " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) fn(line, ++line_no);
    if (in.bad()) fail(ErrorKind::Io, "read failed: " + path.string());
}

struct Batch {
    std::vector<std::pair<std::size_t, std::string>> rows;
};

// Sorts one spill file into its final shard; returns the shard's info.
ShardInfo finalize_shard(const fs::path& dir, std::size_t shard) {
    const fs::path spill = dir / spill_name(shard);
    std::vector<std::string> rows;
    if (fs::exists(spill)) {
        std::ifstream in(spill, std::ios::binary);
        if (!in) fail(ErrorKind::Io, "cannot open spill " + spill.string());
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) rows.push_back(line);
    }
    canonical_sort(rows);

    std::string bytes;
    for (const auto& r : rows) {
        bytes += r;
        bytes += '\n';
    }
    const std::string name = shard_file_name(shard);
    const fs::path tmp = dir / (name + ".tmp");
    write_file(tmp, bytes);
    fs::rename(tmp, dir / name);
    if (fs::exists(spill)) fs::remove(spill);
    return ShardInfo{name, rows.size(), to_hex(fnv1a64(bytes))};
}

}  // namespace

IngestReport ingest_records(const IngestOptions& opts) {
    if (opts.shard_count < 1) fail(ErrorKind::Usage, "shard count must be >= 1");
    if (opts.days < 1) fail(ErrorKind::Usage, "dataset days must be >= 1");
    // a missing input must not disturb an existing shard set
    if (!fs::is_regular_file(opts.input)) fail(ErrorKind::Io, "cannot read input " + opts.input.string());
    const fs::path& dir = opts.out_dir;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
    clear_previous_output(dir);
    write_file(dir / kMarker, "ingest in progress\n");

    IngestReport report;
    const std::size_t B = opts.shard_count;

    // Pass 1: validate, count records per device.
    std::unordered_map<std::string, std::uint64_t> counts;
    Fnv1a64 input_hash;
    for_each_line(opts.input, [&](const std::string& line, std::size_t line_no) {
        input_hash.update(line);
        input_hash.update("\n");
        if (trim_line(line).empty()) {
            ++report.blank_lines;
            return;
        }
        ++report.lines;
        auto parsed = parse_record(line, line_no);
        if (auto* err = std::get_if<ParseError>(&parsed)) {
            ++report.rejected[static_cast<std::size_t>(err->kind)];
            return;
        }
        const auto& raw = std::get<RawRecord>(parsed);
        if (raw.time.date() < opts.epoch) {
            ++report.rejected[static_cast<std::size_t>(RejectKind::BeforeEpoch)];
            return;
        }
        if (raw.src != Source::Gps && raw.src != Source::Wifi) {
            ++report.dropped_by_source;
            return;
        }
        ++counts[raw.mid];
    });
    report.input_digest = to_hex(input_hash.value());
    report.devices_seen = counts.size();

    std::vector<DeviceSummary> summaries;
    summaries.reserve(counts.size());
    const double months = months_spanned(opts.days);
    for (const auto& [mid, n] : counts) summaries.push_back({mid, n, months});
    const auto kept_sorted = cleanse_devices(summaries);
    const std::unordered_set<std::string> kept(kept_sorted.begin(), kept_sorted.end());
    report.devices_retained = kept.size();

    // Pass 2: route retained records to spill files.
    const int writers = std::max(1, opts.writers);
    auto route = [&](auto&& emit) {
        for_each_line(opts.input, [&](const std::string& line, std::size_t line_no) {
            if (trim_line(line).empty()) return;
            auto parsed = parse_record(line, line_no);
            auto* raw = std::get_if<RawRecord>(&parsed);
            if (!raw || raw->time.date() < opts.epoch) return;
            auto clean = filter_and_discretize(*raw, opts.epoch);
            if (!clean) return;
            if (!kept.count(clean->mid)) {
                ++report.dropped_by_cleansing;
                return;
            }
            emit(shard_of(clean->mid, B), format_shard_line(*clean));
        });
    };

    if (writers == 1) {
        SpillWriter spill(dir, B);
        route([&](std::size_t shard, const std::string& row) { spill.add(shard, row); });
        spill.flush_all();
    } else {
        constexpr std::size_t kBatchRows = 4096;
        std::vector<std::unique_ptr<detail::BoundedQueue<Batch>>> queues;
        for (int w = 0; w < writers; ++w) queues.push_back(std::make_unique<detail::BoundedQueue<Batch>>(8));
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(writers));
        std::vector<std::thread> threads;
        for (int w = 0; w < writers; ++w) {
            threads.emplace_back([&, w] {
                auto& q = *queues[static_cast<std::size_t>(w)];
                try {
                    SpillWriter spill(dir, B);
                    while (auto batch = q.pop())
                        for (const auto& [shard, row] : batch->rows) spill.add(shard, row);
                    spill.flush_all();
                } catch (...) {
                    errors[static_cast<std::size_t>(w)] = std::current_exception();
                    // keep draining so the reader never blocks on a dead writer
                    while (q.pop()) {
                    }
                }
            });
        }
        std::vector<Batch> pending(static_cast<std::size_t>(writers));
        auto dispatch = [&](std::size_t w) {
            queues[w]->push(std::move(pending[w]));
            pending[w] = Batch{};
        };
        try {
            route([&](std::size_t shard, std::string row) {
                const std::size_t w = shard % static_cast<std::size_t>(writers);
                pending[w].rows.emplace_back(shard, std::move(row));
                if (pending[w].rows.size() >= kBatchRows) dispatch(w);
            });
            for (std::size_t w = 0; w < pending.size(); ++w)
                if (!pending[w].rows.empty()) dispatch(w);
        } catch (...) {
            for (auto& q : queues) q->close();
            for (auto& t : threads) t.join();
            throw;
        }
        for (auto& q : queues) q->close();
        for (auto& t : threads) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    // Pass 3: sort each spill into its shard. Each shard has exactly one writer.
    std::vector<ShardInfo> infos(B);
    std::vector<std::exception_ptr> errors(B);
#pragma omp parallel for schedule(dynamic) num_threads(writers)
    for (std::size_t s = 0; s < B; ++s) {
        try {
            infos[s] = finalize_shard(dir, s);
        } catch (...) {
            errors[s] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    report.shards = ShardSet{dir, std::move(infos)};

    json manifest;
    manifest["stage"] = "ingest";
    manifest["input"] = opts.input.string();
    manifest["input_digest"] = report.input_digest;
    {
        const auto ymd = std::chrono::year_month_day{opts.epoch};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
        manifest["parameters"] = {{"epoch", buf}, {"days", opts.days}, {"shard_count", B}};
    }
    manifest["lines"] = report.lines;
    manifest["blank_lines"] = report.blank_lines;
    json rejected = json::object();
    for (std::size_t k = 0; k < kRejectKinds; ++k)
        rejected[std::string(reject_name(static_cast<RejectKind>(k)))] = report.rejected[k];
    manifest["rejected"] = rejected;
    manifest["dropped_by_source"] = report.dropped_by_source;
    manifest["dropped_by_cleansing"] = report.dropped_by_cleansing;
    manifest["devices_seen"] = report.devices_seen;
    manifest["devices_retained"] = report.devices_retained;
    manifest["records"] = report.shards.total_records();
    json shards = json::array();
    for (const auto& s : report.shards.shards)
        shards.push_back({{"file", s.file}, {"records", s.records}, {"digest", s.digest}});
    manifest["shards"] = shards;
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    fs::remove(dir / kMarker);
    return report;
}

ShardSet load_shard_set(const fs::path& dir) {
    if (fs::exists(dir / kMarker)) fail(ErrorKind::DataContract, "shard set is incomplete: " + dir.string());
    const fs::path mpath = dir / "manifest.json";
    if (!fs::exists(mpath)) fail(ErrorKind::Io, "missing shard manifest " + mpath.string());
    json m;
    try {
        m = json::parse(read_file(mpath));
    } catch (const json::exception& e) {
        fail(ErrorKind::DataContract, "bad shard manifest: " + std::string(e.what()));
    }
    ShardSet set{dir, {}};
    for (const auto& s : m.at("shards"))
        set.shards.push_back({s.at("file").get<std::string>(), s.at("records").get<std::uint64_t>(),
                              s.at("digest").get<std::string>()});
    return set;
}

std::vector<CleanRecord> read_shard(const fs::path& path) {
    std::vector<CleanRecord> out;
    for_each_line(path, [&](const std::string& line, std::size_t line_no) {
        if (line.empty()) return;
        auto r = parse_shard_line(line);
        if (!r) fail(ErrorKind::DataContract, path.string() + ":" + std::to_string(line_no) + ": malformed shard row");
        out.push_back(std::move(*r));
    });
    return out;
}

}  // namespace uf
