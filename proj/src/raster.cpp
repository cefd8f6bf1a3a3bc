#include "uf/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <png.h>

#include <json.hpp>

#include "binary_io.hpp"

namespace uf {

void Viewport::validate() const {
    if (width < 1 || height < 1) fail(ErrorKind::Invalid, "viewport needs width and height >= 1");
    if (!(bbox.lon_min < bbox.lon_max) || !(bbox.lat_min < bbox.lat_max))
        fail(ErrorKind::Invalid, "viewport bbox is degenerate");
    if (!(zoom > 0.0)) fail(ErrorKind::Invalid, "viewport zoom must be positive");
}

void ScalarRaster::update_range() noexcept {
    if (values.empty()) {
        min = max = 0.0;
        return;
    }
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    min = *lo;
    max = *hi;
}

double adapt_radius(double base_radius_px, double zoom_delta, bool adaptive) {
    if (!(zoom_delta > 0.0)) fail(ErrorKind::Invalid, "zoom factor must be positive");
    return adaptive ? base_radius_px * zoom_delta : base_radius_px;
}

double default_radius_px(const Lattice& lattice, const Viewport& viewport) {
    const double grid_radius_deg = lattice.step_lon / 2.0;
    const double px_per_deg = viewport.width / viewport.bbox.width();
    return 3.0 * grid_radius_deg * px_per_deg;
}

std::vector<Seed> field_seeds(const GridMetricField& field, const Lattice& lattice, const Viewport& viewport,
                              double radius_px) {
    std::vector<Seed> seeds;
    for (const auto& c : field.cells) {
        if (c.count == 0) continue;
        const LonLat at = lattice.center(lattice.cell_at(c.cell));
        const double x = viewport.x_of(at.lon);
        const double y = viewport.y_of(at.lat);
        if (x < -0.5 - radius_px || x > viewport.width - 0.5 + radius_px || y < -0.5 - radius_px ||
            y > viewport.height - 0.5 + radius_px)
            continue;
        seeds.push_back({x, y, c.mean});
    }
    return seeds;
}

ScalarRaster rasterize_seeds(std::span<const Seed> seeds, int width, int height, double radius_px) {
    if (width < 1 || height < 1) fail(ErrorKind::Invalid, "raster needs width and height >= 1");
    if (!(radius_px > 0.0)) fail(ErrorKind::Invalid, "diffusion radius must be positive");
    ScalarRaster out{width, height, std::vector<double>(static_cast<std::size_t>(width) * height, 0.0), 0.0, 0.0};

    // Seeds sorted by y let each row visit only the band within one radius.
    std::vector<Seed> sorted(seeds.begin(), seeds.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const Seed& a, const Seed& b) { return a.y < b.y; });
    const double inv_r = 1.0 / radius_px;

#pragma omp parallel for schedule(static)
    for (int j = 0; j < height; ++j) {
        double* row = out.values.data() + static_cast<std::size_t>(j) * width;
        auto first = std::lower_bound(sorted.begin(), sorted.end(), j - radius_px,
                                      [](const Seed& s, double y) { return s.y < y; });
        for (auto it = first; it != sorted.end() && it->y <= j + radius_px; ++it) {
            const Seed& s = *it;
            const double dy = j - s.y;
            const double half = std::sqrt(std::max(0.0, radius_px * radius_px - dy * dy));
            const int i0 = std::max(0, static_cast<int>(std::ceil(s.x - half)));
            const int i1 = std::min(width - 1, static_cast<int>(std::floor(s.x + half)));
            for (int i = i0; i <= i1; ++i) {
                const double dx = i - s.x;
                const double w = 1.0 - std::sqrt(dx * dx + dy * dy) * inv_r;
                if (w > 0.0) row[i] += s.value * w;
            }
        }
    }
    out.update_range();
    return out;
}

ScalarRaster rasterize_field(const GridMetricField& field, const Lattice& lattice, const DiffusionParams& params) {
    params.viewport.validate();
    const double radius = adapt_radius(params.radius_px, params.viewport.zoom, params.adaptive);
    const auto seeds = field_seeds(field, lattice, params.viewport, radius);
    return rasterize_seeds(seeds, params.viewport.width, params.viewport.height, radius);
}

Rgba rainbow(double t, bool reversed, std::uint8_t alpha) {
    t = std::clamp(t, 0.0, 1.0);
    if (reversed) t = 1.0 - t;
    const double hue = 240.0 * (1.0 - t);
    // HSL with S = 1, L = 0.5: chroma 1, no lightness offset.
    const double h = hue / 60.0;
    const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
    double r = 0, g = 0, b = 0;
    if (h < 1) {
        r = 1, g = x;
    } else if (h < 2) {
        r = x, g = 1;
    } else if (h < 3) {
        g = 1, b = x;
    } else {
        g = x, b = 1;
    }
    auto to8 = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
    return {to8(r), to8(g), to8(b), alpha};
}

std::vector<std::uint8_t> apply_color_filter(const ScalarRaster& raster, const ColorFilter& filter, double opacity) {
    if (filter.t_min > filter.t_max) fail(ErrorKind::Invalid, "color filter needs t_min <= t_max");
    const auto alpha = static_cast<std::uint8_t>(std::lround(std::clamp(opacity, 0.0, 1.0) * 255.0));
    std::vector<std::uint8_t> rgba(raster.values.size() * 4, 0);
    const double span = filter.t_max - filter.t_min;
    for (std::size_t i = 0; i < raster.values.size(); ++i) {
        const double v = raster.values[i];
        if (v < filter.t_min) continue;
        const double t = (v >= filter.t_max || span <= 0.0) ? 1.0 : (v - filter.t_min) / span;
        const Rgba c = rainbow(t, filter.reversed, alpha);
        rgba[4 * i + 0] = c.r;
        rgba[4 * i + 1] = c.g;
        rgba[4 * i + 2] = c.b;
        rgba[4 * i + 3] = c.a;
    }
    return rgba;
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::string*>(png_get_io_ptr(png));
    out->append(reinterpret_cast<const char*>(data), length);
}

void png_flush_noop(png_structp) {}

}  // namespace

std::string encode_png(int width, int height, std::span<const std::uint8_t> rgba) {
    if (rgba.size() != static_cast<std::size_t>(width) * height * 4) fail(ErrorKind::Invalid, "RGBA buffer size mismatch");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) fail(ErrorKind::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail(ErrorKind::Io, "png_create_info_struct failed");
    }
    std::string out;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail(ErrorKind::Io, "PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_append, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 PNG_COLOR_TYPE_RGBA, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(rgba.data() + static_cast<std::size_t>(y) * width * 4));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgba) {
    write_file(path, encode_png(width, height, rgba));
}

std::string encode_raster(const ScalarRaster& raster) {
    // the advertised range is taken over the float32 payload so it brackets it exactly
    std::vector<float> payload(raster.values.begin(), raster.values.end());
    double lo = 0.0;
    double hi = 0.0;
    if (!payload.empty()) {
        const auto [a, b] = std::minmax_element(payload.begin(), payload.end());
        lo = *a;
        hi = *b;
    }
    const std::string header =
        nlohmann::json{{"width", raster.width}, {"height", raster.height}, {"value_range", {lo, hi}}}.dump();
    std::string out;
    out.reserve(4 + header.size() + payload.size() * 4);
    detail::put_u32(out, static_cast<std::uint32_t>(header.size()));
    out += header;
    for (float v : payload) detail::put_f32(out, v);
    return out;
}

}  // namespace uf
