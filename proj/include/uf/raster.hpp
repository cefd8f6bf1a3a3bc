#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uf/entropy.hpp"
#include "uf/geo_grid.hpp"

namespace uf {

/// Map window. Pixel (i, j) samples the point at pixel-space coordinate
/// (i, j): x grows east from lon_min, y grows south from lat_max, and pixel
/// centers sit at half-pixel offsets from the bbox edges.
struct Viewport {
    BBox bbox;
    int width = 1;
    int height = 1;
    // scale factor of map resolution relative to the base view
    double zoom = 1.0;

    void validate() const;
    double x_of(double lon) const noexcept { return (lon - bbox.lon_min) / bbox.width() * width - 0.5; }
    double y_of(double lat) const noexcept { return (bbox.lat_max - lat) / bbox.height() * height - 0.5; }
};

struct DiffusionParams {
    double radius_px = 0.0;
    bool adaptive = false;
    Viewport viewport;
};

struct ScalarRaster {
    int width = 0;
    int height = 0;
    std::vector<double> values;  // row-major
    double min = 0.0;
    double max = 0.0;

    double at(int x, int y) const noexcept {
        return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
    void update_range() noexcept;
};

/// A diffusion seed in pixel space.
struct Seed {
    double x = 0.0;
    double y = 0.0;
    double value = 0.0;
};

/// Radius after a change of map resolution. Adaptive radii keep their ground
/// size, so their pixel size follows the zoom; fixed radii do not.
double adapt_radius(double base_radius_px, double zoom_delta, bool adaptive);

/// Three grid radii (1.5 lattice steps) expressed in viewport pixels.
double default_radius_px(const Lattice& lattice, const Viewport& viewport);

/// Seeds for every stored cell whose center is within `radius_px` of the
/// viewport (so edges do not seam).
std::vector<Seed> field_seeds(const GridMetricField& field, const Lattice& lattice, const Viewport& viewport,
                              double radius_px);

/// Sum of linear cones v * max(0, 1 - d / r). Parallel over pixel rows.
ScalarRaster rasterize_seeds(std::span<const Seed> seeds, int width, int height, double radius_px);

/// Seeds the field's cell centers and diffuses them with the effective radius.
ScalarRaster rasterize_field(const GridMetricField& field, const Lattice& lattice, const DiffusionParams& params);

struct ColorFilter {
    double t_min = 0.0;
    double t_max = 1.0;
    bool reversed = false;
};

struct Rgba {
    std::uint8_t r = 0;
    std::uint8_t g = 0;
    std::uint8_t b = 0;
    std::uint8_t a = 0;
    bool operator==(const Rgba&) const = default;
};

/// Blue (hue 240) to red (hue 0) ramp at full saturation and 50% lightness;
/// t in [0, 1].
Rgba rainbow(double t, bool reversed, std::uint8_t alpha = 255);

/// Below t_min: transparent. At or above t_max: the rightmost color. Between:
/// linear position on the ramp. Returns RGBA bytes, row-major.
std::vector<std::uint8_t> apply_color_filter(const ScalarRaster& raster, const ColorFilter& filter,
                                             double opacity = 1.0);

std::string encode_png(int width, int height, std::span<const std::uint8_t> rgba);
void write_png(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgba);

/// Wire form used by the HTTP service: u32 little-endian header length, the
/// JSON header {width, height, value_range:[min,max]}, then float32 values.
std::string encode_raster(const ScalarRaster& raster);

}  // namespace uf
