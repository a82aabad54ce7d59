#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "skyseg/tensor.hpp"

namespace skyseg {

// Axis-aligned region in scene pixel coordinates, half-open on both axes.
struct GeoRect {
    size_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    size_t width() const { return x1 - x0; }
    size_t height() const { return y1 - y0; }

    bool operator==(const GeoRect&) const = default;
};

// Invertible affine pixel -> world-coordinate map. The synthetic world uses
// scene pixels as its coordinate system, so the default is identity; the
// transform stands in for the GPS indirection of a real deployment.
struct GeoTransform {
    double a = 1, b = 0, c = 0;
    double d = 0, e = 1, f = 0;

    void validate() const;
    std::pair<double, double> apply(double x, double y) const;
    std::pair<double, double> invert(double u, double v) const;
};

// Synthetic ground-truth world: region-structured labels plus an image whose
// colors correlate with the labels.
struct Scene {
    size_t width = 0;
    size_t height = 0;
    size_t num_classes = 0;
    LabelMap labels;        // height × width
    Tensor image;           // height × width × 3, values in [0,1]
    GeoTransform geo;

    GeoRect full_rect() const { return GeoRect{0, 0, width, height}; }
};

enum class ResolutionTag { Low, High };

struct Observation {
    Tensor image;           // h × w × 3
    GeoRect source_rect;
    ResolutionTag resolution = ResolutionTag::Low;
};

enum class Corruption { Snow, Fog, Frost };

Scene generate_scene(uint64_t seed, size_t width, size_t height, size_t num_classes);

// Whole-scene capture, area-averaged down to target dims.
Observation leader_capture(const Scene& scene, size_t target_h, size_t target_w);

// Native-resolution crop of the given region.
Observation follower_capture(const Scene& scene, const GeoRect& rect);

// Parametric weather corruption, deterministic in (seed, kind, severity).
// Severity 0 is the identity; outputs are clamped to [0,1].
Observation apply_corruption(const Observation& obs, Corruption kind, int severity, uint64_t seed);

// Flat binary scene container ("SKYSCN1").
void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

const char* corruption_name(Corruption kind);

}  // namespace skyseg
