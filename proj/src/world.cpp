#include "skyseg/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "skyseg/rng.hpp"

namespace skyseg {

void GeoTransform::validate() const {
    double det = a * e - b * d;
    if (!std::isfinite(det) || std::abs(det) < 1e-12) {
        throw ParamError("geo transform is not invertible");
    }
}

std::pair<double, double> GeoTransform::apply(double x, double y) const {
    return {a * x + b * y + c, d * x + e * y + f};
}

std::pair<double, double> GeoTransform::invert(double u, double v) const {
    validate();
    double det = a * e - b * d;
    double x = (e * (u - c) - b * (v - f)) / det;
    double y = (-d * (u - c) + a * (v - f)) / det;
    return {x, y};
}

namespace {

constexpr size_t kMaxClasses = 65536;  // labels travel as u16

void check_rect(const Scene& scene, const GeoRect& r) {
    if (r.x0 >= r.x1 || r.y0 >= r.y1 || r.x1 > scene.width || r.y1 > scene.height) {
        throw BoundsError("rect [" + std::to_string(r.x0) + "," + std::to_string(r.y0) + "," +
                          std::to_string(r.x1) + "," + std::to_string(r.y1) +
                          ") outside scene " + std::to_string(scene.width) + "x" +
                          std::to_string(scene.height));
    }
}

}  // namespace

Scene generate_scene(uint64_t seed, size_t width, size_t height, size_t num_classes) {
    if (width == 0 || height == 0) throw ParamError("generate_scene: dims must be positive");
    if (num_classes < 2) throw ParamError("generate_scene: need at least 2 classes");
    if (num_classes > kMaxClasses) throw ParamError("generate_scene: at most 65536 classes");

    Rng rng(splitmix64(seed));

    // Voronoi partition; four seeded sites per class keeps regions contiguous
    // and every class present on any reasonably sized scene.
    size_t sites_per_class = 4;
    size_t n_sites = num_classes * sites_per_class;
    std::vector<size_t> sx(n_sites), sy(n_sites);
    std::vector<uint16_t> site_class(n_sites);
    for (size_t i = 0; i < n_sites; ++i) {
        sx[i] = rng.index(width);
        sy[i] = rng.index(height);
        site_class[i] = static_cast<uint16_t>(i % num_classes);
    }

    std::vector<float> base_color(num_classes * 3);
    for (size_t c = 0; c < num_classes * 3; ++c) base_color[c] = 0.15f + 0.7f * rng.unit();

    Scene scene;
    scene.width = width;
    scene.height = height;
    scene.num_classes = num_classes;
    scene.labels = LabelMap(height, width);
    Tensor image({height, width, 3});

    uint64_t noise_seed = splitmix64(seed ^ 0x77aa55cc33ee1100ULL);
    for (size_t y = 0; y < height; ++y) {
        for (size_t x = 0; x < width; ++x) {
            size_t best = 0;
            uint64_t best_d = std::numeric_limits<uint64_t>::max();
            for (size_t i = 0; i < n_sites; ++i) {
                int64_t dx = static_cast<int64_t>(x) - static_cast<int64_t>(sx[i]);
                int64_t dy = static_cast<int64_t>(y) - static_cast<int64_t>(sy[i]);
                uint64_t d = static_cast<uint64_t>(dx * dx + dy * dy);
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            uint16_t cls = site_class[best];
            scene.labels(y, x) = cls;
            uint64_t px = static_cast<uint64_t>(y) * width + x;
            for (size_t ch = 0; ch < 3; ++ch) {
                float noise = hash_unit(hash_mix(noise_seed, px, ch)) - 0.5f;
                float v = base_color[cls * 3 + ch] + 0.06f * noise;
                image(y, x, ch) = std::clamp(v, 0.0f, 1.0f);
            }
        }
    }
    scene.image = std::move(image);
    return scene;
}

Observation leader_capture(const Scene& scene, size_t target_h, size_t target_w) {
    if (target_h == 0 || target_w == 0 || target_h > scene.height || target_w > scene.width) {
        throw ParamError("leader_capture: target dims must be positive and at most scene dims");
    }
    Observation obs;
    obs.image = area_resize(scene.image, target_h, target_w);
    obs.source_rect = scene.full_rect();
    obs.resolution = ResolutionTag::Low;
    return obs;
}

Observation follower_capture(const Scene& scene, const GeoRect& rect) {
    check_rect(scene, rect);
    size_t h = rect.height(), w = rect.width();
    Tensor crop({h, w, 3});
    for (size_t y = 0; y < h; ++y) {
        const float* src = scene.image.data() + ((rect.y0 + y) * scene.width + rect.x0) * 3;
        float* dst = crop.data() + y * w * 3;
        std::copy(src, src + w * 3, dst);
    }
    Observation obs;
    obs.image = std::move(crop);
    obs.source_rect = rect;
    obs.resolution = ResolutionTag::High;
    return obs;
}

Observation apply_corruption(const Observation& obs, Corruption kind, int severity, uint64_t seed) {
    if (severity < 0 || severity > 5) {
        throw ParamError("corruption severity must be in [0,5], got " + std::to_string(severity));
    }
    Observation out;
    out.source_rect = obs.source_rect;
    out.resolution = obs.resolution;
    if (severity == 0) {
        out.image = obs.image;
        return out;
    }
    obs.image.require_rank(3, "apply_corruption");
    size_t h = obs.image.dim(0), w = obs.image.dim(1);
    Tensor img = obs.image;
    float s = static_cast<float>(severity);
    uint64_t key = hash_mix(seed, static_cast<uint64_t>(kind) + 1, static_cast<uint64_t>(severity));

    switch (kind) {
        case Corruption::Fog: {
            float t = 0.12f * s;
            for (float& v : img.values()) v = v * (1.0f - t) + t;
            break;
        }
        case Corruption::Snow: {
            float density = 0.02f * s;
            float lift = 0.05f * s;
            for (size_t y = 0; y < h; ++y) {
                for (size_t x = 0; x < w; ++x) {
                    float* px = img.data() + (y * w + x) * 3;
                    if (hash_unit(hash_mix(key, y * w + x)) < density) {
                        px[0] = px[1] = px[2] = 1.0f;
                    } else {
                        for (size_t ch = 0; ch < 3; ++ch)
                            px[ch] = std::min(1.0f, px[ch] + lift);
                    }
                }
            }
            break;
        }
        case Corruption::Frost: {
            // Low-frequency texture: seeded node grid every 16 px, bilinearly
            // interpolated, applied multiplicatively.
            float amp = 0.08f * s;
            constexpr size_t cell = 16;
            size_t gh = h / cell + 2, gw = w / cell + 2;
            std::vector<float> nodes(gh * gw);
            for (size_t gy = 0; gy < gh; ++gy)
                for (size_t gx = 0; gx < gw; ++gx)
                    nodes[gy * gw + gx] = 2.0f * hash_unit(hash_mix(key, gy, gx)) - 1.0f;
            for (size_t y = 0; y < h; ++y) {
                float fy = static_cast<float>(y) / cell;
                size_t gy = static_cast<size_t>(fy);
                float ty = fy - gy;
                for (size_t x = 0; x < w; ++x) {
                    float fx = static_cast<float>(x) / cell;
                    size_t gx = static_cast<size_t>(fx);
                    float tx = fx - gx;
                    float n00 = nodes[gy * gw + gx];
                    float n01 = nodes[gy * gw + gx + 1];
                    float n10 = nodes[(gy + 1) * gw + gx];
                    float n11 = nodes[(gy + 1) * gw + gx + 1];
                    float n = (1 - ty) * ((1 - tx) * n00 + tx * n01) + ty * ((1 - tx) * n10 + tx * n11);
                    float* px = img.data() + (y * w + x) * 3;
                    for (size_t ch = 0; ch < 3; ++ch)
                        px[ch] = std::clamp(px[ch] * (1.0f + amp * n), 0.0f, 1.0f);
                }
            }
            break;
        }
    }
    out.image = std::move(img);
    return out;
}

namespace {

constexpr char kSceneMagic[7] = {'S', 'K', 'Y', 'S', 'C', 'N', '1'};

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
}

}  // namespace

void save_scene(const Scene& scene, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os.write(kSceneMagic, sizeof(kSceneMagic));
    write_le<uint32_t>(os, static_cast<uint32_t>(scene.width));
    write_le<uint32_t>(os, static_cast<uint32_t>(scene.height));
    write_le<uint32_t>(os, static_cast<uint32_t>(scene.num_classes));
    for (uint16_t v : scene.labels.labels) write_le<uint16_t>(os, v);
    for (float v : scene.image.values()) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        write_le<uint32_t>(os, bits);
    }
    if (!os) throw Error("write failed for " + path.string());
}

Scene load_scene(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open " + path.string());
    char magic[sizeof(kSceneMagic)];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kSceneMagic, sizeof(magic)) != 0) {
        throw FrameError("not a scene file: " + path.string());
    }
    Scene scene;
    scene.width = read_le<uint32_t>(is);
    scene.height = read_le<uint32_t>(is);
    scene.num_classes = read_le<uint32_t>(is);
    if (!is || scene.width == 0 || scene.height == 0 || scene.num_classes < 2) {
        throw FrameError("scene header invalid: " + path.string());
    }
    size_t n = scene.width * scene.height;
    std::vector<uint16_t> labels(n);
    for (size_t i = 0; i < n; ++i) labels[i] = read_le<uint16_t>(is);
    std::vector<float> image(n * 3);
    for (size_t i = 0; i < n * 3; ++i) {
        uint32_t bits = read_le<uint32_t>(is);
        std::memcpy(&image[i], &bits, 4);
    }
    if (!is) throw FrameError("scene file truncated: " + path.string());
    for (uint16_t v : labels) {
        if (v >= scene.num_classes) throw FrameError("scene label out of range: " + path.string());
    }
    scene.labels = LabelMap(scene.height, scene.width, std::move(labels));
    scene.image = Tensor({scene.height, scene.width, 3}, std::move(image));
    return scene;
}

const char* corruption_name(Corruption kind) {
    switch (kind) {
        case Corruption::Snow: return "snow";
        case Corruption::Fog: return "fog";
        case Corruption::Frost: return "frost";
    }
    return "?";
}

}  // namespace skyseg
