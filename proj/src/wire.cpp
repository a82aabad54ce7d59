#include "skyseg/wire.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "skyseg/rng.hpp"

namespace skyseg {

double transmission_time(uint64_t bytes, const NetworkModel& net) {
    if (!(net.bandwidth_bytes_per_s > 0.0)) throw ParamError("network bandwidth must be positive");
    if (net.rtt_s < 0.0) throw ParamError("network rtt must be non-negative");
    return net.rtt_s / 2.0 + static_cast<double>(bytes) / net.bandwidth_bytes_per_s;
}

bool message_lost(const NetworkModel& net, uint32_t round, uint8_t sender, uint8_t recipient,
                  uint32_t sequence) {
    if (net.loss_rate <= 0.0) return false;
    if (net.loss_rate >= 1.0) return true;
    uint64_t h = hash_mix(net.seed ^ 0x10557ULL, round, sender, recipient, sequence);
    return hash_unit(h) < static_cast<float>(net.loss_rate);
}

namespace wire {

uint16_t f32_to_f16(float value) {
    uint32_t f = std::bit_cast<uint32_t>(value);
    uint16_t sign = static_cast<uint16_t>((f >> 16) & 0x8000u);
    f &= 0x7fffffffu;
    if (f >= 0x7f800000u) {
        return f > 0x7f800000u ? static_cast<uint16_t>(sign | 0x7e00u)
                               : static_cast<uint16_t>(sign | 0x7bffu);
    }
    if (f >= 0x477ff000u) {
        // would round past the largest finite half; saturate
        return static_cast<uint16_t>(sign | 0x7bffu);
    }
    if (f < 0x38800000u) {
        // subnormal half
        int shift = 126 - static_cast<int>(f >> 23);
        if (shift > 24) return sign;
        uint32_t mant = (f & 0x7fffffu) | 0x800000u;
        uint32_t m = mant >> shift;
        uint32_t rem = mant & ((1u << shift) - 1);
        uint32_t half = 1u << (shift - 1);
        if (rem > half || (rem == half && (m & 1u))) ++m;
        return static_cast<uint16_t>(sign | m);
    }
    uint32_t h = (((f >> 23) - 112u) << 10) | ((f >> 13) & 0x3ffu);
    uint32_t rem = f & 0x1fffu;
    if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;
    return static_cast<uint16_t>(sign | h);
}

float f16_to_f32(uint16_t half) {
    uint32_t sign = static_cast<uint32_t>(half & 0x8000u) << 16;
    uint32_t exp = (half >> 10) & 0x1fu;
    uint32_t mant = half & 0x3ffu;
    uint32_t f;
    if (exp == 0) {
        if (mant == 0) {
            f = sign;
        } else {
            int e = -1;
            do {
                mant <<= 1;
                ++e;
            } while (!(mant & 0x400u));
            f = sign | (static_cast<uint32_t>(112 - e) << 23) | ((mant & 0x3ffu) << 13);
        }
    } else if (exp == 31) {
        f = sign | 0x7f800000u | (mant << 13);
    } else {
        f = sign | ((exp + 112u) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(f);
}

Refinement Refinement::from_prediction(uint8_t patch_index, const SegPrediction& pred) {
    Refinement r;
    r.patch_index = patch_index;
    r.height = pred.height;
    r.width = pred.width;
    r.labels = pred.labels;
    r.probs = pred.probs;
    return r;
}

namespace {

constexpr uint32_t kMagic = 0x4d594b53u;  // "SKYM", little-endian

enum class Variant : uint8_t { TaskAssign = 0, Refinement = 1, StatShare = 2, FinalResult = 3 };

class Writer {
public:
    explicit Writer(std::vector<uint8_t>& out) : out_(out) {}

    void u8(uint8_t v) { out_.push_back(v); }
    void u16(uint16_t v) {
        out_.push_back(static_cast<uint8_t>(v));
        out_.push_back(static_cast<uint8_t>(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }

private:
    std::vector<uint8_t>& out_;
};

class Reader {
public:
    explicit Reader(std::span<const uint8_t> bytes) : bytes_(bytes) {}

    size_t remaining() const { return bytes_.size() - pos_; }

    uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        if (!std::isfinite(v)) throw FrameError("frame carries a non-finite value");
        return v;
    }

private:
    void need(size_t n) const {
        if (remaining() < n) throw FrameError("frame truncated");
    }

    std::span<const uint8_t> bytes_;
    size_t pos_ = 0;
};

uint32_t checked_u32(size_t v, const char* what) {
    if (v > 0xffffffffu) throw EncodeError(std::string(what) + " exceeds u32 range");
    return static_cast<uint32_t>(v);
}

void encode_grid(Writer& w, size_t height, size_t width, const std::vector<uint16_t>& labels,
                 const std::vector<float>& probs) {
    if (labels.size() != height * width || probs.size() != height * width) {
        throw EncodeError("grid payload does not match its dims");
    }
    w.u32(checked_u32(height, "grid height"));
    w.u32(checked_u32(width, "grid width"));
    for (uint16_t v : labels) w.u16(v);
    for (float v : probs) {
        if (!std::isfinite(v)) throw EncodeError("grid probability is not finite");
        w.f32(v);
    }
}

void decode_grid(Reader& r, size_t& height, size_t& width, std::vector<uint16_t>& labels,
                 std::vector<float>& probs) {
    height = r.u32();
    width = r.u32();
    size_t n = height * width;
    if (height == 0 || width == 0) throw FrameError("grid dims must be positive");
    if (r.remaining() != n * 6) throw FrameError("grid payload size mismatch");
    labels.resize(n);
    probs.resize(n);
    for (size_t i = 0; i < n; ++i) labels[i] = r.u16();
    for (size_t i = 0; i < n; ++i) probs[i] = r.f32();
}

}  // namespace

std::vector<uint8_t> encode(const Message& msg) {
    std::vector<uint8_t> payload;
    Writer w(payload);
    Variant variant;
    uint8_t pad = 0;

    if (const auto* task = std::get_if<TaskAssign>(&msg.body)) {
        variant = Variant::TaskAssign;
        w.u32(checked_u32(task->rects.size(), "rect count"));
        for (const GeoRect& r : task->rects) {
            if (r.x0 >= r.x1 || r.y0 >= r.y1) throw EncodeError("task rect is empty");
            w.u32(checked_u32(r.x0, "rect"));
            w.u32(checked_u32(r.y0, "rect"));
            w.u32(checked_u32(r.x1, "rect"));
            w.u32(checked_u32(r.y1, "rect"));
        }
    } else if (const auto* ref = std::get_if<Refinement>(&msg.body)) {
        variant = Variant::Refinement;
        pad = ref->patch_index;
        encode_grid(w, ref->height, ref->width, ref->labels, ref->probs);
    } else if (const auto* stats = std::get_if<StatShare>(&msg.body)) {
        variant = Variant::StatShare;
        if (stats->layers.empty()) throw EncodeError("stat share carries no layers");
        for (const NormStats& layer : stats->layers) {
            if (layer.channels() == 0) throw EncodeError("stat layer has no channels");
            w.u32(checked_u32(layer.channels(), "channel count"));
            for (float m : layer.mean) w.u16(f32_to_f16(m));
            for (float v : layer.var) w.u16(f32_to_f16(v));
        }
    } else {
        const auto& fin = std::get<FinalResult>(msg.body);
        variant = Variant::FinalResult;
        encode_grid(w, fin.height, fin.width, fin.labels, fin.probs);
    }

    std::vector<uint8_t> frame;
    frame.reserve(kHeaderSize + payload.size());
    Writer h(frame);
    h.u32(kMagic);
    h.u8(static_cast<uint8_t>(variant));
    h.u8(msg.sender);
    h.u8(msg.recipient);
    h.u32(msg.round);
    h.u32(checked_u32(payload.size(), "payload length"));
    h.u8(pad);
    frame.insert(frame.end(), payload.begin(), payload.end());
    return frame;
}

Message decode(std::span<const uint8_t> bytes) {
    Reader r(bytes);
    if (r.remaining() < kHeaderSize) throw FrameError("frame shorter than header");
    if (r.u32() != kMagic) throw FrameError("bad frame magic");
    uint8_t variant = r.u8();
    Message msg;
    msg.sender = r.u8();
    msg.recipient = r.u8();
    msg.round = r.u32();
    uint32_t payload_len = r.u32();
    uint8_t pad = r.u8();
    if (r.remaining() != payload_len) {
        throw FrameError("frame payload length mismatch: header says " + std::to_string(payload_len) +
                         ", got " + std::to_string(r.remaining()));
    }

    switch (static_cast<Variant>(variant)) {
        case Variant::TaskAssign: {
            TaskAssign task;
            uint32_t count = r.u32();
            if (r.remaining() != static_cast<size_t>(count) * 16) {
                throw FrameError("task assign payload size mismatch");
            }
            task.rects.reserve(count);
            for (uint32_t i = 0; i < count; ++i) {
                GeoRect rect{r.u32(), r.u32(), r.u32(), r.u32()};
                if (rect.x0 >= rect.x1 || rect.y0 >= rect.y1) throw FrameError("task rect is empty");
                task.rects.push_back(rect);
            }
            msg.body = std::move(task);
            break;
        }
        case Variant::Refinement: {
            Refinement ref;
            ref.patch_index = pad;
            decode_grid(r, ref.height, ref.width, ref.labels, ref.probs);
            msg.body = std::move(ref);
            break;
        }
        case Variant::StatShare: {
            StatShare stats;
            while (r.remaining() > 0) {
                uint32_t channels = r.u32();
                if (channels == 0 || r.remaining() < static_cast<size_t>(channels) * 4) {
                    throw FrameError("stat share layer size mismatch");
                }
                NormStats layer;
                layer.mean.resize(channels);
                layer.var.resize(channels);
                for (uint32_t i = 0; i < channels; ++i) layer.mean[i] = f16_to_f32(r.u16());
                for (uint32_t i = 0; i < channels; ++i) layer.var[i] = f16_to_f32(r.u16());
                for (float v : layer.mean) {
                    if (!std::isfinite(v)) throw FrameError("stat share carries non-finite mean");
                }
                for (float v : layer.var) {
                    if (!std::isfinite(v) || v < 0.0f) throw FrameError("stat share carries bad variance");
                }
                stats.layers.push_back(std::move(layer));
            }
            if (stats.layers.empty()) throw FrameError("stat share carries no layers");
            msg.body = std::move(stats);
            break;
        }
        case Variant::FinalResult: {
            FinalResult fin;
            decode_grid(r, fin.height, fin.width, fin.labels, fin.probs);
            msg.body = std::move(fin);
            break;
        }
        default:
            throw FrameError("unknown frame variant " + std::to_string(variant));
    }
    return msg;
}

uint64_t payload_size(const Message& msg) {
    if (const auto* task = std::get_if<TaskAssign>(&msg.body)) {
        return 4 + 16ull * task->rects.size();
    }
    if (const auto* ref = std::get_if<Refinement>(&msg.body)) {
        return 8 + 6ull * ref->height * ref->width;
    }
    if (const auto* stats = std::get_if<StatShare>(&msg.body)) {
        uint64_t n = 0;
        for (const NormStats& layer : stats->layers) n += 4 + 4ull * layer.channels();
        return n;
    }
    const auto& fin = std::get<FinalResult>(msg.body);
    return 8 + 6ull * fin.height * fin.width;
}

uint64_t volume_size(const Message& msg) {
    if (const auto* task = std::get_if<TaskAssign>(&msg.body)) {
        return 16ull * task->rects.size();
    }
    if (const auto* ref = std::get_if<Refinement>(&msg.body)) {
        return 6ull * ref->height * ref->width;
    }
    if (const auto* stats = std::get_if<StatShare>(&msg.body)) {
        return 4ull * total_channels(stats->layers);
    }
    const auto& fin = std::get<FinalResult>(msg.body);
    return 6ull * fin.height * fin.width;
}

uint64_t framing_size(const Message& msg) { return payload_size(msg) - volume_size(msg); }

uint64_t fnv1a(std::span<const uint8_t> bytes) {
    uint64_t h = 1469598103934665603ull;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

std::string log_line(const Message& msg, std::span<const uint8_t> encoded) {
    static constexpr const char* kNames[] = {"task_assign", "refinement", "stat_share", "final_result"};
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "round=%u variant=%s sender=%u recipient=%u bytes=%zu digest=%016llx",
                  msg.round, kNames[msg.body.index()], msg.sender, msg.recipient, encoded.size(),
                  static_cast<unsigned long long>(fnv1a(encoded)));
    return buf;
}

}  // namespace wire

}  // namespace skyseg
