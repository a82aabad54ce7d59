#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "skyseg/backends.hpp"
#include "skyseg/tta.hpp"
#include "skyseg/world.hpp"

namespace skyseg {

// Parametric link model; deterministic in its seed.
struct NetworkModel {
    double bandwidth_bytes_per_s = 10e6;
    double rtt_s = 0.01;
    double loss_rate = 0.0;
    uint64_t seed = 0;
};

// One-way latency for a payload of the given size.
double transmission_time(uint64_t bytes, const NetworkModel& net);

// Stateless per-message loss draw so delivery does not depend on simulation
// order.
bool message_lost(const NetworkModel& net, uint32_t round, uint8_t sender, uint8_t recipient,
                  uint32_t sequence);

namespace wire {

// IEEE binary16 conversions, round-to-nearest-even; values beyond the half
// range saturate to +/-65504 so no infinity reaches the wire.
uint16_t f32_to_f16(float value);
float f16_to_f32(uint16_t half);

struct TaskAssign {
    std::vector<GeoRect> rects;
};

struct Refinement {
    uint8_t patch_index = 0;
    size_t height = 0;
    size_t width = 0;
    std::vector<uint16_t> labels;
    std::vector<float> probs;

    static Refinement from_prediction(uint8_t patch_index, const SegPrediction& pred);
};

struct StatShare {
    StatsSet layers;
};

struct FinalResult {
    size_t height = 0;
    size_t width = 0;
    std::vector<uint16_t> labels;
    std::vector<float> probs;
};

struct Message {
    uint8_t sender = 0;
    uint8_t recipient = 0;
    uint32_t round = 0;
    std::variant<TaskAssign, Refinement, StatShare, FinalResult> body;
};

constexpr size_t kHeaderSize = 16;

std::vector<uint8_t> encode(const Message& msg);
Message decode(std::span<const uint8_t> bytes);

// Total payload bytes the frame carries after the 16-byte header.
uint64_t payload_size(const Message& msg);

// The data-volume accounting the reports use: label+probability grids cost
// 6 bytes per pixel, statistics 4 bytes per channel. Dimension words and
// per-layer channel counts are framing, reported separately.
uint64_t volume_size(const Message& msg);
uint64_t framing_size(const Message& msg);

// Newline-free replay record with an FNV-1a payload digest.
std::string log_line(const Message& msg, std::span<const uint8_t> encoded);

uint64_t fnv1a(std::span<const uint8_t> bytes);

}  // namespace wire

}  // namespace skyseg
