#pragma once

#include <utility>
#include <vector>

#include "skyseg/backends.hpp"
#include "skyseg/world.hpp"

namespace skyseg {

using Refinements = std::vector<std::pair<GeoRect, SegPrediction>>;

// Copies each refinement's labels and probabilities over the coarse
// prediction inside its rect. Overlaps resolve last-writer-wins.
SegPrediction replacement_fusion(const SegPrediction& coarse, const Refinements& refinements);

// Per pixel inside each rect, keeps whichever side reports the strictly
// higher winning-class probability; ties keep the coarse result.
SegPrediction probability_fusion(const SegPrediction& coarse, const Refinements& refinements);

}  // namespace skyseg
