#pragma once

#include <string>

#include "sstage/model.hpp"

namespace sstage {

// Static plot of one scene's prediction: per agent, the observed trajectory
// as a solid polyline and each mode as a dashed polyline whose opacity is
// the mode's probability. Exactly K * (1 + M) polylines.
std::string render_prediction_svg(const PredictionSet& pred, const Scene& scene, int width = 640, int height = 480);

void write_prediction_svg(const std::string& path, const PredictionSet& pred, const Scene& scene);

}  // namespace sstage
