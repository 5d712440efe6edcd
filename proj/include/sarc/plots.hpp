#pragma once

#include <string>
#include <vector>

#include "sarc/metrics.hpp"
#include "sarc/trainer.hpp"

namespace sarc {

// Static PNG charts drawn with basic primitives — batch artifacts, not a UI.

// Predicted (clamped) score vs expert label with the identity diagonal.
void plot_scatter(const std::string& path, const EvalReport& report);

// Count per half-step label bin.
void plot_label_histogram(const std::string& path, const std::vector<double>& labels);

// Train loss and validation metric per epoch; the selected epoch is marked.
void plot_training_curves(const std::string& path, const TrainHistory& history);

}  // namespace sarc
