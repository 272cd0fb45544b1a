#pragma once

#include <string>

#include "stsens/model.hpp"
#include "stsens/panel.hpp"

namespace stsens {

// Everything needed to run a trained model later: weights, configuration,
// the scaler, and the feature layout the model was trained against.
struct Checkpoint {
    ModelConfig config;
    ParamSet params;
    ScalerState scaler;
    std::vector<std::string> static_names, observed_names, known_names, target_names;
};

// Versioned binary container; parameters are stored as named little-endian
// 64-bit float arrays in registration order. Round trips are bit exact.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stsens
