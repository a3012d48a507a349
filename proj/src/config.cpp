#include "lfvit/config.hpp"

namespace lfvit {

const char* focus_mode_name(FocusMode m) {
    return m == FocusMode::full_sequence ? "full_sequence" : "compact_sequence";
}

FocusMode focus_mode_from_name(const std::string& name) {
    if (name == "full_sequence") return FocusMode::full_sequence;
    if (name == "compact_sequence") return FocusMode::compact_sequence;
    throw ConfigError("unknown focus mode '" + name +
                      "' (expected full_sequence or compact_sequence)");
}

void ModelConfig::validate() const {
    if (depth < 1) throw ConfigError("depth must be >= 1");
    if (dim < 1 || heads < 1) throw ConfigError("dim and heads must be >= 1");
    if (dim % heads != 0) {
        throw ConfigError("dim " + std::to_string(dim) + " not divisible by heads " +
                          std::to_string(heads));
    }
    if (patch < 1) throw ConfigError("patch must be >= 1");
    if (image_side < 1 || image_side % (2 * patch) != 0) {
        throw ConfigError("image_side " + std::to_string(image_side) +
                          " must be divisible by 2*patch = " + std::to_string(2 * patch));
    }
    if (classes < 1) throw ConfigError("classes must be >= 1");
    if (region_m < 1 || region_m > coarse_grid()) {
        throw ConfigError("region_m " + std::to_string(region_m) +
                          " must lie in [1, " + std::to_string(coarse_grid()) +
                          "] for the localization grid");
    }
    if (eta < 0.0 || eta > 1.0) throw ConfigError("eta must lie in [0,1]");
    if (alpha <= 0.0 || alpha > 1.0) throw ConfigError("alpha must lie in (0,1]");
    if (beta < 0.0 || beta >= 1.0) throw ConfigError("beta must lie in [0,1)");
    if (eps <= 0.0) throw ConfigError("eps must be positive");
}

ModelConfig ModelConfig::deit_small() {
    ModelConfig cfg;
    cfg.depth = 12;
    cfg.dim = 384;
    cfg.heads = 6;
    cfg.patch = 16;
    cfg.image_side = 224;
    cfg.classes = 1000;
    return cfg;
}

}  // namespace lfvit
