#pragma once

#include <string>
#include <vector>

#include "sp4d/appearance.hpp"
#include "sp4d/dataset.hpp"
#include "sp4d/losses.hpp"
#include "sp4d/trainer.hpp"

// Flat typed key-value configuration with sections mirroring the module
// names ([dataset], [output], [train], [loss], [appearance], [synthetic]).
// Unknown keys are rejected; the resolved config echoes every key so a run
// can be reproduced from its output directory.

namespace sp4d {

struct Config {
    std::string dataset_path;
    std::string out_dir = "out";
    TrainConfig train;
    LossWeights loss;
    AppearanceConfig appearance;
    SyntheticSpec synthetic;
};

// Parses the TOML-style flat file ([section] headers, key = value lines).
Config load_config(const std::string& path);

// Applies "section.key=value" overrides in order.
void apply_overrides(Config& cfg, const std::vector<std::string>& sets);

// Full round-trippable dump of every key.
std::string serialize_config(const Config& cfg);

}  // namespace sp4d
