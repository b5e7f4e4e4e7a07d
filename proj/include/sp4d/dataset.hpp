#pragma once

#include <string>
#include <vector>

#include "sp4d/camera.hpp"
#include "sp4d/gaussian.hpp"
#include "sp4d/image.hpp"
#include "sp4d/losses.hpp"

// Dataset ingestion and synthetic dynamic-scene generation.
//
// On-disk layout (shared intrinsics, frame index starting at 000000):
//   images/%06d.png     8-bit RGB
//   depth/%06d.pfm      float meters (preferred)  -- or --
//   depth/%06d.png      16-bit millimeters
//   masks/%06d.png      nonzero = tool, excluded from losses (optional)
//   poses.txt           per frame: 12 world-to-camera [R|t] values row-major,
//                       then fx fy cx cy
//   times.txt           one timestamp per frame, strictly increasing
// Depth value 0 encodes invalid everywhere.

namespace sp4d {

struct Frame {
    Image<float> rgb;         // [0,1]
    Image<float> depth;       // meters, 0 = invalid; empty when absent
    Image<uint8_t> tool_mask; // nonzero = tool; empty when absent
    Camera camera;            // camera.time carries the normalized timestamp
};

struct SceneDataset {
    std::vector<Frame> frames;
    Vec3 bbox_min{-1, -1, -1};
    Vec3 bbox_max{1, 1, 1};

    double extent() const { return (bbox_max - bbox_min).norm(); }
};

enum class Split { kTrain, kVal, kAll };

// Deterministic split: with ratio r, frame indices congruent to r mod (r+1)
// are validation. Timestamps are normalized to [0,1] over the full range
// before splitting.
SceneDataset load_dataset(const std::string& path, Split split, int split_ratio = 7);

// Writes the documented layout plus nothing else; PNG color is quantized.
void write_dataset(const SceneDataset& dataset, const std::string& dir);

FrameTargets targets_from_frame(const Frame& frame);

struct SyntheticSpec {
    int gaussians = 200;            // rounded to blobs of 10 knots when dynamic
    std::string motion = "oscillating"; // static | oscillating | shearing
    int width = 64, height = 64;
    int frames = 20;
    uint64_t seed = 1;
};

struct SyntheticScene {
    SceneDataset dataset; // float renders of the ground-truth cloud
    GaussianCloud cloud;  // the ground truth
};

// Builds a ground-truth cloud and renders it into a dataset (self-consistent
// by construction). Depth maps carry the alpha-masked expected depth.
SyntheticScene make_synthetic(const SyntheticSpec& spec);

}  // namespace sp4d
