#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "vecmap/geometry.hpp"

namespace vecmap {

enum class Difficulty : int { easy = 0, medium = 1, hard = 2 };

const char* difficulty_name(Difficulty d);
std::optional<Difficulty> difficulty_from_name(const std::string& name);

struct Scene {
  VectorMap gt;           // no scores
  RasterGrid occupancy;   // binary, occluder cells = 1
  RasterGrid drivable;    // binary road surface
  std::pair<int, int> ego_cell{0, 0};
  std::uint64_t seed = 0;
  Difficulty difficulty = Difficulty::medium;
  MapFrame frame;
};

struct GeneratorOptions {
  int n_p = 10;
  int max_elements = 12;
  int max_attempts = 64;
  // Test hook: force an exact occluder count regardless of difficulty.
  std::optional<int> occluder_count;
};

// Deterministic procedural scene: 1-3 road corridors with boundaries,
// dividers and pedestrian crossings, plus rectangular occluders.
Scene generate_scene(std::uint64_t seed, Difficulty difficulty, const MapFrame& frame = {},
                     const GeneratorOptions& options = {});

inline constexpr int kObsChannels = 4;  // divider, boundary, ped evidence, occluders

// Occlusion-corrupted sensor evidence standing in for a camera pipeline.
// channels is kObsChannels x (grid_h * grid_w), cell index r * grid_w + c.
struct ObservationGrid {
  Eigen::MatrixXd channels;
  int grid_h = 0;
  int grid_w = 0;
  double noise_sigma = 0.0;

  double& at(int ch, int r, int c) { return channels(ch, r * grid_w + c); }
  double at(int ch, int r, int c) const { return channels(ch, r * grid_w + c); }
  RasterGrid channel_grid(int ch) const;
};

struct ObserveOptions {
  double noise_sigma = 0.05;
  int evidence_kernel_size = 3;
  double evidence_sigma = 0.8;
  bool include_occluder_channel = true;  // evidence-only ablation when false
};

ObservationGrid observe(const Scene& scene, std::uint64_t noise_seed,
                        const ObserveOptions& options = {});

}  // namespace vecmap
