#pragma once

#include <filesystem>
#include <string>

#include "vecmap/geometry.hpp"
#include "vecmap/scene.hpp"

namespace vecmap::io {

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

// Vector map document: frame spec, per-class polyline arrays of normalized
// [x, y] pairs, optional aligned scores.
std::string vector_map_to_json(const VectorMap& map, const MapFrame& frame);
VectorMap vector_map_from_json(const std::string& text, MapFrame* frame_out = nullptr);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

// Binary PGM, maxval 255; file row 0 is the max-x edge of the frame.
// Values map linearly from [lo, hi] onto [0, 255], clamped.
void write_pgm(const RasterGrid& grid, const std::filesystem::path& path, double lo = 0.0,
               double hi = 1.0);

// Reads a P5 graymap back as raw 0..255 values in file row order.
Eigen::MatrixXd read_pgm(const std::filesystem::path& path);

// Raw CSV of reals, one line per grid row (row 0 = min-x edge).
void write_csv(const RasterGrid& grid, const std::filesystem::path& path);
RasterGrid read_csv(const std::filesystem::path& path);

// Channel-major flattened observation: kObsChannels * grid_h lines of grid_w
// values, preceded by a single header line "h,w,noise_sigma".
void write_observation_csv(const ObservationGrid& obs, const std::filesystem::path& path);
ObservationGrid read_observation_csv(const std::filesystem::path& path);

}  // namespace vecmap::io
