#include "vecmap/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace vecmap::io {

using nlohmann::json;

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for write: " + path.string());
  out << content;
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

json frame_to_json(const MapFrame& f) {
  return json{{"x_min", f.x_min}, {"x_max", f.x_max}, {"y_min", f.y_min},
              {"y_max", f.y_max}, {"grid_h", f.grid_h}, {"grid_w", f.grid_w},
              {"cell_size", f.cell_size}};
}

MapFrame frame_from_json(const json& j) {
  MapFrame f;
  f.x_min = j.at("x_min");
  f.x_max = j.at("x_max");
  f.y_min = j.at("y_min");
  f.y_max = j.at("y_max");
  f.grid_h = j.at("grid_h");
  f.grid_w = j.at("grid_w");
  f.cell_size = j.at("cell_size");
  return f;
}

json map_to_json_obj(const VectorMap& map) {
  json classes = json::object();
  for (int ci = 0; ci < kNumClasses; ++ci) {
    const auto cls = static_cast<MapClass>(ci);
    json polylines = json::array();
    json scores = json::array();
    for (int e = 0; e < map.size(); ++e) {
      const auto& el = map.elements[static_cast<std::size_t>(e)];
      if (el.cls != cls) continue;
      json pts = json::array();
      for (int i = 0; i < el.size(); ++i)
        pts.push_back(json::array({el.points(i, 0), el.points(i, 1)}));
      polylines.push_back(std::move(pts));
      if (map.has_scores()) scores.push_back((*map.scores)[static_cast<std::size_t>(e)]);
    }
    json entry{{"polylines", std::move(polylines)}};
    if (map.has_scores()) entry["scores"] = std::move(scores);
    classes[class_name(cls)] = std::move(entry);
  }
  return classes;
}

VectorMap map_from_json_obj(const json& classes) {
  VectorMap map;
  bool any_scores = false;
  for (int ci = 0; ci < kNumClasses; ++ci)
    if (classes.at(class_name(static_cast<MapClass>(ci))).contains("scores"))
      any_scores = true;
  if (any_scores) map.scores.emplace();
  for (int ci = 0; ci < kNumClasses; ++ci) {
    const auto cls = static_cast<MapClass>(ci);
    const json& entry = classes.at(class_name(cls));
    const json& polylines = entry.at("polylines");
    for (std::size_t e = 0; e < polylines.size(); ++e) {
      const json& pts = polylines[e];
      Polyline p;
      p.cls = cls;
      p.points.resize(static_cast<int>(pts.size()), 2);
      for (std::size_t i = 0; i < pts.size(); ++i) {
        p.points(static_cast<int>(i), 0) = pts[i][0];
        p.points(static_cast<int>(i), 1) = pts[i][1];
      }
      map.elements.push_back(std::move(p));
      if (any_scores) map.scores->push_back(entry.at("scores")[e]);
    }
  }
  return map;
}

json grid_to_json(const RasterGrid& g) {
  json rows = json::array();
  for (int r = 0; r < g.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < g.cols(); ++c) row.push_back(static_cast<int>(g(r, c) > 0.5));
    rows.push_back(std::move(row));
  }
  return rows;
}

RasterGrid grid_from_json(const json& rows) {
  const int h = static_cast<int>(rows.size());
  const int w = h > 0 ? static_cast<int>(rows[0].size()) : 0;
  RasterGrid g(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) g(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<int>();
  return g;
}

}  // namespace

std::string vector_map_to_json(const VectorMap& map, const MapFrame& frame) {
  json j{{"frame", frame_to_json(frame)}, {"classes", map_to_json_obj(map)}};
  return j.dump(1);
}

VectorMap vector_map_from_json(const std::string& text, MapFrame* frame_out) {
  const json j = json::parse(text);
  if (frame_out) *frame_out = frame_from_json(j.at("frame"));
  return map_from_json_obj(j.at("classes"));
}

std::string scene_to_json(const Scene& scene) {
  json j{{"seed", scene.seed},
         {"difficulty", difficulty_name(scene.difficulty)},
         {"frame", frame_to_json(scene.frame)},
         {"ego_cell", json::array({scene.ego_cell.first, scene.ego_cell.second})},
         {"gt", map_to_json_obj(scene.gt)},
         {"occupancy", grid_to_json(scene.occupancy)},
         {"drivable", grid_to_json(scene.drivable)}};
  return j.dump(1);
}

Scene scene_from_json(const std::string& text) {
  const json j = json::parse(text);
  Scene s;
  s.seed = j.at("seed");
  const auto diff = difficulty_from_name(j.at("difficulty"));
  if (!diff) throw Error("unknown difficulty in scene file");
  s.difficulty = *diff;
  s.frame = frame_from_json(j.at("frame"));
  s.ego_cell = {j.at("ego_cell")[0], j.at("ego_cell")[1]};
  s.gt = map_from_json_obj(j.at("gt"));
  s.occupancy = grid_from_json(j.at("occupancy"));
  s.drivable = grid_from_json(j.at("drivable"));
  return s;
}

void write_pgm(const RasterGrid& grid, const std::filesystem::path& path, double lo,
               double hi) {
  const int h = static_cast<int>(grid.rows());
  const int w = static_cast<int>(grid.cols());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for write: " + path.string());
  out << "P5\n" << w << " " << h << "\n255\n";
  const double span = hi > lo ? hi - lo : 1.0;
  for (int r = h - 1; r >= 0; --r) {  // file row 0 = max-x edge
    for (int c = 0; c < w; ++c) {
      const double t = std::clamp((grid(r, c) - lo) / span, 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0))));
    }
  }
  if (!out) throw Error("write failed: " + path.string());
}

Eigen::MatrixXd read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path.string());
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 255) throw Error("unsupported pgm: " + path.string());
  in.get();  // single whitespace after the header
  Eigen::MatrixXd m(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), w);
    for (int c = 0; c < w; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  if (!in) throw Error("truncated pgm: " + path.string());
  return m;
}

namespace {

void append_row(std::string& buf, const double* vals, int n, int stride) {
  char tmp[40];
  for (int i = 0; i < n; ++i) {
    std::snprintf(tmp, sizeof(tmp), "%.17g", vals[static_cast<std::ptrdiff_t>(i) * stride]);
    buf += tmp;
    buf += (i + 1 < n) ? ',' : '\n';
  }
}

std::vector<double> parse_row(const std::string& line) {
  std::vector<double> vals;
  std::size_t pos = 0;
  while (pos < line.size()) {
    std::size_t used = 0;
    vals.push_back(std::stod(line.substr(pos), &used));
    pos += used;
    if (pos < line.size() && line[pos] == ',') ++pos;
  }
  return vals;
}

}  // namespace

void write_csv(const RasterGrid& grid, const std::filesystem::path& path) {
  std::string buf;
  buf.reserve(static_cast<std::size_t>(grid.size()) * 12);
  for (int r = 0; r < grid.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(grid.cols()));
    for (int c = 0; c < grid.cols(); ++c) row[static_cast<std::size_t>(c)] = grid(r, c);
    append_row(buf, row.data(), static_cast<int>(grid.cols()), 1);
  }
  write_text_file(path, buf);
}

RasterGrid read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(parse_row(line));
  }
  if (rows.empty()) throw Error("empty csv: " + path.string());
  RasterGrid g(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != static_cast<std::size_t>(g.cols()))
      throw Error("ragged csv: " + path.string());
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      g(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  }
  return g;
}

void write_observation_csv(const ObservationGrid& obs, const std::filesystem::path& path) {
  std::string buf;
  char tmp[96];
  std::snprintf(tmp, sizeof(tmp), "%d,%d,%.17g\n", obs.grid_h, obs.grid_w, obs.noise_sigma);
  buf += tmp;
  for (int ch = 0; ch < kObsChannels; ++ch) {
    for (int r = 0; r < obs.grid_h; ++r) {
      std::vector<double> row(static_cast<std::size_t>(obs.grid_w));
      for (int c = 0; c < obs.grid_w; ++c) row[static_cast<std::size_t>(c)] = obs.at(ch, r, c);
      append_row(buf, row.data(), obs.grid_w, 1);
    }
  }
  write_text_file(path, buf);
}

ObservationGrid read_observation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("empty observation file: " + path.string());
  const auto header = parse_row(line);
  if (header.size() != 3) throw Error("bad observation header: " + path.string());
  ObservationGrid obs;
  obs.grid_h = static_cast<int>(header[0]);
  obs.grid_w = static_cast<int>(header[1]);
  obs.noise_sigma = header[2];
  obs.channels.resize(kObsChannels, obs.grid_h * obs.grid_w);
  for (int ch = 0; ch < kObsChannels; ++ch) {
    for (int r = 0; r < obs.grid_h; ++r) {
      if (!std::getline(in, line)) throw Error("truncated observation file: " + path.string());
      const auto vals = parse_row(line);
      if (vals.size() != static_cast<std::size_t>(obs.grid_w))
        throw Error("ragged observation file: " + path.string());
      for (int c = 0; c < obs.grid_w; ++c) obs.channels(ch, r * obs.grid_w + c) = vals[static_cast<std::size_t>(c)];
    }
  }
  return obs;
}

}  // namespace vecmap::io
