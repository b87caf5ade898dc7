#include "mldepth/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mldepth {

double image_to_world(double image_coord, double center, double focal, double z) {
  return (image_coord - center) / focal * z;
}

bool surface_hit(const Surface& s, const Camera& cam, double u, double v) {
  if (s.kind == Surface::Kind::FullPlane) return true;
  const double wx = image_to_world(u, cam.cx, cam.focal, s.z);
  const double wy = image_to_world(v, cam.cy, cam.focal, s.z);
  return wx >= s.x0 && wx < s.x1 && wy >= s.y0 && wy < s.y1;
}

namespace {

void check_scene(const Scene& scene) {
  if (scene.camera.width <= 0 || scene.camera.height <= 0 || scene.camera.focal <= 0.0) {
    throw std::invalid_argument("camera must have positive size and focal length");
  }
  for (const auto& s : scene.surfaces) {
    if (s.z <= 0.0) throw std::invalid_argument("surface depths must be positive");
    if (s.kind == Surface::Kind::Rect && (s.x1 <= s.x0 || s.y1 <= s.y0)) {
      throw std::invalid_argument("rectangle extents must be nonempty");
    }
  }
}

// Indices of visible surfaces along the ray through (u, v), nearest first,
// truncated at (and including) the first opaque hit; coincident z collapse.
std::vector<std::size_t> visible_surfaces(const Scene& scene, double u, double v) {
  std::vector<std::size_t> hits;
  for (std::size_t i = 0; i < scene.surfaces.size(); ++i) {
    if (surface_hit(scene.surfaces[i], scene.camera, u, v)) hits.push_back(i);
  }
  std::sort(hits.begin(), hits.end(), [&](std::size_t a, std::size_t b) {
    return scene.surfaces[a].z < scene.surfaces[b].z ||
           (scene.surfaces[a].z == scene.surfaces[b].z && a < b);
  });
  std::vector<std::size_t> out;
  for (std::size_t i : hits) {
    if (!out.empty() && scene.surfaces[out.back()].z == scene.surfaces[i].z) continue;
    out.push_back(i);
    if (scene.surfaces[i].opaque) break;
  }
  return out;
}

}  // namespace

MultiLayerDepthMap raycast_multilayer(const Scene& scene) {
  check_scene(scene);
  MultiLayerDepthMap map(scene.camera.height, scene.camera.width, DepthUnits::Raw);
  for (int y = 0; y < scene.camera.height; ++y) {
    for (int x = 0; x < scene.camera.width; ++x) {
      const double u = x + 0.5;
      const double v = y + 0.5;
      std::vector<double> depths;
      for (std::size_t i : visible_surfaces(scene, u, v)) {
        depths.push_back(scene.surfaces[i].z);
      }
      map.set_layers(x, y, std::move(depths));
    }
  }
  return map;
}

namespace {

bool image_rects_disjoint(double ax0, double ax1, double ay0, double ay1, double bx0,
                          double bx1, double by0, double by1) {
  return ax1 <= bx0 || bx1 <= ax0 || ay1 <= by0 || by1 <= ay0;
}

}  // namespace

Scene scene_overlapping_planes(const OverlappingPlanesParams& p) {
  std::vector<double> depths = {p.z_front, p.z_rear, p.z_background};
  if (p.with_aux_planes) {
    depths.push_back(p.z_aux1);
    depths.push_back(p.z_aux2);
  }
  for (std::size_t i = 0; i < depths.size(); ++i) {
    for (std::size_t j = i + 1; j < depths.size(); ++j) {
      if (depths[i] == depths[j]) {
        throw std::invalid_argument("overlapping-planes depths must be distinct");
      }
    }
  }
  const double ox0 = std::max(p.front_x0, p.rear_x0);
  const double ox1 = std::min(p.front_x1, p.rear_x1);
  const double oy0 = std::max(p.front_y0, p.rear_y0);
  const double oy1 = std::min(p.front_y1, p.rear_y1);
  if (ox1 <= ox0 || oy1 <= oy0) {
    throw std::invalid_argument("overlapping-planes rectangles must overlap in image space");
  }
  if (p.with_aux_planes) {
    // aux rectangles keep the layer-count regions at {1, 2, 3}
    const bool ok =
        image_rects_disjoint(p.aux1_x0, p.aux1_x1, p.aux1_y0, p.aux1_y1, p.front_x0,
                             p.front_x1, p.front_y0, p.front_y1) &&
        image_rects_disjoint(p.aux1_x0, p.aux1_x1, p.aux1_y0, p.aux1_y1, p.rear_x0, p.rear_x1,
                             p.rear_y0, p.rear_y1) &&
        image_rects_disjoint(p.aux2_x0, p.aux2_x1, p.aux2_y0, p.aux2_y1, p.front_x0,
                             p.front_x1, p.front_y0, p.front_y1) &&
        image_rects_disjoint(p.aux2_x0, p.aux2_x1, p.aux2_y0, p.aux2_y1, p.rear_x0, p.rear_x1,
                             p.rear_y0, p.rear_y1) &&
        image_rects_disjoint(p.aux1_x0, p.aux1_x1, p.aux1_y0, p.aux1_y1, p.aux2_x0, p.aux2_x1,
                             p.aux2_y0, p.aux2_y1);
    if (!ok) {
      throw std::invalid_argument("auxiliary rectangles must not overlap other surfaces");
    }
  }

  std::mt19937_64 rng(p.feature_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  int next_axis = 0;
  auto random_feature = [&]() {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(p.feature_dim);
    if (p.orthogonal_features) {
      if (next_axis >= p.feature_dim) {
        throw std::invalid_argument("feature_dim too small for one axis per surface");
      }
      f(next_axis++) = p.feature_scale;
    } else {
      for (int i = 0; i < p.feature_dim; ++i) {
        f(i) = gauss(rng) * p.feature_scale / std::sqrt(static_cast<double>(p.feature_dim));
      }
    }
    return f;
  };

  auto rect_world = [&](double ix0, double ix1, double iy0, double iy1, double z) {
    Surface s;
    s.kind = Surface::Kind::Rect;
    s.z = z;
    s.x0 = image_to_world(ix0, p.camera.cx, p.camera.focal, z);
    s.x1 = image_to_world(ix1, p.camera.cx, p.camera.focal, z);
    s.y0 = image_to_world(iy0, p.camera.cy, p.camera.focal, z);
    s.y1 = image_to_world(iy1, p.camera.cy, p.camera.focal, z);
    return s;
  };

  Scene scene;
  scene.camera = p.camera;

  Surface front = rect_world(p.front_x0, p.front_x1, p.front_y0, p.front_y1, p.z_front);
  front.opaque = false;
  front.feature = random_feature();
  front.id = "front";

  Surface rear = rect_world(p.rear_x0, p.rear_x1, p.rear_y0, p.rear_y1, p.z_rear);
  rear.opaque = false;
  rear.feature = random_feature();
  rear.id = "rear";

  scene.surfaces = {front, rear};

  if (p.with_aux_planes) {
    Surface aux1 = rect_world(p.aux1_x0, p.aux1_x1, p.aux1_y0, p.aux1_y1, p.z_aux1);
    aux1.feature = random_feature();
    aux1.id = "aux1";
    Surface aux2 = rect_world(p.aux2_x0, p.aux2_x1, p.aux2_y0, p.aux2_y1, p.z_aux2);
    aux2.feature = random_feature();
    aux2.id = "aux2";
    scene.surfaces.push_back(aux1);
    scene.surfaces.push_back(aux2);
  }

  Surface background;
  background.kind = Surface::Kind::FullPlane;
  background.z = p.z_background;
  background.opaque = true;
  background.feature = random_feature();
  background.id = "background";
  scene.surfaces.push_back(background);

  check_scene(scene);
  return scene;
}

FeatureImage render_features(const Scene& scene, double noise_sigma, std::uint64_t seed) {
  check_scene(scene);
  int dim = 0;
  for (const auto& s : scene.surfaces) {
    if (s.feature.size() == 0) {
      throw std::invalid_argument("every surface needs a feature vector to render features");
    }
    if (dim == 0) dim = static_cast<int>(s.feature.size());
    if (static_cast<int>(s.feature.size()) != dim) {
      throw std::invalid_argument("surface feature dimensions differ");
    }
  }
  if (dim == 0) throw std::invalid_argument("scene has no surfaces");

  FeatureImage img = make_feature_image(scene.camera.height, scene.camera.width, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int y = 0; y < scene.camera.height; ++y) {
    for (int x = 0; x < scene.camera.width; ++x) {
      const double u = x + 0.5;
      const double v = y + 0.5;
      const Eigen::Index row = static_cast<Eigen::Index>(y) * scene.camera.width + x;
      for (std::size_t i : visible_surfaces(scene, u, v)) {
        img.values.row(row) += scene.surfaces[i].feature.transpose();
      }
      if (noise_sigma > 0.0) {
        for (int f = 0; f < dim; ++f) img.values(row, f) += noise_sigma * gauss(rng);
      }
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Scene description files.
// ---------------------------------------------------------------------------

void write_scene(const std::string& path, const Scene& scene) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.precision(17);
  out << "[camera]\n";
  out << "width = " << scene.camera.width << "\n";
  out << "height = " << scene.camera.height << "\n";
  out << "focal = " << scene.camera.focal << "\n";
  out << "cx = " << scene.camera.cx << "\n";
  out << "cy = " << scene.camera.cy << "\n";
  for (const auto& s : scene.surfaces) {
    out << "\n[surface]\n";
    out << "kind = " << (s.kind == Surface::Kind::Rect ? "rect" : "plane") << "\n";
    if (!s.id.empty()) out << "id = " << s.id << "\n";
    out << "z = " << s.z << "\n";
    if (s.kind == Surface::Kind::Rect) {
      out << "x0 = " << s.x0 << "\n";
      out << "x1 = " << s.x1 << "\n";
      out << "y0 = " << s.y0 << "\n";
      out << "y1 = " << s.y1 << "\n";
    }
    out << "opaque = " << (s.opaque ? "true" : "false") << "\n";
    if (s.feature.size() > 0) {
      out << "feature = ";
      for (Eigen::Index i = 0; i < s.feature.size(); ++i) {
        if (i) out << ", ";
        out << s.feature(i);
      }
      out << "\n";
    }
  }
}

Scene read_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Scene scene;
  std::string section;
  Surface* current = nullptr;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed section");
      }
      section = line.substr(1, line.size() - 2);
      if (section == "surface") {
        scene.surfaces.emplace_back();
        current = &scene.surfaces.back();
      } else if (section != "camera") {
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown section [" +
                                 section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (section == "camera") {
        if (key == "width") scene.camera.width = std::stoi(value);
        else if (key == "height") scene.camera.height = std::stoi(value);
        else if (key == "focal") scene.camera.focal = std::stod(value);
        else if (key == "cx") scene.camera.cx = std::stod(value);
        else if (key == "cy") scene.camera.cy = std::stod(value);
        else throw std::runtime_error("unknown camera key " + key);
      } else if (section == "surface" && current) {
        if (key == "kind") {
          if (value == "rect") current->kind = Surface::Kind::Rect;
          else if (value == "plane") current->kind = Surface::Kind::FullPlane;
          else throw std::runtime_error("unknown surface kind " + value);
        } else if (key == "id") current->id = value;
        else if (key == "z") current->z = std::stod(value);
        else if (key == "x0") current->x0 = std::stod(value);
        else if (key == "x1") current->x1 = std::stod(value);
        else if (key == "y0") current->y0 = std::stod(value);
        else if (key == "y1") current->y1 = std::stod(value);
        else if (key == "opaque") current->opaque = (value == "true" || value == "1");
        else if (key == "feature") {
          std::vector<double> vals;
          std::stringstream ss(value);
          std::string tok;
          while (std::getline(ss, tok, ',')) vals.push_back(std::stod(trim(tok)));
          current->feature = Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
        } else throw std::runtime_error("unknown surface key " + key);
      } else {
        throw std::runtime_error("key outside of a section");
      }
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad value for " + key);
    }
  }
  check_scene(scene);
  return scene;
}

}  // namespace mldepth
