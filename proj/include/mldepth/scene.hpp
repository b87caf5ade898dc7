#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mldepth/decomposition.hpp"
#include "mldepth/multilayer.hpp"

namespace mldepth {

// Pinhole camera; pixel (ix, iy) casts a ray through (ix + 0.5, iy + 0.5).
struct Camera {
  int width = 64;
  int height = 64;
  double focal = 64.0;  // pixels
  double cx = 32.0;
  double cy = 32.0;
};

// Fronto-parallel surface at constant z. Rectangles are axis-aligned in
// world coordinates with half-open extents [x0, x1) x [y0, y1).
struct Surface {
  enum class Kind : std::uint8_t { FullPlane = 0, Rect = 1 };
  Kind kind = Kind::FullPlane;
  double z = 1.0;
  double x0 = 0.0, x1 = 0.0, y0 = 0.0, y1 = 0.0;
  bool opaque = false;
  Eigen::VectorXd feature;  // per-surface appearance vector (may be empty)
  std::string id;
};

struct Scene {
  Camera camera;
  std::vector<Surface> surfaces;
};

// World x-coordinate of image coordinate u on the plane at depth z,
// and the point-in-surface test used by the ray caster.
double image_to_world(double image_coord, double center, double focal, double z);
bool surface_hit(const Surface& s, const Camera& cam, double u, double v);

// Per pixel, the sorted z of every surface containing the ray's intersection
// point, truncated at the first opaque surface; coincident depths collapse.
MultiLayerDepthMap raycast_multilayer(const Scene& scene);

// Two partially overlapping transparent rectangles over an opaque background
// plane, giving 1-, 2-, and 3-layer regions. Two optional auxiliary
// transparent rectangles (disjoint from the main pair and each other) add
// intermediate depth values so that strictly ordered quadruplets exist; the
// layer-count structure stays {1, 2, 3}. Rectangle extents are in image
// coordinates (pixels); surfaces are ordered front, rear, aux1, aux2,
// background.
struct OverlappingPlanesParams {
  Camera camera;
  double z_front = 1.0;
  double z_rear = 2.0;
  double z_background = 4.0;
  double front_x0 = 8, front_x1 = 40, front_y0 = 12, front_y1 = 44;
  double rear_x0 = 24, rear_x1 = 56, rear_y0 = 20, rear_y1 = 52;
  bool with_aux_planes = true;
  double z_aux1 = 1.5;
  double aux1_x0 = 2, aux1_x1 = 20, aux1_y0 = 50, aux1_y1 = 62;
  double z_aux2 = 3.0;
  double aux2_x0 = 44, aux2_x1 = 62, aux2_y0 = 2, aux2_y1 = 18;
  int feature_dim = 16;
  double feature_scale = 1.0;
  std::uint64_t feature_seed = 1;
  // Orthogonal one-hot surface features (default) keep the superposition
  // exactly separable; gaussian features exercise the general case.
  bool orthogonal_features = true;
};

Scene scene_overlapping_planes(const OverlappingPlanesParams& params);

// Per pixel, the sum of the feature vectors of every visible surface on the
// ray (transparent superposition) plus seeded Gaussian noise.
FeatureImage render_features(const Scene& scene, double noise_sigma = 0.0,
                             std::uint64_t seed = 0);

// key = value scene description with [camera] / [surface] sections.
void write_scene(const std::string& path, const Scene& scene);
Scene read_scene(const std::string& path);

}  // namespace mldepth
