#pragma once

#include <string>
#include <utility>

#include "mldepth/decomposition.hpp"
#include "mldepth/laplace.hpp"
#include "mldepth/multilayer.hpp"

namespace mldepth {

// Binary formats, all little-endian. Readers throw FormatError with the byte
// offset of the first invalid datum.
//
//   MLD1  multi-layer depth map
//         "MLD1", u32 height, u32 width, u8 units flag (0 raw, 1 normalized),
//         then per pixel row-major: u8 layer count m, m strictly increasing
//         float32 depths.
//   FIM1  feature image
//         "FIM1", u32 height, u32 width, u32 feature_dim, float64 values
//         pixel-major (feature index fastest).
//   MIX1  per-pixel mixture field with its normalization parameters
//         "MIX1", u32 height, u32 width, u32 components, u8 rule, float64
//         shift, float64 scale, float64 center planes, float64 scale planes.
//   LPPD  decomposition parameter checkpoint
//         "LPPD", u32 version, u32 feature_dim, u32 component_dim,
//         u32 iterations, then row-major float64 for W_D, W_R, W_P followed
//         by the biases b_D, b_R, b_P. Version 1 stores one shared
//         predictor; version 2 stores `iterations` consecutive W_P blocks
//         and bias vectors.

void write_mld(const std::string& path, const MultiLayerDepthMap& map);
MultiLayerDepthMap read_mld(const std::string& path);

void write_feature_image(const std::string& path, const FeatureImage& img);
FeatureImage read_feature_image(const std::string& path);

void write_mixture_field(const std::string& path, const MixtureField& field,
                         const NormParams& norm);
std::pair<MixtureField, NormParams> read_mixture_field(const std::string& path);

void write_checkpoint(const std::string& path, const DecompParams& params);
DecompParams read_checkpoint(const std::string& path);

}  // namespace mldepth
