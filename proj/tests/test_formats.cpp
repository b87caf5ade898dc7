#include "mldepth/formats.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "mldepth/common.hpp"
#include "mldepth/config.hpp"

using namespace mldepth;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

MultiLayerDepthMap random_map(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> depth(0.1, 30.0);
  std::uniform_int_distribution<int> layers(0, 5);
  MultiLayerDepthMap map(7, 5, DepthUnits::Raw);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 5; ++x) {
      std::vector<double> d(layers(rng));
      for (double& v : d) v = static_cast<float>(depth(rng));  // float-exact values
      std::sort(d.begin(), d.end());
      d.erase(std::unique(d.begin(), d.end()), d.end());
      map.set_layers(x, y, std::move(d));
    }
  }
  return map;
}

}  // namespace

TEST_CASE("MLD1 round trip is bitwise") {
  const std::string path = temp_path("t1.mld");
  const std::string path2 = temp_path("t2.mld");
  const auto map = random_map(11);
  write_mld(path, map);
  const auto back = read_mld(path);
  CHECK(back.units() == map.units());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      REQUIRE(back.layer_count(x, y) == map.layer_count(x, y));
      for (int i = 0; i < map.layer_count(x, y); ++i) {
        CHECK(back.layers(x, y)[i] == map.layers(x, y)[i]);
      }
    }
  }
  write_mld(path2, back);
  CHECK(slurp(path) == slurp(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("MLD1 with zero layers everywhere is header plus one byte per pixel") {
  const std::string path = temp_path("t_empty.mld");
  MultiLayerDepthMap map(3, 4, DepthUnits::Normalized);
  write_mld(path, map);
  CHECK(std::filesystem::file_size(path) == 4 + 4 + 4 + 1 + 3 * 4);
  const auto back = read_mld(path);
  CHECK(back.units() == DepthUnits::Normalized);
  CHECK(back.total_depth_count() == 0);
  std::remove(path.c_str());
}

TEST_CASE("MLD1 rejects malformed files with byte offsets") {
  const std::string path = temp_path("t_bad.mld");
  MultiLayerDepthMap map(1, 1, DepthUnits::Raw);
  map.set_layers(0, 0, {1.0, 2.0});
  write_mld(path, map);
  auto bytes = slurp(path);

  // bad magic
  auto corrupt = bytes;
  corrupt[0] = 'X';
  dump(path, corrupt);
  CHECK_THROWS_AS(read_mld(path), FormatError);

  // non-increasing depths: swap the two float32 payloads
  corrupt = bytes;
  for (int i = 0; i < 4; ++i) std::swap(corrupt[14 + i], corrupt[18 + i]);
  dump(path, corrupt);
  try {
    read_mld(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 18);  // magic(4) + dims(8) + flag(1) + count(1) + first depth(4)
  }

  // truncated payload
  corrupt = bytes;
  corrupt.resize(bytes.size() - 2);
  dump(path, corrupt);
  try {
    read_mld(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 18);
  }

  // trailing garbage
  corrupt = bytes;
  corrupt.push_back(0);
  dump(path, corrupt);
  CHECK_THROWS_AS(read_mld(path), FormatError);

  std::remove(path.c_str());
}

TEST_CASE("checkpoint round trip is bitwise") {
  const std::string path = temp_path("t.lppd");
  const std::string path2 = temp_path("t2.lppd");
  const DecompParams p = random_decomp_params(6, 4, 3, 0.9, 1234);
  write_checkpoint(path, p);
  const DecompParams back = read_checkpoint(path);
  CHECK(back.feature_dim == 6);
  CHECK(back.component_dim == 4);
  CHECK(back.iterations == 3);
  CHECK((back.w_decomposer - p.w_decomposer).norm() == 0.0);
  CHECK((back.w_remapper - p.w_remapper).norm() == 0.0);
  CHECK((back.w_predictor[0] - p.w_predictor[0]).norm() == 0.0);
  CHECK((back.b_decomposer - p.b_decomposer).norm() == 0.0);
  CHECK((back.b_remapper - p.b_remapper).norm() == 0.0);
  CHECK((back.b_predictor[0] - p.b_predictor[0]).norm() == 0.0);
  write_checkpoint(path2, back);
  CHECK(slurp(path) == slurp(path2));

  // malformed: truncate in the middle of the remapper block
  auto bytes = slurp(path);
  bytes.resize(20 + 8 * (4 * 6) + 13);
  dump(path, bytes);
  try {
    read_checkpoint(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 20 + 8 * (4 * 6) + 8);
  }

  // per-iteration predictors round trip as format version 2
  const DecompParams per_iter = random_decomp_params(3, 2, 2, 0.5, 1, false);
  write_checkpoint(path, per_iter);
  const DecompParams pback = read_checkpoint(path);
  REQUIRE(pback.w_predictor.size() == 2);
  CHECK((pback.w_predictor[1] - per_iter.w_predictor[1]).norm() == 0.0);
  CHECK((pback.b_predictor[1] - per_iter.b_predictor[1]).norm() == 0.0);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("feature image and mixture field files round trip") {
  const std::string fpath = temp_path("t.fim");
  FeatureImage img = make_feature_image(3, 4, 5);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (Eigen::Index r = 0; r < img.values.rows(); ++r)
    for (Eigen::Index c = 0; c < img.values.cols(); ++c) img.values(r, c) = u(rng);
  write_feature_image(fpath, img);
  const auto fback = read_feature_image(fpath);
  CHECK(fback.height == 3);
  CHECK(fback.width == 4);
  CHECK((fback.values - img.values).norm() == 0.0);
  std::remove(fpath.c_str());

  const std::string mpath = temp_path("t.mix");
  MixtureField field = make_mixture_field(2, 3, 4, MixtureRule::Ordered);
  for (auto& c : field.centers) c = u(rng);
  for (auto& s : field.scales) s = 1.0 + std::abs(u(rng));
  const NormParams norm{1.25, 0.75};
  write_mixture_field(mpath, field, norm);
  const auto [mback, nback] = read_mixture_field(mpath);
  CHECK(mback.rule == MixtureRule::Ordered);
  CHECK(nback.shift == norm.shift);
  CHECK(nback.scale == norm.scale);
  CHECK(mback.centers == field.centers);
  CHECK(mback.scales == field.scales);

  // invalid scale in the payload is rejected with its offset
  auto bytes = slurp(mpath);
  const std::size_t scales_start = 4 + 12 + 1 + 16 + 8 * field.centers.size();
  for (int i = 0; i < 8; ++i) bytes[scales_start + i] = 0;  // scale 0.0
  dump(mpath, bytes);
  try {
    read_mixture_field(mpath);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == scales_start);
  }
  std::remove(mpath.c_str());
}

TEST_CASE("config parsing, overrides, and environment") {
  const Config cfg = Config::from_string(
      "# comment\n"
      "[netfit]\n"
      "lr = 0.02\n"
      "steps = 100\n"
      "shared_predictor = true\n"
      "[losses]\n"
      "gm_weights = 1.2, 1.0, 1.0, 1.0\n");
  CHECK(cfg.get_double("netfit.lr", 0.0) == 0.02);
  CHECK(cfg.get_int("netfit.steps", 0) == 100);
  CHECK(cfg.get_bool("netfit.shared_predictor", false));
  const auto w = cfg.get_double_list("losses.gm_weights", {});
  REQUIRE(w.size() == 4);
  CHECK(w[0] == 1.2);
  CHECK(cfg.get_int("netfit.missing", 7) == 7);

  Config cfg2 = cfg;
  cfg2.set_override("netfit.lr=0.5");
  CHECK(cfg2.get_double("netfit.lr", 0.0) == 0.5);
  CHECK_THROWS(cfg2.set_override("no_equals_sign"));

  setenv("MLDEPTH_NETFIT_STEPS", "55", 1);
  cfg2.apply_environment();
  CHECK(cfg2.get_int("netfit.steps", 0) == 55);
  unsetenv("MLDEPTH_NETFIT_STEPS");

  // round trip through serialization
  const Config cfg3 = Config::from_string(cfg2.serialize());
  CHECK(cfg3.get_double("netfit.lr", 0.0) == 0.5);
  CHECK(cfg3.get_double_list("losses.gm_weights", {}) == w);

  CHECK_THROWS(Config::from_string("keyonly\n"));
  CHECK_THROWS(cfg.get_int("netfit.lr", 0));  // 0.02 is not an integer
}
