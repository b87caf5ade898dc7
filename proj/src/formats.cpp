#include "mldepth/formats.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include "mldepth/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

namespace mldepth {

namespace {

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  }
  template <typename T>
  void put(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    offset_ += sizeof(T);
  }
  void put_bytes(const char* data, std::size_t n) {
    out_.write(data, n);
    offset_ += n;
  }
  std::size_t offset() const { return offset_; }
  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write to " + path_ + " failed");
  }

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t offset_ = 0;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path);
  }
  template <typename T>
  T get(const char* what) {
    T v;
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw FormatError(std::string("truncated file while reading ") + what, offset_);
    offset_ += sizeof(T);
    return v;
  }
  void expect_magic(const char* magic) {
    char buf[4];
    in_.read(buf, 4);
    if (!in_ || std::memcmp(buf, magic, 4) != 0) {
      throw FormatError(std::string("bad magic, expected ") + magic, 0);
    }
    offset_ += 4;
  }
  void expect_eof(const char* what) {
    char c;
    in_.read(&c, 1);
    if (in_) throw FormatError(std::string("trailing bytes after ") + what, offset_);
  }
  std::size_t offset() const { return offset_; }

 private:
  std::ifstream in_;
  std::size_t offset_ = 0;
};

void check_dims(std::uint32_t h, std::uint32_t w, std::size_t offset) {
  constexpr std::uint32_t kMaxDim = 1u << 20;
  if (h == 0 || w == 0 || h > kMaxDim || w > kMaxDim) {
    throw FormatError("implausible image dimensions", offset);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// MLD1
// ---------------------------------------------------------------------------

void write_mld(const std::string& path, const MultiLayerDepthMap& map) {
  Writer out(path);
  out.put_bytes("MLD1", 4);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(map.height()));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(map.width()));
  out.put<std::uint8_t>(map.units() == DepthUnits::Normalized ? 1 : 0);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const auto& d = map.layers(x, y);
      if (d.size() > 255) {
        throw std::invalid_argument("MLD1 stores at most 255 layers per pixel");
      }
      out.put<std::uint8_t>(static_cast<std::uint8_t>(d.size()));
      float prev = -std::numeric_limits<float>::infinity();
      for (double depth : d) {
        const float f = static_cast<float>(depth);
        if (!(f > prev)) {
          throw std::invalid_argument(
              "depths are not strictly increasing after float32 conversion");
        }
        prev = f;
        out.put<float>(f);
      }
    }
  }
  out.close();
}

MultiLayerDepthMap read_mld(const std::string& path) {
  Reader in(path);
  in.expect_magic("MLD1");
  const auto h = in.get<std::uint32_t>("height");
  const auto w = in.get<std::uint32_t>("width");
  check_dims(h, w, in.offset() - 8);
  const auto flag = in.get<std::uint8_t>("units flag");
  if (flag > 1) throw FormatError("units flag must be 0 or 1", in.offset() - 1);
  MultiLayerDepthMap map(static_cast<int>(h), static_cast<int>(w),
                         flag ? DepthUnits::Normalized : DepthUnits::Raw);
  for (std::uint32_t y = 0; y < h; ++y) {
    for (std::uint32_t x = 0; x < w; ++x) {
      const auto m = in.get<std::uint8_t>("layer count");
      std::vector<double> depths(m);
      for (int i = 0; i < m; ++i) {
        const std::size_t at = in.offset();
        const float f = in.get<float>("depth value");
        if (!std::isfinite(f)) throw FormatError("non-finite depth", at);
        if (i > 0 && f <= depths[i - 1]) {
          throw FormatError("depths not strictly increasing", at);
        }
        if (flag == 0 && f <= 0.0f) throw FormatError("raw depth not positive", at);
        depths[i] = f;
      }
      map.set_layers(static_cast<int>(x), static_cast<int>(y), std::move(depths));
    }
  }
  in.expect_eof("MLD1 payload");
  return map;
}

// ---------------------------------------------------------------------------
// FIM1
// ---------------------------------------------------------------------------

void write_feature_image(const std::string& path, const FeatureImage& img) {
  Writer out(path);
  out.put_bytes("FIM1", 4);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(img.height));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(img.width));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(img.feature_dim()));
  for (Eigen::Index r = 0; r < img.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.values.cols(); ++c) out.put<double>(img.values(r, c));
  }
  out.close();
}

FeatureImage read_feature_image(const std::string& path) {
  Reader in(path);
  in.expect_magic("FIM1");
  const auto h = in.get<std::uint32_t>("height");
  const auto w = in.get<std::uint32_t>("width");
  check_dims(h, w, in.offset() - 8);
  const auto f = in.get<std::uint32_t>("feature_dim");
  if (f == 0 || f > (1u << 16)) throw FormatError("implausible feature dimension", in.offset() - 4);
  FeatureImage img = make_feature_image(static_cast<int>(h), static_cast<int>(w),
                                        static_cast<int>(f));
  for (Eigen::Index r = 0; r < img.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < img.values.cols(); ++c) {
      const std::size_t at = in.offset();
      const double v = in.get<double>("feature value");
      if (!std::isfinite(v)) throw FormatError("non-finite feature value", at);
      img.values(r, c) = v;
    }
  }
  in.expect_eof("FIM1 payload");
  return img;
}

// ---------------------------------------------------------------------------
// MIX1
// ---------------------------------------------------------------------------

void write_mixture_field(const std::string& path, const MixtureField& field,
                         const NormParams& norm) {
  Writer out(path);
  out.put_bytes("MIX1", 4);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(field.height));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(field.width));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(field.num_components));
  out.put<std::uint8_t>(static_cast<std::uint8_t>(field.rule));
  out.put<double>(norm.shift);
  out.put<double>(norm.scale);
  for (double c : field.centers) out.put<double>(c);
  for (double s : field.scales) out.put<double>(s);
  out.close();
}

std::pair<MixtureField, NormParams> read_mixture_field(const std::string& path) {
  Reader in(path);
  in.expect_magic("MIX1");
  const auto h = in.get<std::uint32_t>("height");
  const auto w = in.get<std::uint32_t>("width");
  check_dims(h, w, in.offset() - 8);
  const auto n = in.get<std::uint32_t>("component count");
  if (n == 0 || n > 4096) throw FormatError("implausible component count", in.offset() - 4);
  const auto rule = in.get<std::uint8_t>("mixture rule");
  if (rule > 2) throw FormatError("unknown mixture rule", in.offset() - 1);
  NormParams norm;
  norm.shift = in.get<double>("shift");
  const std::size_t scale_at = in.offset();
  norm.scale = in.get<double>("scale");
  if (!(norm.scale > 0.0) || !std::isfinite(norm.scale) || !std::isfinite(norm.shift)) {
    throw FormatError("invalid normalization parameters", scale_at);
  }
  MixtureField field = make_mixture_field(static_cast<int>(h), static_cast<int>(w),
                                          static_cast<int>(n),
                                          static_cast<MixtureRule>(rule));
  for (double& c : field.centers) {
    const std::size_t at = in.offset();
    c = in.get<double>("center");
    if (!std::isfinite(c)) throw FormatError("non-finite center", at);
  }
  for (double& s : field.scales) {
    const std::size_t at = in.offset();
    s = in.get<double>("scale");
    if (!(s > 0.0) || !std::isfinite(s)) throw FormatError("invalid component scale", at);
  }
  in.expect_eof("MIX1 payload");
  return {std::move(field), norm};
}

// ---------------------------------------------------------------------------
// LPPD
// ---------------------------------------------------------------------------

namespace {

void put_matrix(Writer& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.put<double>(m(r, c));
}

void put_vector(Writer& out, const Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out.put<double>(v(i));
}

void get_matrix(Reader& in, Eigen::MatrixXd& m, const char* what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const std::size_t at = in.offset();
      const double v = in.get<double>(what);
      if (!std::isfinite(v)) throw FormatError(std::string("non-finite value in ") + what, at);
      m(r, c) = v;
    }
  }
}

void get_vector(Reader& in, Eigen::VectorXd& v, const char* what) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const std::size_t at = in.offset();
    const double x = in.get<double>(what);
    if (!std::isfinite(x)) throw FormatError(std::string("non-finite value in ") + what, at);
    v(i) = x;
  }
}

}  // namespace

void write_checkpoint(const std::string& path, const DecompParams& params) {
  Writer out(path);
  out.put_bytes("LPPD", 4);
  // version 1: one shared predictor; version 2: one predictor per iteration
  out.put<std::uint32_t>(params.shared_predictor() ? 1 : 2);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(params.feature_dim));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(params.component_dim));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(params.iterations));
  put_matrix(out, params.w_decomposer);
  put_matrix(out, params.w_remapper);
  for (const auto& w : params.w_predictor) put_matrix(out, w);
  put_vector(out, params.b_decomposer);
  put_vector(out, params.b_remapper);
  for (const auto& b : params.b_predictor) put_vector(out, b);
  out.close();
}

DecompParams read_checkpoint(const std::string& path) {
  Reader in(path);
  in.expect_magic("LPPD");
  const auto version = in.get<std::uint32_t>("version");
  if (version != 1 && version != 2) {
    throw FormatError("unsupported checkpoint version", in.offset() - 4);
  }
  const auto f = in.get<std::uint32_t>("feature_dim");
  const auto c = in.get<std::uint32_t>("component_dim");
  const auto n = in.get<std::uint32_t>("iterations");
  if (f == 0 || c == 0 || n == 0 || f > (1u << 16) || c > (1u << 16) || n > 1024) {
    throw FormatError("implausible checkpoint dimensions", in.offset() - 12);
  }
  DecompParams params = make_decomp_params(static_cast<int>(f), static_cast<int>(c),
                                           static_cast<int>(n), version == 1);
  get_matrix(in, params.w_decomposer, "decomposer weights");
  get_matrix(in, params.w_remapper, "remapper weights");
  for (auto& w : params.w_predictor) get_matrix(in, w, "predictor weights");
  get_vector(in, params.b_decomposer, "decomposer bias");
  get_vector(in, params.b_remapper, "remapper bias");
  for (auto& b : params.b_predictor) get_vector(in, b, "predictor bias");
  in.expect_eof("LPPD payload");
  return params;
}

}  // namespace mldepth
