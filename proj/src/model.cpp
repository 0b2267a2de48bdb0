#include "model.hpp"

#include <cstring>
#include <fstream>

#include "image_io.hpp"

namespace dpc {

namespace {

constexpr char kMagic[8] = {'D', 'P', 'C', 'M', 'O', 'D', 'E', 'L'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_floats(std::ostream& os, const Tensor<float>& t) {
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(float)));
}

void get_floats(std::istream& is, Tensor<float>& t) {
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(float)));
}

void put_image(std::ostream& os, const Tensor<float>& t) {
  put_u32(os, static_cast<uint32_t>(t.shape[0]));
  put_u32(os, static_cast<uint32_t>(t.shape[1]));
  put_u32(os, static_cast<uint32_t>(t.shape[2]));
  put_floats(os, t);
}

Tensor<float> get_image(std::istream& is) {
  int h = static_cast<int>(get_u32(is));
  int w = static_cast<int>(get_u32(is));
  int c = static_cast<int>(get_u32(is));
  require(is.good() && h > 0 && w > 0 && c > 0 && h < 1 << 20 && w < 1 << 20 && c <= 4,
          ErrorKind::parse, "checkpoint: bad raster dimensions");
  Tensor<float> t({h, w, c});
  get_floats(is, t);
  return t;
}

}  // namespace

void Model::validate() const {
  calib.validate();
  require(depth.inv_d.shape == Shape{calib.cam_size.h, calib.cam_size.w, 1}, ErrorKind::shape,
          "model: depth map size does not match the calibration camera size");
  require(net.all_finite() && depth.inv_d.all_finite(), ErrorKind::numeric,
          "model: non-finite parameters");
}

void save_model(const std::filesystem::path& path, const Model& model) {
  atomic_write(path, [&](std::ostream& os) {
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    put_u32(os, static_cast<uint32_t>(kNetLayerCount));
    for (int i = 0; i < kNetLayerCount; ++i) {
      const NetLayerSpec& s = kNetLayers[static_cast<size_t>(i)];
      const ConvBank& bk = model.net.banks[static_cast<size_t>(i)];
      uint32_t name_len = static_cast<uint32_t>(std::strlen(s.name));
      put_u32(os, name_len);
      os.write(s.name, name_len);
      put_u32(os, static_cast<uint32_t>(bk.w.shape.size()));
      for (int d : bk.w.shape) put_u32(os, static_cast<uint32_t>(d));
    }
    for (const ConvBank& bk : model.net.banks) {
      put_floats(os, bk.w);
      put_floats(os, bk.b);
    }
    put_image(os, model.depth.inv_d);
    put_image(os, model.prior.s);
    put_image(os, model.prior.s_star);
    std::string cj = model.calib.to_json();
    put_u32(os, static_cast<uint32_t>(cj.size()));
    os.write(cj.data(), static_cast<std::streamsize>(cj.size()));
  });
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::io, "cannot open model: " + path.string());
  char magic[8];
  is.read(magic, 8);
  require(is.good() && std::memcmp(magic, kMagic, 8) == 0, ErrorKind::parse,
          "not a model checkpoint: " + path.string());
  uint32_t version = get_u32(is);
  require(version == kVersion, ErrorKind::version,
          "checkpoint version " + std::to_string(version) + " unsupported (want " +
              std::to_string(kVersion) + ")");
  uint32_t layer_count = get_u32(is);
  require(layer_count == static_cast<uint32_t>(kNetLayerCount), ErrorKind::version,
          "checkpoint layer count mismatch");
  Model m;
  m.net = ShadingNetParams::zeros();
  for (int i = 0; i < kNetLayerCount; ++i) {
    const NetLayerSpec& s = kNetLayers[static_cast<size_t>(i)];
    uint32_t name_len = get_u32(is);
    require(is.good() && name_len < 64, ErrorKind::parse, "checkpoint: bad layer name");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    require(name == s.name, ErrorKind::version,
            "checkpoint layer \"" + name + "\" does not match \"" + s.name + "\"");
    uint32_t ndims = get_u32(is);
    require(ndims == 4, ErrorKind::version, "checkpoint: unexpected weight rank");
    Shape shape(4);
    for (auto& d : shape) d = static_cast<int>(get_u32(is));
    require(shape == m.net.banks[static_cast<size_t>(i)].w.shape, ErrorKind::version,
            "checkpoint weight shape mismatch for layer " + name);
  }
  for (ConvBank& bk : m.net.banks) {
    get_floats(is, bk.w);
    get_floats(is, bk.b);
  }
  m.depth.inv_d = get_image(is);
  Tensor<float> s = get_image(is);
  Tensor<float> s_star = get_image(is);
  m.prior = make_surface_prior(std::move(s), std::move(s_star));
  uint32_t cj_len = get_u32(is);
  require(is.good() && cj_len < (1u << 20), ErrorKind::parse, "checkpoint: bad calibration block");
  std::string cj(cj_len, '\0');
  is.read(cj.data(), cj_len);
  require(is.good(), ErrorKind::parse, "checkpoint truncated: " + path.string());
  m.calib = CalibrationPair::from_json(cj);
  m.validate();
  return m;
}

}  // namespace dpc
