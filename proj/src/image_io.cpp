#include "image_io.hpp"

#include <png.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "error.hpp"

namespace dpc {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& writer) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp~";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    require(os.good(), ErrorKind::io, "cannot open for writing: " + tmp.string());
    writer(os);
    os.flush();
    require(os.good(), ErrorKind::io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorKind::io, "rename failed: " + path.string() + " (" + ec.message() + ")");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::io, "cannot open: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& text) {
  atomic_write(path, [&](std::ostream& os) { os << text; });
}

// ---- PNG --------------------------------------------------------------------

namespace {

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* f = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (f) std::fclose(f);
  }
};

}  // namespace

Tensor<float> read_png(const fs::path& path) {
  PngReadCloser ctx;
  ctx.f = std::fopen(path.c_str(), "rb");
  require(ctx.f != nullptr, ErrorKind::io, "cannot open: " + path.string());
  unsigned char header[8];
  require(std::fread(header, 1, 8, ctx.f) == 8 && !png_sig_cmp(header, 0, 8), ErrorKind::parse,
          "not a PNG file: " + path.string());
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  require(ctx.png != nullptr, ErrorKind::internal, "png_create_read_struct failed");
  ctx.info = png_create_info_struct(ctx.png);
  require(ctx.info != nullptr, ErrorKind::internal, "png_create_info_struct failed");
  if (setjmp(png_jmpbuf(ctx.png))) fail(ErrorKind::parse, "malformed PNG: " + path.string());
  png_init_io(ctx.png, ctx.f);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  const png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  const png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  const png_byte color = png_get_color_type(ctx.png, ctx.info);
  const png_byte depth = png_get_bit_depth(ctx.png, ctx.info);

  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (depth == 16) png_set_strip_16(ctx.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  const int channels = png_get_channels(ctx.png, ctx.info);
  require(channels == 1 || channels == 3, ErrorKind::parse,
          "unsupported PNG channel count: " + std::to_string(channels));
  Tensor<float> img({static_cast<int>(h), static_cast<int>(w), channels});
  std::vector<png_byte> row(static_cast<size_t>(w) * static_cast<size_t>(channels));
  for (png_uint_32 y = 0; y < h; ++y) {
    png_read_row(ctx.png, row.data(), nullptr);
    for (size_t i = 0; i < row.size(); ++i)
      img.v[static_cast<size_t>(y) * row.size() + i] = static_cast<float>(row[i]) / 255.0f;
  }
  png_read_end(ctx.png, nullptr);
  return img;
}

void write_png(const fs::path& path, const Tensor<float>& img) {
  check_image_shape(img, "write_png");
  const int h = img.shape[0], w = img.shape[1], c = img.shape[2];
  require(c == 1 || c == 3, ErrorKind::shape, "write_png: expected 1 or 3 channels");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp~";

  FILE* f = std::fopen(tmp.c_str(), "wb");
  require(f != nullptr, ErrorKind::io, "cannot open for writing: " + tmp.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(f);
    fs::remove(tmp);
    fail(ErrorKind::io, "PNG write failed: " + path.string());
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(static_cast<size_t>(w) * static_cast<size_t>(c));
  for (int y = 0; y < h; ++y) {
    for (size_t i = 0; i < row.size(); ++i) {
      float x = img.v[static_cast<size_t>(y) * row.size() + i];
      x = std::min(1.0f, std::max(0.0f, x));
      row[i] = static_cast<png_byte>(std::lround(x * 255.0f));
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorKind::io, "rename failed: " + path.string());
}

// ---- PFM --------------------------------------------------------------------

void write_pfm(const fs::path& path, const Tensor<float>& img) {
  check_image_shape(img, "write_pfm");
  const int c = img.shape[2];
  require(c == 1 || c == 3, ErrorKind::shape, "write_pfm: expected 1 or 3 channels");
  atomic_write(path, [&](std::ostream& os) {
    os << (c == 1 ? "Pf" : "PF") << "\n" << img.shape[1] << " " << img.shape[0] << "\n-1.0\n";
    os.write(reinterpret_cast<const char*>(img.data()),
             static_cast<std::streamsize>(img.size() * sizeof(float)));
  });
}

Tensor<float> read_pfm(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), ErrorKind::io, "cannot open: " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  is >> magic >> w >> h >> scale;
  require(is.good() && (magic == "Pf" || magic == "PF") && w > 0 && h > 0, ErrorKind::parse,
          "malformed PFM header: " + path.string());
  require(scale < 0, ErrorKind::parse, "big-endian PFM not supported: " + path.string());
  is.get();  // newline after the scale line
  const int c = magic == "Pf" ? 1 : 3;
  Tensor<float> img({h, w, c});
  is.read(reinterpret_cast<char*>(img.data()),
          static_cast<std::streamsize>(img.size() * sizeof(float)));
  require(is.gcount() == static_cast<std::streamsize>(img.size() * sizeof(float)),
          ErrorKind::parse, "truncated PFM data: " + path.string());
  return img;
}

// ---- PLY --------------------------------------------------------------------

void write_ply(const fs::path& path, const PointCloud& cloud) {
  atomic_write(path, [&](std::ostream& os) {
    os << "ply\nformat ascii 1.0\n";
    os << "element vertex " << cloud.vertices.size() << "\n";
    for (const char* p : {"x", "y", "z", "nx", "ny", "nz"}) os << "property float " << p << "\n";
    os << "end_header\n";
    char buf[160];
    for (const auto& v : cloud.vertices) {
      std::snprintf(buf, sizeof(buf), "%.6f %.6f %.6f %.6f %.6f %.6f\n", v[0], v[1], v[2], v[3],
                    v[4], v[5]);
      os << buf;
    }
  });
}

PointCloud read_ply(const fs::path& path) {
  std::ifstream is(path);
  require(is.good(), ErrorKind::io, "cannot open: " + path.string());
  std::string line;
  std::getline(is, line);
  require(line == "ply", ErrorKind::parse, "not a PLY file: " + path.string());
  size_t count = 0;
  int props = 0;
  while (std::getline(is, line)) {
    if (line.rfind("element vertex ", 0) == 0) count = std::stoul(line.substr(15));
    if (line.rfind("property", 0) == 0) ++props;
    if (line == "end_header") break;
  }
  require(props == 6, ErrorKind::parse, "expected 6 vertex properties: " + path.string());
  PointCloud cloud;
  cloud.vertices.resize(count);
  for (auto& v : cloud.vertices) {
    is >> v[0] >> v[1] >> v[2] >> v[3] >> v[4] >> v[5];
    require(is.good() || is.eof(), ErrorKind::parse, "truncated PLY: " + path.string());
  }
  return cloud;
}

}  // namespace dpc
