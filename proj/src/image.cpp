#include "asl/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

namespace asl {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool starts_with(const std::vector<std::uint8_t>& bytes, std::initializer_list<std::uint8_t> sig) {
  if (bytes.size() < sig.size()) return false;
  return std::equal(sig.begin(), sig.end(), bytes.begin());
}

Raster decode_png(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw IngestionError("cannot decode PNG '" + origin + "': " + img.message);
  img.format = PNG_FORMAT_RGB;
  Raster r{img.height, img.width, 3, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(img))};
  if (!png_image_finish_read(&img, nullptr, r.pixels.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw IngestionError("cannot decode PNG '" + origin + "': " + msg);
  }
  return r;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

Raster decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  Raster r;
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw IngestionError("cannot decode JPEG '" + origin + "': " + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  r.height = cinfo.output_height;
  r.width = cinfo.output_width;
  r.channels = 3;
  r.pixels.resize(r.height * r.width * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = r.pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * r.width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return r;
}

}  // namespace

Raster decode_raw0(const std::vector<std::uint8_t>& bytes, const std::string& origin) {
  if (!starts_with(bytes, {'R', 'A', 'W', '0'}) || bytes.size() < 9)
    throw IngestionError("'" + origin + "' is not a RAW0 image");
  Raster r;
  r.height = bytes[4] | (std::size_t(bytes[5]) << 8);
  r.width = bytes[6] | (std::size_t(bytes[7]) << 8);
  r.channels = bytes[8];
  if (r.height == 0 || r.width == 0 || r.channels == 0)
    throw IngestionError("RAW0 image '" + origin + "' has a zero dimension");
  const std::size_t n = r.height * r.width * r.channels;
  if (bytes.size() != 9 + n)
    throw IngestionError("RAW0 image '" + origin + "' has " + std::to_string(bytes.size() - 9) +
                         " payload bytes, header implies " + std::to_string(n));
  r.pixels.assign(bytes.begin() + 9, bytes.end());
  return r;
}

std::vector<std::uint8_t> encode_raw0(const Raster& raster) {
  if (raster.height > 0xffff || raster.width > 0xffff || raster.channels > 0xff)
    throw ParameterError("RAW0: dimensions exceed the format limits");
  std::vector<std::uint8_t> out = {'R', 'A', 'W', '0'};
  out.push_back(static_cast<std::uint8_t>(raster.height & 0xff));
  out.push_back(static_cast<std::uint8_t>(raster.height >> 8));
  out.push_back(static_cast<std::uint8_t>(raster.width & 0xff));
  out.push_back(static_cast<std::uint8_t>(raster.width >> 8));
  out.push_back(static_cast<std::uint8_t>(raster.channels));
  out.insert(out.end(), raster.pixels.begin(), raster.pixels.end());
  return out;
}

void write_raw0(const Raster& raster, const std::filesystem::path& path) {
  const auto bytes = encode_raw0(raster);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IngestionError("cannot write '" + path.string() + "'");
}

void write_png(const Raster& raster, const std::filesystem::path& path) {
  Raster rgb = to_rgb(raster);
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(rgb.width);
  img.height = static_cast<png_uint_32>(rgb.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.pixels.data(), 0, nullptr))
    throw IngestionError("cannot write PNG '" + path.string() + "': " + img.message);
}

Raster read_raster(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string origin = path.string();
  if (starts_with(bytes, {0x89, 'P', 'N', 'G'})) return decode_png(bytes, origin);
  if (starts_with(bytes, {0xff, 0xd8, 0xff})) return decode_jpeg(bytes, origin);
  if (starts_with(bytes, {'R', 'A', 'W', '0'})) return decode_raw0(bytes, origin);
  throw IngestionError("'" + origin + "' is not a PNG, JPEG, or RAW0 image");
}

Raster to_rgb(Raster raster) {
  if (raster.channels == 3) return raster;
  if (raster.channels != 1 && raster.channels != 2 && raster.channels != 4)
    throw IngestionError("unsupported channel count " + std::to_string(raster.channels));
  Raster out{raster.height, raster.width, 3,
             std::vector<std::uint8_t>(raster.height * raster.width * 3)};
  for (std::size_t p = 0; p < raster.height * raster.width; ++p) {
    const std::uint8_t* src = raster.pixels.data() + p * raster.channels;
    std::uint8_t* dst = out.pixels.data() + p * 3;
    if (raster.channels <= 2) {
      dst[0] = dst[1] = dst[2] = src[0];
    } else {
      std::copy(src, src + 3, dst);
    }
  }
  return out;
}

Tensor normalize(const Raster& raster) {
  Tensor t({raster.height, raster.width, raster.channels});
  for (std::size_t i = 0; i < raster.pixels.size(); ++i)
    t[i] = static_cast<float>(raster.pixels[i] / 255.0);
  return t;
}

Raster quantize(const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("quantize: expected [H,W,C], got " + shape_string(image.shape()));
  Raster r{image.dim(0), image.dim(1), image.dim(2), std::vector<std::uint8_t>(image.size())};
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::round(static_cast<double>(image[i]) * 255.0);
    r.pixels[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return r;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3)
    throw ShapeError("resize_bilinear: expected [H,W,C], got " + shape_string(image.shape()));
  if (out_h == 0 || out_w == 0) throw ShapeError("resize_bilinear: output dims must be >= 1");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h == out_h && w == out_w) return image;

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      const double src = std::max(0.0, (static_cast<double>(i) + 0.5) * scale - 0.5);
      const auto lo = std::min(static_cast<std::size_t>(src), in - 1);
      t[i] = {lo, std::min(lo + 1, in - 1), src - static_cast<double>(lo)};
    }
    return t;
  };
  const auto ty = taps(h, out_h), tx = taps(w, out_w);

  Tensor out({out_h, out_w, c});
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t yy = 0; yy < static_cast<std::ptrdiff_t>(out_h); ++yy) {
    const Tap& vy = ty[static_cast<std::size_t>(yy)];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& vx = tx[x];
      for (std::size_t ch = 0; ch < c; ++ch) {
        auto px = [&](std::size_t r, std::size_t q) {
          return static_cast<double>(image[(r * w + q) * c + ch]);
        };
        const double top = px(vy.lo, vx.lo) * (1 - vx.frac) + px(vy.lo, vx.hi) * vx.frac;
        const double bottom = px(vy.hi, vx.lo) * (1 - vx.frac) + px(vy.hi, vx.hi) * vx.frac;
        out[(static_cast<std::size_t>(yy) * out_w + x) * c + ch] =
            static_cast<float>(top * (1 - vy.frac) + bottom * vy.frac);
      }
    }
  }
  return out;
}

Tensor center_crop(const Tensor& image, std::size_t out_h, std::size_t out_w) {
  if (image.rank() != 3)
    throw ShapeError("center_crop: expected [H,W,C], got " + shape_string(image.shape()));
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (h < out_h || w < out_w)
    throw ShapeError("center_crop: image " + shape_string(image.shape()) + " is smaller than " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  const std::size_t top = (h - out_h) / 2, left = (w - out_w) / 2;
  Tensor out({out_h, out_w, c});
  for (std::size_t y = 0; y < out_h; ++y)
    std::copy_n(image.data() + ((top + y) * w + left) * c, out_w * c, out.data() + y * out_w * c);
  return out;
}

}  // namespace asl
