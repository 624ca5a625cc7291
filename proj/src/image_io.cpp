#include "ordsr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <csetjmp>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>

namespace ordsr {

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

unsigned quantize(double v, unsigned max_code) {
  const double c = std::clamp(v, 0.0, 1.0) * max_code;
  return static_cast<unsigned>(std::lround(c));
}

void check_channels(const Image& img) {
  if (img.channels.size() != 1 && img.channels.size() != 3) {
    throw std::invalid_argument("images carry 1 or 3 channels");
  }
  for (const auto& p : img.channels) {
    if (!p.same_dims(img.channels[0])) throw std::invalid_argument("channel dims differ");
  }
  if (img.height() == 0 || img.width() == 0) throw std::invalid_argument("empty image");
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.string().c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

void png_warn(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; these helpers hold no C++ objects so the
// jump never skips a destructor.
bool png_read_header(png_structp png, png_infop info, std::FILE* f) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if ((color_type & PNG_COLOR_MASK_ALPHA) || png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_strip_alpha(png);
  }
  png_read_update_info(png, info);
  return true;
}

bool png_read_rows(png_structp png, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  return true;
}

bool png_write_all(png_structp png, png_infop info, std::FILE* f, png_uint_32 w,
                   png_uint_32 h, int depth, int color_type, png_bytepp rows) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_init_io(png, f);
  png_set_IHDR(png, info, w, h, depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  return true;
}

Image read_png(const std::filesystem::path& path) {
  File f = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw std::runtime_error("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  if (!png) throw std::runtime_error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  if (!info || !png_read_header(png, info, f.get())) {
    throw std::runtime_error("corrupt PNG header: " + path.string());
  }

  const std::size_t h = png_get_image_height(png, info);
  const std::size_t w = png_get_image_width(png, info);
  const std::size_t ch = png_get_channels(png, info);
  const int depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buf(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (std::size_t r = 0; r < h; ++r) rows[r] = buf.data() + r * rowbytes;
  if (!png_read_rows(png, rows.data())) {
    throw std::runtime_error("corrupt PNG data: " + path.string());
  }

  Image img;
  img.channels.assign(ch, Plane(h, w));
  const double max_code = depth == 16 ? 65535.0 : 255.0;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t k = 0; k < ch; ++k) {
        const std::size_t at = c * ch + k;
        // 16-bit samples are big-endian in the file and left unswapped
        const unsigned code =
            depth == 16 ? static_cast<unsigned>((rows[r][2 * at] << 8) | rows[r][2 * at + 1])
                        : rows[r][at];
        img.channels[k](r, c) = code / max_code;
      }
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const Image& img, int bit_depth) {
  const std::size_t h = img.height(), w = img.width(), ch = img.channels.size();
  const std::size_t bytes = static_cast<std::size_t>(bit_depth / 8);
  const unsigned max_code = bit_depth == 16 ? 65535u : 255u;
  std::vector<png_byte> buf(h * w * ch * bytes);
  std::vector<png_bytep> rows(h);
  for (std::size_t r = 0; r < h; ++r) {
    rows[r] = buf.data() + r * w * ch * bytes;
    for (std::size_t c = 0; c < w; ++c) {
      for (std::size_t k = 0; k < ch; ++k) {
        const unsigned code = quantize(img.channels[k](r, c), max_code);
        const std::size_t at = (c * ch + k) * bytes;
        if (bytes == 2) {
          rows[r][at] = static_cast<png_byte>(code >> 8);
          rows[r][at + 1] = static_cast<png_byte>(code & 0xFF);
        } else {
          rows[r][at] = static_cast<png_byte>(code);
        }
      }
    }
  }

  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
  if (!png) throw std::runtime_error("png: out of memory");
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  if (!info || !png_write_all(png, info, f.get(), static_cast<png_uint_32>(w),
                              static_cast<png_uint_32>(h), bit_depth,
                              ch == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, rows.data())) {
    throw std::runtime_error("failed to write PNG: " + path.string());
  }
}

// Netpbm header token, skipping whitespace and comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      tok.push_back(c);
      break;
    }
  }
  while (in.get(c) && !std::isspace(static_cast<unsigned char>(c))) tok.push_back(c);
  return tok;
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P5" && magic != "P6") {
    throw std::runtime_error("only binary PGM (P5) and PPM (P6) are supported");
  }
  const std::size_t ch = magic == "P6" ? 3 : 1;
  std::size_t w = 0, h = 0;
  unsigned maxval = 0;
  try {
    w = std::stoul(pnm_token(in));
    h = std::stoul(pnm_token(in));
    maxval = static_cast<unsigned>(std::stoul(pnm_token(in)));
  } catch (const std::logic_error&) {
    throw std::runtime_error("corrupt netpbm header in " + path.string());
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw std::runtime_error("corrupt netpbm header in " + path.string());
  }
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(w * h * ch * bytes);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw std::runtime_error("truncated netpbm data in " + path.string());
  }
  Image img;
  img.channels.assign(ch, Plane(h, w));
  for (std::size_t p = 0; p < w * h; ++p) {
    for (std::size_t k = 0; k < ch; ++k) {
      const std::size_t at = (p * ch + k) * bytes;
      const unsigned code = bytes == 2 ? (buf[at] << 8) | buf[at + 1] : buf[at];
      img.channels[k].values()[p] = static_cast<double>(code) / maxval;
    }
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image& img, int bit_depth) {
  const std::size_t ch = img.channels.size();
  const std::string ext = lower_extension(path);
  if ((ext == ".pgm") != (ch == 1)) {
    throw std::invalid_argument("use .pgm for gray and .ppm for color images");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  const unsigned maxval = bit_depth == 16 ? 65535u : 255u;
  out << (ch == 3 ? "P6" : "P5") << "\n" << img.width() << " " << img.height() << "\n"
      << maxval << "\n";
  for (std::size_t p = 0; p < img.height() * img.width(); ++p) {
    for (std::size_t k = 0; k < ch; ++k) {
      const unsigned code = quantize(img.channels[k].values()[p], maxval);
      if (bit_depth == 16) out.put(static_cast<char>(code >> 8));
      out.put(static_cast<char>(code & 0xFF));
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  throw std::invalid_argument("unsupported image format: " + path.string());
}

void write_image(const std::filesystem::path& path, const Image& img, int bit_depth) {
  check_channels(img);
  if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("bit depth must be 8 or 16");
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(path, img, bit_depth);
  if (ext == ".pgm" || ext == ".ppm") return write_pnm(path, img, bit_depth);
  throw std::invalid_argument("unsupported image format: " + path.string());
}

Image gray_image(Plane y) {
  Image img;
  img.channels.push_back(std::move(y));
  return img;
}

ColorImage to_ycbcr(const Image& img) {
  check_channels(img);
  if (!img.is_color()) return {img.channels[0], Plane(), Plane()};
  return rgb_to_ycbcr(img.channels[0], img.channels[1], img.channels[2]);
}

Image from_ycbcr(const ColorImage& img) {
  if (!img.is_color()) return gray_image(img.y);
  auto rgb = ycbcr_to_rgb(img);
  Image out;
  for (auto& p : rgb) out.channels.push_back(std::move(p));
  return out;
}

Plane read_luma(const std::filesystem::path& path) { return to_ycbcr(read_image(path)).y; }

}  // namespace ordsr
