#include "cxrlab/core/image_io.hpp"

#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <vector>

#include "cxrlab/core/error.hpp"

namespace cxr {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
  }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
  }
};

void openForRead(const std::string& path, FilePtr& file, PngReader& r) {
  file.reset(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open PNG for reading: " + path);

  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw ParseError("not a PNG file: " + path);

  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                 nullptr);
  if (!r.png) throw IoError("libpng init failed");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw IoError("libpng info init failed");

  if (setjmp(png_jmpbuf(r.png)))
    throw ParseError("corrupt PNG stream: " + path);

  png_init_io(r.png, file.get());
  png_set_sig_bytes(r.png, 8);
  png_read_info(r.png, r.info);
}

}  // namespace

Tensor readGrayPng(const std::string& path) {
  FilePtr file;
  PngReader r;
  openForRead(path, file, r);

  if (setjmp(png_jmpbuf(r.png)))
    throw ParseError("corrupt PNG stream: " + path);

  const png_uint_32 w = png_get_image_width(r.png, r.info);
  const png_uint_32 h = png_get_image_height(r.png, r.info);
  const int depth = png_get_bit_depth(r.png, r.info);
  const int color = png_get_color_type(r.png, r.info);

  if (color != PNG_COLOR_TYPE_GRAY)
    throw ValidationError("expected single-channel grayscale PNG: " + path);
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
  if (depth == 16) png_set_swap(r.png);  // stored big-endian; read native
  png_read_update_info(r.png, r.info);

  const std::size_t rowBytes = png_get_rowbytes(r.png, r.info);
  std::vector<unsigned char> raw(rowBytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowBytes;
  png_read_image(r.png, rows.data());
  png_read_end(r.png, nullptr);

  Tensor out({static_cast<int>(h), static_cast<int>(w)});
  if (depth == 16) {
    const auto* px = reinterpret_cast<const unsigned short*>(raw.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i)
      out[i] = static_cast<double>(px[i]);
  } else {
    for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i)
      out[i] = static_cast<double>(raw[i]);
  }
  return out;
}

int pngBitDepth(const std::string& path) {
  FilePtr file;
  PngReader r;
  openForRead(path, file, r);
  return png_get_bit_depth(r.png, r.info);
}

namespace {

std::string& pngTagStorage() {
  static std::string tag;
  return tag;
}

void writeGrayPng(const std::string& path, const Tensor& pixels, int depth) {
  if (pixels.dim() != 2)
    throw ValidationError("PNG writer expects an [H,W] tensor");
  const int h = pixels.shape(0), w = pixels.shape(1);

  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open PNG for writing: " + path);

  PngWriter wr;
  wr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                   nullptr);
  if (!wr.png) throw IoError("libpng init failed");
  wr.info = png_create_info_struct(wr.png);
  if (!wr.info) throw IoError("libpng info init failed");
  if (setjmp(png_jmpbuf(wr.png))) throw IoError("PNG write failed: " + path);

  png_init_io(wr.png, file.get());
  png_set_IHDR(wr.png, wr.info, w, h, depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  const std::string& tag = pngTagStorage();
  if (!tag.empty()) {
    png_text text{};
    text.compression = PNG_TEXT_COMPRESSION_NONE;
    text.key = const_cast<char*>("config_hash");
    text.text = const_cast<char*>(tag.c_str());
    text.text_length = tag.size();
    png_set_text(wr.png, wr.info, &text, 1);
  }
  png_write_info(wr.png, wr.info);
  if (depth == 16) png_set_swap(wr.png);

  if (depth == 8) {
    std::vector<unsigned char> row(w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = std::round(pixels.at(y, x));
        row[x] = static_cast<unsigned char>(v < 0 ? 0 : (v > 255 ? 255 : v));
      }
      png_write_row(wr.png, row.data());
    }
  } else {
    std::vector<unsigned short> row(w);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double v = std::round(pixels.at(y, x));
        row[x] =
            static_cast<unsigned short>(v < 0 ? 0 : (v > 65535 ? 65535 : v));
      }
      png_write_row(wr.png, reinterpret_cast<png_bytep>(row.data()));
    }
  }
  png_write_end(wr.png, nullptr);
}

}  // namespace

void writeGrayPng8(const std::string& path, const Tensor& pixels) {
  writeGrayPng(path, pixels, 8);
}

void writeGrayPng16(const std::string& path, const Tensor& pixels) {
  writeGrayPng(path, pixels, 16);
}

void setPngConfigTag(const std::string& tag) { pngTagStorage() = tag; }

const std::string& pngConfigTag() { return pngTagStorage(); }

std::string readPngConfigTag(const std::string& path) {
  FilePtr file;
  PngReader r;
  openForRead(path, file, r);
  png_textp texts = nullptr;
  int count = 0;
  png_get_text(r.png, r.info, &texts, &count);
  for (int i = 0; i < count; ++i)
    if (texts[i].key && std::string(texts[i].key) == "config_hash")
      return texts[i].text ? std::string(texts[i].text) : std::string();
  return {};
}

}  // namespace cxr
