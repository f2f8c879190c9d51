#include "convad/image_io.hpp"

#include <png.h>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <sstream>
#include <vector>

#include "convad/model_io.hpp"

namespace convad {
namespace {

struct RawImage {
  std::size_t channels = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  unsigned maxval = 255;
  std::vector<unsigned> samples;  // interleaved, row-major
};

class PnmReader {
 public:
  PnmReader(const std::string& bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

  unsigned next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      throw IoError(name_ + ": malformed header");
    }
    unsigned long v = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      v = v * 10 + static_cast<unsigned long>(bytes_[pos_++] - '0');
      if (v > 1u << 30) throw IoError(name_ + ": header value out of range");
    }
    return static_cast<unsigned>(v);
  }

  // Binary payload starts after exactly one whitespace byte.
  std::size_t payload_offset() const { return pos_ + 1; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::string name_;
  std::size_t pos_ = 2;
};

RawImage read_pnm(const std::string& bytes, const std::string& name) {
  if (bytes.size() < 2 || bytes[0] != 'P') throw IoError(name + ": not a PNM file");
  const char kind = bytes[1];
  if (kind != '2' && kind != '3' && kind != '5' && kind != '6') {
    throw IoError(name + ": unsupported PNM variant P" + std::string(1, kind));
  }
  PnmReader reader(bytes, name);
  RawImage img;
  img.channels = (kind == '3' || kind == '6') ? 3 : 1;
  img.cols = reader.next_int();
  img.rows = reader.next_int();
  img.maxval = reader.next_int();
  if (img.rows == 0 || img.cols == 0 || img.maxval == 0 || img.maxval > 65535) {
    throw IoError(name + ": invalid dimensions or maxval");
  }
  const std::size_t count = img.rows * img.cols * img.channels;
  img.samples.resize(count);
  if (kind == '2' || kind == '3') {
    for (std::size_t i = 0; i < count; ++i) img.samples[i] = reader.next_int();
  } else {
    const std::size_t width = img.maxval > 255 ? 2 : 1;
    const std::size_t offset = reader.payload_offset();
    if (offset + count * width > bytes.size()) throw IoError(name + ": truncated pixel data");
    for (std::size_t i = 0; i < count; ++i) {
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + offset + i * width);
      img.samples[i] = width == 2 ? (unsigned{p[0]} << 8) | p[1] : p[0];
    }
  }
  return img;
}

RawImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError(path.string() + ": " + image.message);
  }
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(path.string() + ": " + image.message);
  }
  RawImage img;
  img.channels = gray ? 1 : 3;
  img.rows = image.height;
  img.cols = image.width;
  img.samples.assign(buffer.begin(), buffer.end());
  return img;
}

bool has_extension(const std::filesystem::path& path, const char* ext) {
  std::string e = path.extension().string();
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ext;
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  const RawImage raw = has_extension(path, ".png") ? read_png(path)
                                                   : read_pnm(read_text_file(path), path.string());
  Tensor out({raw.channels, raw.rows, raw.cols});
  const float scale = 1.0f / static_cast<float>(raw.maxval);
  for (std::size_t y = 0; y < raw.rows; ++y) {
    for (std::size_t x = 0; x < raw.cols; ++x) {
      for (std::size_t c = 0; c < raw.channels; ++c) {
        out(c, y, x) = static_cast<float>(raw.samples[(y * raw.cols + x) * raw.channels + c]) * scale;
      }
    }
  }
  return out;
}

void write_pnm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || (image.channels() != 1 && image.channels() != 3)) {
    throw ShapeError("write_pnm expects a (1,H,W) or (3,H,W) tensor, got " +
                     shape_to_string(image.shape()));
  }
  std::string out = (image.channels() == 3 ? "P6\n" : "P5\n") + std::to_string(image.width()) +
                    " " + std::to_string(image.height()) + "\n255\n";
  for (std::size_t y = 0; y < image.height(); ++y) {
    for (std::size_t x = 0; x < image.width(); ++x) {
      for (std::size_t c = 0; c < image.channels(); ++c) {
        const float v = std::clamp(image(c, y, x), 0.0f, 1.0f);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
      }
    }
  }
  write_text_file(path, out);
}

Tensor resize_nearest(const Tensor& image, std::size_t rows, std::size_t cols) {
  if (image.height() == rows && image.width() == cols) return image;
  Tensor out({image.channels(), rows, cols});
  for (std::size_t c = 0; c < image.channels(); ++c) {
    for (std::size_t y = 0; y < rows; ++y) {
      for (std::size_t x = 0; x < cols; ++x) {
        out(c, y, x) = image(c, y * image.height() / rows, x * image.width() / cols);
      }
    }
  }
  return out;
}

BinaryMask read_mask_pgm(const std::filesystem::path& path) {
  const RawImage raw = read_pnm(read_text_file(path), path.string());
  if (raw.channels != 1) throw IoError(path.string() + ": mask must be a single-channel PGM");
  if (raw.maxval != 255) throw IoError(path.string() + ": mask must be 8-bit (maxval 255)");
  BinaryMask mask = BinaryMask::zeros(raw.rows, raw.cols);
  for (std::size_t y = 0; y < raw.rows; ++y) {
    for (std::size_t x = 0; x < raw.cols; ++x) mask.set(y, x, raw.samples[y * raw.cols + x] >= 128);
  }
  return mask;
}

std::string mask_to_pgm(const BinaryMask& mask) {
  std::string out = "P5\n" + std::to_string(mask.cols()) + " " + std::to_string(mask.rows()) + "\n255\n";
  for (std::size_t y = 0; y < mask.rows(); ++y) {
    for (std::size_t x = 0; x < mask.cols(); ++x) out.push_back(mask(y, x) ? '\xff' : '\0');
  }
  return out;
}

void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& mask) {
  write_text_file(path, mask_to_pgm(mask));
}

BinaryMask parse_mask_rle(const std::string& json_text) {
  using nlohmann::json;
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("mask JSON is invalid: ") + e.what());
  }
  for (const char* key : {"height", "width", "runs"}) {
    if (!root.contains(key)) throw IoError(std::string("mask JSON: missing '") + key + "'");
  }
  const auto rows = root["height"].get<std::size_t>();
  const auto cols = root["width"].get<std::size_t>();
  bool value = root.value("start", 0) != 0;
  BinaryMask mask = BinaryMask::zeros(rows, cols);
  std::size_t index = 0;
  for (const auto& run : root["runs"]) {
    const auto n = run.get<std::size_t>();
    if (index + n > rows * cols) throw IoError("mask JSON: runs exceed height*width");
    for (std::size_t i = 0; i < n; ++i, ++index) mask.set(index / cols, index % cols, value);
    value = !value;
  }
  if (index != rows * cols) throw IoError("mask JSON: runs cover fewer than height*width cells");
  return mask;
}

std::string mask_to_rle(const BinaryMask& mask) {
  nlohmann::json runs = nlohmann::json::array();
  const std::size_t n = mask.size();
  const bool start = n > 0 && mask(0, 0);
  bool value = start;
  std::size_t length = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool cell = mask(i / mask.cols(), i % mask.cols());
    if (cell != value) {
      runs.push_back(length);
      value = cell;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  nlohmann::json root = {{"height", mask.rows()}, {"width", mask.cols()},
                         {"start", start ? 1 : 0}, {"runs", runs}};
  return root.dump();
}

BinaryMask load_mask(const std::string& argument) {
  if (!argument.empty() && argument.front() == '{') return parse_mask_rle(argument);
  const std::filesystem::path path(argument);
  if (has_extension(path, ".json")) return parse_mask_rle(read_text_file(path));
  return read_mask_pgm(path);
}

}  // namespace convad
