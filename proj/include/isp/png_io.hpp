#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace isp {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Png8 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // interleaved, 3 * w * h
};

struct Png16 {
  int width = 0, height = 0;
  std::vector<std::uint16_t> gray;  // w * h
};

Png8 read_png_rgb8(const std::string& path);
void write_png_rgb8(const std::string& path, const Png8& img);

Png16 read_png_gray16(const std::string& path);
void write_png_gray16(const std::string& path, const Png16& img);

}  // namespace isp
