#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "nextact/common.hpp"

// Little-endian primitive readers/writers shared by the checkpoint and
// dataset containers. Explicit byte assembly keeps files portable even on
// exotic hosts.
namespace nextact::lio {

inline void write_u8(std::ostream& os, uint8_t v) {
  os.write(reinterpret_cast<const char*>(&v), 1);
}

inline uint8_t read_u8(std::istream& is) {
  uint8_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 1);
  return v;
}

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline void write_i32(std::ostream& os, int32_t v) {
  write_u32(os, static_cast<uint32_t>(v));
}

inline int32_t read_i32(std::istream& is) { return static_cast<int32_t>(read_u32(is)); }

inline void write_f32(std::ostream& os, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(os, bits);
}

inline float read_f32(std::istream& is) {
  const uint32_t bits = read_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_str(std::istream& is) {
  const uint32_t len = read_u32(is);
  std::string s(len, '\0');
  is.read(s.data(), len);
  return s;
}

}  // namespace nextact::lio
