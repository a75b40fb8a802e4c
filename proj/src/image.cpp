#include "int3d/image.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace int3d {
namespace {

std::uint32_t crc32_table_entry(std::uint32_t n) {
  std::uint32_t c = n;
  for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
  return c;
}

const std::array<std::uint32_t, 256>& crc_table() {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t n = 0; n < 256; ++n) t[n] = crc32_table_entry(n);
    return t;
  }();
  return table;
}

std::uint32_t crc32(const std::uint8_t* data, size_t len, std::uint32_t crc = 0xffffffffu) {
  for (size_t i = 0; i < len; ++i) crc = crc_table()[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc;
}

std::uint32_t adler32(const std::uint8_t* data, size_t len) {
  std::uint32_t a = 1, b = 0;
  for (size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<std::uint8_t>& payload) {
  std::vector<std::uint8_t> head;
  put_be32(head, std::uint32_t(payload.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  std::uint32_t crc = crc32(reinterpret_cast<const std::uint8_t*>(type), 4);
  crc = crc32(payload.data(), payload.size(), crc) ^ 0xffffffffu;
  f.write(type, 4);
  f.write(reinterpret_cast<const char*>(payload.data()), std::streamsize(payload.size()));
  std::vector<std::uint8_t> tail;
  put_be32(tail, crc);
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

}  // namespace

void write_png(const Image& img, const std::string& path) {
  require(img.channels == 1 || img.channels == 3, "write_png: 1 or 3 channels only");
  require(img.width > 0 && img.height > 0, "write_png: empty image");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_png: cannot open " + path);

  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, std::uint32_t(img.width));
  put_be32(ihdr, std::uint32_t(img.height));
  ihdr.push_back(8);                                  // bit depth
  ihdr.push_back(img.channels == 3 ? 2 : 0);          // color type
  ihdr.push_back(0);                                  // compression
  ihdr.push_back(0);                                  // filter
  ihdr.push_back(0);                                  // interlace
  write_chunk(f, "IHDR", ihdr);

  // raw scanlines: filter byte 0 + quantized samples
  size_t row_bytes = size_t(img.width) * img.channels;
  std::vector<std::uint8_t> raw;
  raw.reserve((row_bytes + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);
    const float* row = img.data.data() + size_t(y) * row_bytes;
    for (size_t i = 0; i < row_bytes; ++i) raw.push_back(quantize8(row[i]));
  }

  // zlib stream with stored deflate blocks
  std::vector<std::uint8_t> idat;
  idat.push_back(0x78);
  idat.push_back(0x01);
  size_t off = 0;
  while (off < raw.size()) {
    size_t len = std::min<size_t>(65535, raw.size() - off);
    bool last = off + len == raw.size();
    idat.push_back(last ? 1 : 0);
    idat.push_back(std::uint8_t(len & 0xff));
    idat.push_back(std::uint8_t(len >> 8));
    idat.push_back(std::uint8_t(~len & 0xff));
    idat.push_back(std::uint8_t((~len >> 8) & 0xff));
    idat.insert(idat.end(), raw.begin() + long(off), raw.begin() + long(off + len));
    off += len;
  }
  put_be32(idat, adler32(raw.data(), raw.size()));
  write_chunk(f, "IDAT", idat);
  write_chunk(f, "IEND", {});
  if (!f) throw IoError("write_png: write failed for " + path);
}

Image read_png(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_png: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
    throw IoError("read_png: not a PNG file: " + path);

  int width = 0, height = 0, channels = 0;
  std::vector<std::uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= bytes.size()) {
    std::uint32_t len = read_be32(&bytes[pos]);
    if (pos + 12 + len > bytes.size()) throw IoError("read_png: truncated chunk in " + path);
    const char* type = reinterpret_cast<const char*>(&bytes[pos + 4]);
    const std::uint8_t* payload = &bytes[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      width = int(read_be32(payload));
      height = int(read_be32(payload + 4));
      int depth = payload[8], color = payload[9], interlace = payload[12];
      if (depth != 8 || (color != 0 && color != 2) || interlace != 0)
        throw IoError("read_png: unsupported format in " + path);
      channels = color == 2 ? 3 : 1;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), payload, payload + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width == 0 || idat.size() < 2) throw IoError("read_png: missing IHDR/IDAT in " + path);

  // inflate: stored blocks only (the format this project writes)
  std::vector<std::uint8_t> raw;
  size_t p = 2;  // skip zlib header
  for (;;) {
    if (p >= idat.size()) throw IoError("read_png: truncated deflate stream in " + path);
    std::uint8_t header = idat[p++];
    if ((header & 0x06) != 0)
      throw IoError("read_png: only stored deflate blocks are supported: " + path);
    if (p + 4 > idat.size()) throw IoError("read_png: truncated stored block in " + path);
    size_t len = size_t(idat[p]) | (size_t(idat[p + 1]) << 8);
    p += 4;
    if (p + len > idat.size()) throw IoError("read_png: truncated stored block in " + path);
    raw.insert(raw.end(), idat.begin() + long(p), idat.begin() + long(p + len));
    p += len;
    if (header & 1) break;
  }

  size_t row_bytes = size_t(width) * channels;
  if (raw.size() != (row_bytes + 1) * size_t(height))
    throw IoError("read_png: scanline size mismatch in " + path);
  Image img(width, height, channels);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* row = raw.data() + size_t(y) * (row_bytes + 1);
    if (row[0] != 0) throw IoError("read_png: only filter 0 rows are supported: " + path);
    float* dst = img.data.data() + size_t(y) * row_bytes;
    for (size_t i = 0; i < row_bytes; ++i) dst[i] = float(row[1 + i]) / 255.0f;
  }
  return img;
}

}  // namespace int3d
