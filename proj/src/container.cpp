#include "bnf/container.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bnf {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

void put_header(std::vector<uint8_t>& out, const Shape& s, uint8_t dtype) {
  out.push_back('B');
  out.push_back('N');
  out.push_back('T');
  out.push_back('1');
  out.push_back(static_cast<uint8_t>(s.rank()));
  for (size_t i = 0; i < s.rank(); ++i) put_u32(out, s[i]);
  out.push_back(dtype);
}

struct Reader {
  const std::vector<uint8_t>& b;
  size_t pos = 0;

  uint8_t u8() {
    if (pos >= b.size()) throw std::runtime_error("container: truncated file");
    return b[pos++];
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(u8()) << (8 * i);
    return v;
  }
  uint64_t u64() {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(u8()) << (8 * i);
    return v;
  }
  float f32() {
    const uint32_t bits = u32();
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
  }
};

std::vector<uint8_t> encode(const Tensor& t) {
  std::vector<uint8_t> out;
  put_header(out, t.shape(), 0);
  for (size_t i = 0; i < t.size(); ++i) put_f32(out, static_cast<float>(t[i]));
  return out;
}

std::vector<uint8_t> encode(const FixedTensor& t) {
  std::vector<uint8_t> out;
  put_header(out, t.shape(), 1);
  out.push_back(static_cast<uint8_t>(t.bit_width()));
  if (t.bit_width() <= 8) {
    for (size_t i = 0; i < t.size(); ++i) out.push_back(static_cast<uint8_t>(t[i]));
  } else {
    for (size_t i = 0; i < t.size(); ++i) {
      out.push_back(static_cast<uint8_t>(t[i] & 0xff));
      out.push_back(static_cast<uint8_t>(t[i] >> 8));
    }
  }
  return out;
}

std::vector<uint8_t> encode(const BitPlaneTensor& t) {
  std::vector<uint8_t> out;
  put_header(out, t.base_shape(), 2);
  out.push_back(static_cast<uint8_t>(t.bit_width()));
  const uint32_t hh = t.base_shape()[0], ww = t.base_shape()[1], cc = t.base_shape()[2];
  const uint32_t planes = cc * static_cast<uint32_t>(t.bit_width());
  // Contiguous repack: the in-memory form pads each pixel row to a word
  // boundary, the file form does not.
  uint64_t word = 0;
  int used = 0;
  std::vector<uint64_t> packed;
  for (uint32_t h = 0; h < hh; ++h) {
    for (uint32_t w = 0; w < ww; ++w) {
      for (uint32_t p = 0; p < planes; ++p) {
        if (t.bits().get(h, w, p)) word |= uint64_t{1} << used;
        if (++used == 64) {
          packed.push_back(word);
          word = 0;
          used = 0;
        }
      }
    }
  }
  if (used > 0) packed.push_back(word);
  for (uint64_t wv : packed) put_u64(out, wv);
  return out;
}

}  // namespace

std::vector<uint8_t> container_bytes(const ContainerTensor& t) {
  return std::visit([](const auto& v) { return encode(v); }, t);
}

namespace {
void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("container: cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("container: write failed: " + path);
}
}  // namespace

void write_container(const std::string& path, const Tensor& t) { write_file(path, encode(t)); }
void write_container(const std::string& path, const FixedTensor& t) { write_file(path, encode(t)); }
void write_container(const std::string& path, const BitPlaneTensor& t) { write_file(path, encode(t)); }

ContainerTensor read_container(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("container: cannot open: " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  Reader r{bytes};
  if (bytes.size() < 4 || bytes[0] != 'B' || bytes[1] != 'N' || bytes[2] != 'T' ||
      bytes[3] != '1') {
    throw std::runtime_error("container: bad magic in " + path);
  }
  r.pos = 4;
  const uint8_t rank = r.u8();
  if (rank < 1 || rank > 4) throw std::runtime_error("container: bad rank");
  std::vector<uint32_t> dims(rank);
  for (auto& d : dims) d = r.u32();
  const Shape shape(dims);
  const uint8_t dtype = r.u8();
  switch (dtype) {
    case 0: {
      Tensor t(shape);
      for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(r.f32());
      return t;
    }
    case 1: {
      const int m = r.u8();
      FixedTensor t(shape, m);
      if (m <= 8) {
        for (size_t i = 0; i < t.size(); ++i) t.set(i, r.u8());
      } else {
        for (size_t i = 0; i < t.size(); ++i) {
          const uint16_t lo = r.u8();
          const uint16_t hi = r.u8();
          t.set(i, static_cast<uint16_t>(lo | (hi << 8)));
        }
      }
      return t;
    }
    case 2: {
      const int m = r.u8();
      if (shape.rank() != 3) throw std::runtime_error("container: packed dtype needs rank 3");
      BitPlaneTensor t(shape, m);
      const uint32_t planes = shape[2] * static_cast<uint32_t>(m);
      uint64_t word = 0;
      int left = 0;
      for (uint32_t h = 0; h < shape[0]; ++h) {
        for (uint32_t w = 0; w < shape[1]; ++w) {
          for (uint32_t p = 0; p < planes; ++p) {
            if (left == 0) {
              word = r.u64();
              left = 64;
            }
            if (word & 1u) t.bits().set(h, w, p, true);
            word >>= 1;
            --left;
          }
        }
      }
      return t;
    }
    default:
      throw std::runtime_error("container: unknown dtype " + std::to_string(dtype));
  }
}

}  // namespace bnf
