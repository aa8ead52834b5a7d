#include <cstring>
#include <fstream>

#include "tkg/tensor.hpp"

namespace tkg {

namespace {

constexpr char kMagic[6] = {'T', 'K', 'G', 'T', '1', '\n'};

void put_u16(std::ostream& out, std::uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

float get_f32(std::istream& in) {
  std::uint32_t bits = get_u32(in);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void save_tensor_archive(const std::string& path,
                         const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& nt : tensors) {
    put_u16(out, static_cast<std::uint16_t>(nt.name.size()));
    out.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
    out.put(static_cast<char>(nt.tensor.rank()));
    for (std::size_t d : nt.tensor.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : nt.tensor.data) put_f32(out, v);
  }
  if (!out) throw Error(ErrorKind::IoError, "write failed: " + path);
}

std::vector<NamedTensor> load_tensor_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path);
  char magic[6];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::FormatError, path + ": bad tensor archive magic");
  }
  const std::uint32_t count = get_u32(in);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = get_u16(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const int rank = in.get();
    if (rank < 0) throw Error(ErrorKind::FormatError, path + ": truncated archive");
    std::vector<std::size_t> shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = get_u32(in);
    Tensor t(shape);
    for (float& v : t.data) v = get_f32(in);
    if (!in) throw Error(ErrorKind::FormatError, path + ": truncated archive");
    tensors.push_back({std::move(name), std::move(t)});
  }
  return tensors;
}

}  // namespace tkg
