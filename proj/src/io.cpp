#include "glt/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

namespace glt::io {

namespace {

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw FormatError("unexpected end of file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u8(std::ostream& out, std::uint8_t v) { put_le(out, v); }
void put_u16(std::ostream& out, std::uint16_t v) { put_le(out, v); }
void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
std::uint8_t get_u8(std::istream& in) { return get_le<std::uint8_t>(in); }
std::uint16_t get_u16(std::istream& in) { return get_le<std::uint16_t>(in); }
std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

void write_dataset(std::ostream& out, const datagen::Dataset& ds) {
  const auto& c = ds.config;
  out.write(kDatasetMagic, 4);
  put_u16(out, kDatasetVersion);
  put_u32(out, static_cast<std::uint32_t>(ds.samples.size()));
  put_u16(out, static_cast<std::uint16_t>(c.feat_dim));
  put_u16(out, static_cast<std::uint16_t>(c.n_classes));
  put_u16(out, static_cast<std::uint16_t>(c.n_attributes));
  put_u8(out, c.regime == datagen::AttrRegime::single ? 0 : 1);
  for (const auto& s : ds.samples) {
    put_u32(out, s.id);
    put_u16(out, s.y);
    if (c.regime == datagen::AttrRegime::single) {
      put_u16(out, s.attrs.at(0));
    } else {
      for (int v : datagen::attribute_vector(s, c.n_attributes))
        put_u8(out, static_cast<std::uint8_t>(v));
    }
    for (float f : s.x) put_f32(out, f);
  }
  if (!out) throw FormatError("failed writing dataset");
}

void write_dataset(const std::filesystem::path& path, const datagen::Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_dataset(out, ds);
}

datagen::Dataset read_dataset(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw FormatError("not a GLTD file (bad magic)");
  const auto version = get_u16(in);
  if (version != kDatasetVersion)
    throw FormatError("unsupported GLTD version " + std::to_string(version));
  datagen::Dataset ds;
  const auto n = get_u32(in);
  ds.config.feat_dim = get_u16(in);
  ds.config.n_classes = get_u16(in);
  ds.config.n_attributes = get_u16(in);
  const auto regime = get_u8(in);
  if (regime > 1) throw FormatError("bad regime byte");
  ds.config.regime = regime == 0 ? datagen::AttrRegime::single : datagen::AttrRegime::multi;
  ds.samples.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto& s = ds.samples[i];
    s.id = get_u32(in);
    if (s.id != i) throw FormatError("sample ids must be contiguous from 0");
    s.y = get_u16(in);
    if (s.y >= ds.config.n_classes) throw FormatError("class label out of range");
    if (regime == 0) {
      const auto a = get_u16(in);
      if (a >= ds.config.n_attributes) throw FormatError("attribute index out of range");
      s.attrs = {a};
    } else {
      for (int a = 0; a < ds.config.n_attributes; ++a) {
        const auto bit = get_u8(in);
        if (bit > 1) throw FormatError("attribute flags must be 0 or 1");
        if (bit) s.attrs.push_back(static_cast<std::uint16_t>(a));
      }
    }
    s.x.resize(ds.config.feat_dim);
    for (auto& f : s.x) f = get_f32(in);
  }
  return ds;
}

datagen::Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_dataset(in);
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr);
  std::ostringstream ss;
  for (unsigned int i = 0; i < len; ++i)
    ss << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return ss.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_text(path)); }

}  // namespace glt::io
