#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

#include "glt/datagen.hpp"

namespace glt::io {

// GLTD layout, all little-endian:
//   "GLTD" | version u16 | n_samples u32 | D u16 | K u16 | A u16 | regime u8
// then per sample: id u32 | y u16 | attrs | D x f32
// where attrs is one u16 index (single regime) or A bytes of 0/1 (multi).
inline constexpr char kDatasetMagic[4] = {'G', 'L', 'T', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 17;

void write_dataset(std::ostream& out, const datagen::Dataset& ds);
void write_dataset(const std::filesystem::path& path, const datagen::Dataset& ds);

// The returned dataset carries K, A, D and regime from the header; other
// generator fields keep their defaults and the direction matrices are empty.
datagen::Dataset read_dataset(std::istream& in);
datagen::Dataset read_dataset(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
// Pretty-printed with sorted keys and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Little-endian primitives.
void put_u8(std::ostream& out, std::uint8_t v);
void put_u16(std::ostream& out, std::uint16_t v);
void put_u32(std::ostream& out, std::uint32_t v);
void put_f32(std::ostream& out, float v);
std::uint8_t get_u8(std::istream& in);
std::uint16_t get_u16(std::istream& in);
std::uint32_t get_u32(std::istream& in);
float get_f32(std::istream& in);

}  // namespace glt::io
