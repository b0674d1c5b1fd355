#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace asdbank {

/// Shape of one layer's activations for one clip: time frames, frequency
/// bins, channels.
struct Dims {
  std::uint32_t t = 1;
  std::uint32_t f = 1;
  std::uint32_t c = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(t) * f * c;
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// One clip's per-layer activation tensor, row-major with C fastest, then F,
/// then T.
struct EmbeddingTensor {
  std::string clip_id;
  std::uint32_t layer = 0;
  Dims dims;
  std::vector<float> data;

  float at(std::size_t t, std::size_t f, std::size_t c) const {
    return data[(t * dims.f + f) * dims.c + c];
  }

  friend bool operator==(const EmbeddingTensor&, const EmbeddingTensor&) = default;
};

// Throws Error{invariant} for bad dims/length, Error{non_finite} for NaN/Inf.
void check_tensor(const EmbeddingTensor& tensor);

namespace emb1 {

inline constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
inline constexpr std::uint16_t kVersion = 1;
inline constexpr std::uint8_t kDtypeFloat32 = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 2 + 1 + 4 * 4;

struct Header {
  std::uint16_t version = kVersion;
  std::uint8_t dtype = kDtypeFloat32;
  std::uint32_t layer = 0;
  Dims dims;
};

std::vector<std::byte> encode(const EmbeddingTensor& tensor);

// The clip id is not stored in the file; callers supply it.
EmbeddingTensor decode(std::span<const std::byte> bytes, std::string clip_id);

Header decode_header(std::span<const std::byte> bytes);

}  // namespace emb1

/// root/<clip_id>/layerNN.emb
std::filesystem::path embedding_path(const std::filesystem::path& root,
                                     const std::string& clip_id,
                                     std::uint32_t layer);

std::filesystem::path write_embedding(const EmbeddingTensor& tensor,
                                      const std::filesystem::path& root);

/// Reads a tensor back; the clip id is taken from the parent directory name.
EmbeddingTensor read_embedding(const std::filesystem::path& path);

/// Reads and validates only the fixed-size header plus the file size.
emb1::Header read_embedding_header(const std::filesystem::path& path);

// Shared little-endian helpers, also used by bank persistence.
namespace le {

void put_u16(std::vector<std::byte>& out, std::uint16_t v);
void put_u32(std::vector<std::byte>& out, std::uint32_t v);
void put_f32(std::vector<std::byte>& out, float v);
std::uint16_t get_u16(std::span<const std::byte> in, std::size_t offset);
std::uint32_t get_u32(std::span<const std::byte> in, std::size_t offset);
float get_f32(std::span<const std::byte> in, std::size_t offset);

}  // namespace le

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path,
                      std::span<const std::byte> bytes);
void write_file_text(const std::filesystem::path& path, const std::string& text);

}  // namespace asdbank
