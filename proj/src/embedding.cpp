#include "asdbank/embedding.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "asdbank/error.hpp"

namespace asdbank {

namespace fs = std::filesystem;

namespace le {

void put_u16(std::vector<std::byte>& out, std::uint16_t v) {
  out.push_back(static_cast<std::byte>(v & 0xFF));
  out.push_back(static_cast<std::byte>((v >> 8) & 0xFF));
}

void put_u32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::byte>((v >> shift) & 0xFF));
  }
}

void put_f32(std::vector<std::byte>& out, float v) {
  put_u32(out, std::bit_cast<std::uint32_t>(v));
}

std::uint16_t get_u16(std::span<const std::byte> in, std::size_t offset) {
  return static_cast<std::uint16_t>(std::to_integer<unsigned>(in[offset]) |
                                    (std::to_integer<unsigned>(in[offset + 1]) << 8));
}

std::uint32_t get_u32(std::span<const std::byte> in, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) {
    v = (v << 8) | std::to_integer<std::uint32_t>(in[offset + static_cast<std::size_t>(i)]);
  }
  return v;
}

float get_f32(std::span<const std::byte> in, std::size_t offset) {
  return std::bit_cast<float>(get_u32(in, offset));
}

}  // namespace le

void check_tensor(const EmbeddingTensor& tensor) {
  if (tensor.dims.t == 0 || tensor.dims.f == 0 || tensor.dims.c == 0) {
    throw Error(ErrorCode::invariant,
                "tensor '" + tensor.clip_id + "' has a zero dimension");
  }
  if (tensor.data.size() != tensor.dims.count()) {
    throw Error(ErrorCode::invariant,
                "tensor '" + tensor.clip_id + "' data length " +
                    std::to_string(tensor.data.size()) + " != T*F*C " +
                    std::to_string(tensor.dims.count()));
  }
  for (std::size_t i = 0; i < tensor.data.size(); ++i) {
    if (!std::isfinite(tensor.data[i])) {
      throw Error(ErrorCode::non_finite, "tensor '" + tensor.clip_id +
                                             "' has a non-finite value at index " +
                                             std::to_string(i));
    }
  }
}

namespace emb1 {

std::vector<std::byte> encode(const EmbeddingTensor& tensor) {
  check_tensor(tensor);
  std::vector<std::byte> out;
  out.reserve(kHeaderBytes + tensor.data.size() * 4);
  for (char ch : kMagic) out.push_back(static_cast<std::byte>(ch));
  le::put_u16(out, kVersion);
  out.push_back(static_cast<std::byte>(kDtypeFloat32));
  le::put_u32(out, tensor.layer);
  le::put_u32(out, tensor.dims.t);
  le::put_u32(out, tensor.dims.f);
  le::put_u32(out, tensor.dims.c);
  for (float v : tensor.data) le::put_f32(out, v);
  return out;
}

Header decode_header(std::span<const std::byte> bytes) {
  if (bytes.size() < kHeaderBytes) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
      throw Error(ErrorCode::bad_magic, "not an EMB1 file (bad magic)");
    }
    throw Error(ErrorCode::size_mismatch, "EMB1 header truncated: " +
                                              std::to_string(bytes.size()) + " bytes");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::bad_magic, "not an EMB1 file (bad magic)");
  }
  Header h;
  h.version = le::get_u16(bytes, 4);
  if (h.version != kVersion) {
    throw Error(ErrorCode::unsupported_version,
                "unsupported EMB1 version " + std::to_string(h.version));
  }
  h.dtype = std::to_integer<std::uint8_t>(bytes[6]);
  if (h.dtype != kDtypeFloat32) {
    throw Error(ErrorCode::unsupported_dtype,
                "unsupported EMB1 dtype code " + std::to_string(h.dtype));
  }
  h.layer = le::get_u32(bytes, 7);
  h.dims = {le::get_u32(bytes, 11), le::get_u32(bytes, 15), le::get_u32(bytes, 19)};
  if (h.dims.t == 0 || h.dims.f == 0 || h.dims.c == 0) {
    throw Error(ErrorCode::invariant, "EMB1 header has a zero dimension");
  }
  return h;
}

EmbeddingTensor decode(std::span<const std::byte> bytes, std::string clip_id) {
  const Header h = decode_header(bytes);
  const std::size_t expected = kHeaderBytes + h.dims.count() * 4;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::size_mismatch,
                "EMB1 payload for '" + clip_id + "' is " +
                    std::to_string(bytes.size() - kHeaderBytes) + " bytes, header dims need " +
                    std::to_string(h.dims.count() * 4));
  }
  EmbeddingTensor tensor;
  tensor.clip_id = std::move(clip_id);
  tensor.layer = h.layer;
  tensor.dims = h.dims;
  tensor.data.resize(h.dims.count());
  for (std::size_t i = 0; i < tensor.data.size(); ++i) {
    tensor.data[i] = le::get_f32(bytes, kHeaderBytes + 4 * i);
  }
  check_tensor(tensor);
  return tensor;
}

}  // namespace emb1

fs::path embedding_path(const fs::path& root, const std::string& clip_id,
                        std::uint32_t layer) {
  if (clip_id.empty() || clip_id == "." || clip_id == ".." ||
      clip_id.find_first_of("/\\") != std::string::npos) {
    throw Error(ErrorCode::invariant, "clip id '" + clip_id + "' is not a valid path component");
  }
  char name[32];
  std::snprintf(name, sizeof(name), "layer%02u.emb", layer);
  return root / clip_id / name;
}

std::vector<std::byte> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::byte> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()),
                           static_cast<std::streamsize>(size))) {
    throw Error(ErrorCode::io, "short read on '" + path.string() + "'");
  }
  return bytes;
}

void write_file_bytes(const fs::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::io, "cannot create '" + path.parent_path().string() + "'");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "write failed on '" + path.string() + "'");
}

void write_file_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::as_bytes(std::span(text.data(), text.size())));
}

fs::path write_embedding(const EmbeddingTensor& tensor, const fs::path& root) {
  const auto bytes = emb1::encode(tensor);
  const fs::path path = embedding_path(root, tensor.clip_id, tensor.layer);
  write_file_bytes(path, bytes);
  return path;
}

EmbeddingTensor read_embedding(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return emb1::decode(bytes, path.parent_path().filename().string());
}

emb1::Header read_embedding_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::vector<std::byte> head(emb1::kHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  const auto h = emb1::decode_header(head);
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw Error(ErrorCode::io, "cannot stat '" + path.string() + "'");
  if (size != emb1::kHeaderBytes + h.dims.count() * 4) {
    throw Error(ErrorCode::size_mismatch,
                "'" + path.string() + "' size does not match its header dims");
  }
  return h;
}

}  // namespace asdbank
