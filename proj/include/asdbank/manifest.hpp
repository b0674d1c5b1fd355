#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "asdbank/embedding.hpp"

namespace asdbank {

enum class Domain { source, target };
enum class Split { train, test };
enum class Label { normal, anomalous, unknown };

std::string_view to_string(Domain d);
std::string_view to_string(Split s);
std::string_view to_string(Label l);
Domain parse_domain(std::string_view s);
Split parse_split(std::string_view s);
Label parse_label(std::string_view s);

struct ClipMeta {
  std::string clip_id;
  std::string machine_type;
  std::string section;
  Domain domain = Domain::source;
  Split split = Split::train;
  Label label = Label::normal;
  std::string source_path;

  friend bool operator==(const ClipMeta&, const ClipMeta&) = default;
};

struct LayerDims {
  std::uint32_t layer = 0;
  Dims dims;

  friend bool operator==(const LayerDims&, const LayerDims&) = default;
};

/// Dataset index. Immutable once loaded; clip order is file order.
struct Manifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::vector<ClipMeta> clips;
  std::vector<std::uint32_t> layers_available;
  std::vector<LayerDims> embedding_dims;

  const ClipMeta* find(std::string_view clip_id) const;
  std::optional<Dims> dims_for(std::uint32_t layer) const;
  bool has_layer(std::uint32_t layer) const;
  /// Machine types in first-appearance order.
  std::vector<std::string> machine_types() const;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

/// Throws Error{duplicate_id} or Error{invariant} when the manifest breaks
/// its rules.
void check_manifest(const Manifest& manifest);

Manifest parse_manifest(std::string_view json_text);
std::string manifest_to_json(const Manifest& manifest);

Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

struct ValidationProblem {
  enum class Kind { missing_file, dims_mismatch, unreadable };
  Kind kind;
  std::string clip_id;
  std::uint32_t layer = 0;
  std::string detail;
};

std::string_view to_string(ValidationProblem::Kind k);

struct ValidationReport {
  std::vector<ValidationProblem> problems;
  /// (machine_type, domain, split) -> clip count.
  std::map<std::tuple<std::string, Domain, Split>, std::size_t> counts;

  bool ok() const { return problems.empty(); }
  std::string to_json() const;
};

/// Checks every (clip, layer) file's header against the manifest dims.
/// Problems are collected, never thrown.
ValidationReport validate_dataset(const Manifest& manifest,
                                  const std::filesystem::path& root);

}  // namespace asdbank
