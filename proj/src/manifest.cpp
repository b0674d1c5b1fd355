#include "asdbank/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "asdbank/error.hpp"

namespace asdbank {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view to_string(Domain d) {
  return d == Domain::source ? "source" : "target";
}

std::string_view to_string(Split s) {
  return s == Split::train ? "train" : "test";
}

std::string_view to_string(Label l) {
  switch (l) {
    case Label::normal: return "normal";
    case Label::anomalous: return "anomalous";
    case Label::unknown: return "unknown";
  }
  return "unknown";
}

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw Error(ErrorCode::parse, "bad domain '" + std::string(s) + "'");
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw Error(ErrorCode::parse, "bad split '" + std::string(s) + "'");
}

Label parse_label(std::string_view s) {
  if (s == "normal") return Label::normal;
  if (s == "anomalous") return Label::anomalous;
  if (s == "unknown") return Label::unknown;
  throw Error(ErrorCode::parse, "bad label '" + std::string(s) + "'");
}

const ClipMeta* Manifest::find(std::string_view clip_id) const {
  auto it = std::find_if(clips.begin(), clips.end(),
                         [&](const ClipMeta& c) { return c.clip_id == clip_id; });
  return it == clips.end() ? nullptr : &*it;
}

std::optional<Dims> Manifest::dims_for(std::uint32_t layer) const {
  for (const auto& ld : embedding_dims) {
    if (ld.layer == layer) return ld.dims;
  }
  return std::nullopt;
}

bool Manifest::has_layer(std::uint32_t layer) const {
  return std::find(layers_available.begin(), layers_available.end(), layer) !=
         layers_available.end();
}

std::vector<std::string> Manifest::machine_types() const {
  std::vector<std::string> out;
  for (const auto& c : clips) {
    if (std::find(out.begin(), out.end(), c.machine_type) == out.end()) {
      out.push_back(c.machine_type);
    }
  }
  return out;
}

void check_manifest(const Manifest& m) {
  if (m.format_version != Manifest::kFormatVersion) {
    throw Error(ErrorCode::unsupported_version,
                "manifest format_version " + std::to_string(m.format_version) +
                    " is not supported");
  }
  std::unordered_set<std::string> seen;
  for (const auto& c : m.clips) {
    if (!seen.insert(c.clip_id).second) {
      throw Error(ErrorCode::duplicate_id, "duplicate clip_id '" + c.clip_id + "'");
    }
    if (c.split == Split::train && c.label != Label::normal) {
      throw Error(ErrorCode::invariant, "train clip '" + c.clip_id + "' is labeled " +
                                            std::string(to_string(c.label)) +
                                            "; training data must be normal");
    }
  }
  std::set<std::uint32_t> with_dims;
  for (const auto& ld : m.embedding_dims) {
    if (!with_dims.insert(ld.layer).second) {
      throw Error(ErrorCode::invariant,
                  "embedding_dims lists layer " + std::to_string(ld.layer) + " twice");
    }
    if (ld.dims.t == 0 || ld.dims.f == 0 || ld.dims.c == 0) {
      throw Error(ErrorCode::invariant,
                  "embedding_dims for layer " + std::to_string(ld.layer) + " has a zero dimension");
    }
  }
  for (auto layer : m.layers_available) {
    if (!with_dims.count(layer)) {
      throw Error(ErrorCode::invariant,
                  "layer " + std::to_string(layer) + " has no embedding_dims entry");
    }
  }
}

namespace {

template <typename T>
T get_field(const json& obj, const char* key) {
  if (!obj.contains(key)) {
    throw Error(ErrorCode::parse, std::string("manifest is missing field '") + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse, std::string("manifest field '") + key + "': " + e.what());
  }
}

}  // namespace

Manifest parse_manifest(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::parse, "manifest root must be an object");

  Manifest m;
  m.format_version = get_field<int>(doc, "format_version");
  m.layers_available = get_field<std::vector<std::uint32_t>>(doc, "layers_available");
  for (const auto& entry : get_field<json>(doc, "embedding_dims")) {
    const auto dims = get_field<std::vector<std::uint32_t>>(entry, "dims");
    if (dims.size() != 3) throw Error(ErrorCode::parse, "embedding_dims.dims must be [T, F, C]");
    m.embedding_dims.push_back({get_field<std::uint32_t>(entry, "layer"),
                                Dims{dims[0], dims[1], dims[2]}});
  }
  for (const auto& entry : get_field<json>(doc, "clips")) {
    ClipMeta c;
    c.clip_id = get_field<std::string>(entry, "clip_id");
    c.machine_type = get_field<std::string>(entry, "machine_type");
    c.section = get_field<std::string>(entry, "section");
    c.domain = parse_domain(get_field<std::string>(entry, "domain"));
    c.split = parse_split(get_field<std::string>(entry, "split"));
    c.label = parse_label(get_field<std::string>(entry, "label"));
    c.source_path = entry.value("source_path", std::string{});
    m.clips.push_back(std::move(c));
  }
  check_manifest(m);
  return m;
}

std::string manifest_to_json(const Manifest& m) {
  json doc;
  doc["format_version"] = m.format_version;
  doc["layers_available"] = m.layers_available;
  json dims = json::array();
  for (const auto& ld : m.embedding_dims) {
    dims.push_back({{"layer", ld.layer}, {"dims", {ld.dims.t, ld.dims.f, ld.dims.c}}});
  }
  doc["embedding_dims"] = std::move(dims);
  json clips = json::array();
  for (const auto& c : m.clips) {
    clips.push_back({{"clip_id", c.clip_id},
                     {"machine_type", c.machine_type},
                     {"section", c.section},
                     {"domain", to_string(c.domain)},
                     {"split", to_string(c.split)},
                     {"label", to_string(c.label)},
                     {"source_path", c.source_path}});
  }
  doc["clips"] = std::move(clips);
  return doc.dump(2) + "\n";
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open manifest '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

void save_manifest(const Manifest& m, const fs::path& path) {
  check_manifest(m);
  write_file_text(path, manifest_to_json(m));
}

std::string_view to_string(ValidationProblem::Kind k) {
  switch (k) {
    case ValidationProblem::Kind::missing_file: return "missing_file";
    case ValidationProblem::Kind::dims_mismatch: return "dims_mismatch";
    case ValidationProblem::Kind::unreadable: return "unreadable";
  }
  return "unknown";
}

ValidationReport validate_dataset(const Manifest& m, const fs::path& root) {
  ValidationReport report;
  for (const auto& clip : m.clips) {
    ++report.counts[{clip.machine_type, clip.domain, clip.split}];
    for (auto layer : m.layers_available) {
      const Dims expected = *m.dims_for(layer);
      fs::path path;
      try {
        path = embedding_path(root, clip.clip_id, layer);
      } catch (const Error& e) {
        report.problems.push_back(
            {ValidationProblem::Kind::unreadable, clip.clip_id, layer, e.what()});
        continue;
      }
      if (!fs::exists(path)) {
        report.problems.push_back({ValidationProblem::Kind::missing_file, clip.clip_id, layer,
                                   path.string()});
        continue;
      }
      try {
        const auto header = read_embedding_header(path);
        if (header.dims != expected || header.layer != layer) {
          std::ostringstream msg;
          msg << "header layer " << header.layer << " dims " << header.dims.t << "x"
              << header.dims.f << "x" << header.dims.c << ", manifest expects layer " << layer
              << " dims " << expected.t << "x" << expected.f << "x" << expected.c;
          report.problems.push_back(
              {ValidationProblem::Kind::dims_mismatch, clip.clip_id, layer, msg.str()});
        }
      } catch (const Error& e) {
        report.problems.push_back(
            {ValidationProblem::Kind::unreadable, clip.clip_id, layer, e.what()});
      }
    }
  }
  return report;
}

std::string ValidationReport::to_json() const {
  json doc;
  doc["ok"] = ok();
  json probs = json::array();
  for (const auto& p : problems) {
    probs.push_back({{"kind", to_string(p.kind)},
                     {"clip_id", p.clip_id},
                     {"layer", p.layer},
                     {"detail", p.detail}});
  }
  doc["problems"] = std::move(probs);
  json rows = json::array();
  for (const auto& [key, n] : counts) {
    const auto& [machine, domain, split] = key;
    rows.push_back({{"machine_type", machine},
                    {"domain", to_string(domain)},
                    {"split", to_string(split)},
                    {"count", n}});
  }
  doc["counts"] = std::move(rows);
  return doc.dump(2) + "\n";
}

}  // namespace asdbank
