#include "asdbank/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "asdbank/embedding.hpp"
#include "asdbank/error.hpp"
#include "asdbank/random.hpp"

namespace asdbank {

namespace fs = std::filesystem;

namespace {

std::vector<double> unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::string clip_name(std::size_t machine, Split split, Domain domain, Label label,
                      std::size_t index) {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "machine%02zu_%s_%s_%s_%04zu", machine,
                std::string(to_string(split)).c_str(), std::string(to_string(domain)).c_str(),
                std::string(to_string(label)).c_str(), index);
  return buf;
}

}  // namespace

SyntheticData synthesize(const SyntheticSpec& spec) {
  if (spec.machines == 0 || spec.dim == 0 || spec.source_n == 0 || spec.test_n == 0 ||
      spec.layers.empty()) {
    throw Error(ErrorCode::out_of_range,
                "synthetic spec needs machines, dim, source_n, test_n and layers >= 1");
  }
  for (auto layer : spec.layers) {
    if (layer == 0) throw Error(ErrorCode::out_of_range, "layers are numbered from 1");
  }

  SyntheticData data;
  data.tensors.resize(spec.layers.size());
  Manifest& manifest = data.manifest;
  manifest.layers_available = spec.layers;
  for (auto layer : spec.layers) {
    manifest.embedding_dims.push_back({layer, Dims{1, 1, static_cast<std::uint32_t>(spec.dim)}});
  }

  const std::vector<Domain> domains =
      spec.target_n > 0 ? std::vector<Domain>{Domain::source, Domain::target}
                        : std::vector<Domain>{Domain::source};

  for (std::size_t m = 0; m < spec.machines; ++m) {
    char machine_name[32];
    std::snprintf(machine_name, sizeof(machine_name), "machine%02zu", m);

    Rng dir_rng(mix_seed(spec.seed, {m, 0xD1u}));
    const auto target_dir = unit_vector(dir_rng, spec.dim);
    const auto anomaly_src = unit_vector(dir_rng, spec.dim);
    const auto anomaly_tgt = unit_vector(dir_rng, spec.dim);

    struct Plan {
      Split split;
      Domain domain;
      Label label;
      std::size_t count;
    };
    std::vector<Plan> plans;
    for (auto d : domains) {
      plans.push_back({Split::train, d, Label::normal,
                       d == Domain::source ? spec.source_n : spec.target_n});
    }
    for (auto d : domains) {
      plans.push_back({Split::test, d, Label::normal, spec.test_n});
      plans.push_back({Split::test, d, Label::anomalous, spec.test_n});
    }

    std::uint64_t clip_counter = 0;
    for (const auto& plan : plans) {
      for (std::size_t i = 0; i < plan.count; ++i, ++clip_counter) {
        ClipMeta clip;
        clip.clip_id = clip_name(m, plan.split, plan.domain, plan.label, i);
        clip.machine_type = machine_name;
        clip.section = "00";
        clip.domain = plan.domain;
        clip.split = plan.split;
        clip.label = plan.label;
        manifest.clips.push_back(clip);

        for (std::size_t li = 0; li < spec.layers.size(); ++li) {
          const auto layer = spec.layers[li];
          Rng rng(mix_seed(spec.seed, {m, layer, clip_counter}));
          EmbeddingTensor tensor;
          tensor.clip_id = clip.clip_id;
          tensor.layer = layer;
          tensor.dims = Dims{1, 1, static_cast<std::uint32_t>(spec.dim)};
          tensor.data.resize(spec.dim);
          const auto& anomaly_dir = plan.domain == Domain::source ? anomaly_src : anomaly_tgt;
          for (std::size_t d = 0; d < spec.dim; ++d) {
            double x = rng.normal();
            if (plan.domain == Domain::target) x += spec.target_shift * target_dir[d];
            if (plan.label == Label::anomalous) x += spec.anomaly_offset * anomaly_dir[d];
            tensor.data[d] = static_cast<float>(x);
          }
          data.tensors[li].push_back(std::move(tensor));
        }
      }
    }
  }
  return data;
}

Manifest gen_synthetic(const SyntheticSpec& spec, const fs::path& root) {
  auto data = synthesize(spec);
  for (const auto& layer : data.tensors) {
    for (const auto& tensor : layer) write_embedding(tensor, root);
  }
  save_manifest(data.manifest, root / "manifest.json");
  return std::move(data.manifest);
}

}  // namespace asdbank
