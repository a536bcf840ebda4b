#include "stseg/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>

#include "stseg/error.hpp"
#include "stseg/image_io.hpp"
#include "stseg/procedural.hpp"
#include "stseg/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stseg {
namespace {

std::string sample_id(const std::string& split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d", index);
  return split + "_" + buf;
}

void prepare_split_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir / "manifest.json") && !force) {
    throw ValidationError("refusing to overwrite existing manifest " + (dir / "manifest.json").string() +
                          " (pass --force)");
  }
  std::error_code ec;
  if (force) {
    fs::remove_all(dir / "images", ec);
    fs::remove_all(dir / "labels", ec);
  }
  fs::create_directories(dir / "images", ec);
  if (ec) throw IoError("cannot create " + (dir / "images").string() + ": " + ec.message());
  fs::create_directories(dir / "labels", ec);
  if (ec) throw IoError("cannot create " + (dir / "labels").string() + ": " + ec.message());
}

json corruption_to_json(const std::optional<CorruptionSpec>& c) {
  if (!c) return nullptr;
  return json{{"kind", std::string(corruption_name(c->kind))}, {"severity", c->severity}, {"seed", c->seed}};
}

std::optional<CorruptionSpec> corruption_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  CorruptionSpec s;
  s.kind = corruption_from_name(j.at("kind").get<std::string>());
  s.severity = j.at("severity").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  validate(s);
  return s;
}

std::vector<std::string> class_names() { return {kTerrainClassNames.begin(), kTerrainClassNames.end()}; }

}  // namespace

void save_manifest(const std::string& path, const Manifest& m) {
  json j;
  j["format"] = "stseg-dataset";
  j["version"] = m.version;
  j["split"] = m.split;
  j["height"] = m.height;
  j["width"] = m.width;
  j["num_classes"] = m.num_classes;
  j["class_names"] = m.class_names;
  j["normalization"] = {{"mean", m.normalization.mean}, {"std", m.normalization.std}};
  json samples = json::array();
  for (const auto& s : m.samples) {
    samples.push_back({{"id", s.id},
                       {"seed", s.seed},
                       {"domain_tag", s.domain_tag},
                       {"corruption", corruption_to_json(s.corruption)},
                       {"clean_id", s.clean_id},
                       {"image", s.image},
                       {"label", s.label}});
  }
  j["samples"] = std::move(samples);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest " + path);
  json j;
  try {
    j = json::parse(in);
    if (j.at("format") != "stseg-dataset") throw ValidationError(path + ": not a dataset manifest");
    Manifest m;
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw ValidationError(path + ": unsupported manifest version " + std::to_string(m.version));
    }
    m.split = j.at("split").get<std::string>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.num_classes = j.at("num_classes").get<int>();
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    m.normalization.mean = j.at("normalization").at("mean").get<std::array<double, 3>>();
    m.normalization.std = j.at("normalization").at("std").get<std::array<double, 3>>();
    for (const auto& s : j.at("samples")) {
      SampleRecord r;
      r.id = s.at("id").get<std::string>();
      r.seed = s.at("seed").get<std::uint64_t>();
      r.domain_tag = s.at("domain_tag").get<std::string>();
      r.corruption = corruption_from_json(s.at("corruption"));
      r.clean_id = s.at("clean_id").get<std::string>();
      r.image = s.at("image").get<std::string>();
      r.label = s.at("label").get<std::string>();
      m.samples.push_back(std::move(r));
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed manifest: " + e.what());
  }
}

void validate(const DataConfig& cfg) {
  if (cfg.height < 32 || cfg.width < 32) throw ValidationError("data: resolution must be at least 32x32");
  if (cfg.height % 16 != 0 || cfg.width % 16 != 0) throw ValidationError("data: resolution must be a multiple of 16");
  if (cfg.train < 1 || cfg.val < 1) throw ValidationError("data: train and val must be >= 1");
  if (cfg.unseen < 0 || cfg.realistic < 0 || cfg.corrupt_count < 0) {
    throw ValidationError("data: counts must be non-negative");
  }
  for (const auto& d : cfg.unseen_domains) (void)unseen_domain(d);
  for (int s : cfg.severities) {
    if (s < 1 || s > kNumSeverities) throw ValidationError("data: severities must be in 1..5");
  }
}

Normalization measure_normalization(const std::vector<Tensor<float>>& images) {
  std::array<double, 3> sum{}, sq{};
  double n = 0.0;
  for (const auto& img : images) {
    for (int c = 0; c < 3; ++c) {
      for (float v : img.plane(0, c)) {
        sum[c] += v;
        sq[c] += static_cast<double>(v) * v;
      }
    }
    n += static_cast<double>(img.shape().plane());
  }
  Normalization norm;
  if (n == 0.0) return norm;
  for (int c = 0; c < 3; ++c) {
    norm.mean[c] = sum[c] / n;
    norm.std[c] = std::sqrt(std::max(sq[c] / n - norm.mean[c] * norm.mean[c], 1e-12));
  }
  return norm;
}

Manifest generate_split(const std::string& root, const std::string& split, const std::string& domain_tag, int count,
                        int height, int width, std::uint64_t master_seed, const Normalization& norm, bool force) {
  const fs::path dir = fs::path(root) / split;
  prepare_split_dir(dir, force);
  Manifest m;
  m.split = split;
  m.height = height;
  m.width = width;
  m.class_names = class_names();
  m.normalization = norm;
  const bool realistic = domain_tag == "realistic";
  SceneConfig scene;
  scene.height = height;
  scene.width = width;
  if (!realistic) scene.domain = domain_by_tag(domain_tag);
  for (int i = 0; i < count; ++i) {
    SampleRecord r;
    r.id = sample_id(split, i);
    r.seed = derive_seed(master_seed, "scene." + split, static_cast<std::uint64_t>(i));
    r.domain_tag = domain_tag;
    r.clean_id = r.id;
    r.image = "images/" + r.id + ".png";
    if (realistic) {
      Rng dom_rng(derive_seed(r.seed, "domain"));
      scene.domain = randomized_domain(dom_rng);
    }
    const SegSample s = generate_scene(r.seed, scene);
    write_png_rgb((dir / r.image).string(), s.image);
    if (!realistic) {
      r.label = "labels/" + r.id + ".png";
      write_png_labels((dir / r.label).string(), s.labels);
    }
    m.samples.push_back(std::move(r));
  }
  save_manifest((dir / "manifest.json").string(), m);
  return m;
}

Manifest build_corrupted_set(const std::string& root, const std::string& clean_split, const std::string& out_split,
                             const std::vector<CorruptionKind>& kinds, const std::vector<int>& severities,
                             std::uint64_t master_seed, bool force, int limit) {
  const fs::path clean_dir = fs::path(root) / clean_split;
  const fs::path clean_manifest = clean_dir / "manifest.json";
  if (!fs::exists(clean_manifest)) throw ValidationError("clean split not found: " + clean_manifest.string());
  const Manifest clean = load_manifest(clean_manifest.string());
  const fs::path dir = fs::path(root) / out_split;
  prepare_split_dir(dir, force);
  Manifest m;
  m.split = out_split;
  m.height = clean.height;
  m.width = clean.width;
  m.num_classes = clean.num_classes;
  m.class_names = clean.class_names;
  m.normalization = clean.normalization;
  const int n = limit < 0 ? static_cast<int>(clean.samples.size())
                          : std::min(limit, static_cast<int>(clean.samples.size()));
  for (int i = 0; i < n; ++i) {
    const SampleRecord& src = clean.samples[i];
    if (src.label.empty()) throw ValidationError("build_corrupted_set: clean split has unlabeled sample " + src.id);
    const Tensor<float> image = read_png_rgb((clean_dir / src.image).string());
    const LabelMap labels = read_png_labels((clean_dir / src.label).string());
    for (CorruptionKind kind : kinds) {
      for (int severity : severities) {
        CorruptionSpec spec{kind, severity, derive_seed(master_seed, "corrupt." + src.id)};
        validate(spec);
        SampleRecord r;
        r.id = src.id + "__" + std::string(corruption_name(kind)) + "_s" + std::to_string(severity);
        r.seed = src.seed;
        r.domain_tag = src.domain_tag;
        r.corruption = spec;
        r.clean_id = src.id;
        r.image = "images/" + r.id + ".png";
        r.label = "labels/" + r.id + ".png";
        write_png_rgb((dir / r.image).string(), corrupt(image, spec));
        write_png_labels((dir / r.label).string(), labels);
        m.samples.push_back(std::move(r));
      }
    }
  }
  save_manifest((dir / "manifest.json").string(), m);
  return m;
}

void generate_dataset(const DataConfig& cfg, std::uint64_t master_seed, bool force) {
  validate(cfg);
  const std::vector<std::string> splits = [&] {
    std::vector<std::string> s{"train", "val", "realistic", "val_c"};
    for (const auto& d : cfg.unseen_domains) s.push_back("unseen_" + d);
    return s;
  }();
  if (!force) {
    for (const auto& s : splits) {
      if (fs::exists(fs::path(cfg.root) / s / "manifest.json")) {
        throw ValidationError("refusing to overwrite existing dataset split '" + s + "' under " + cfg.root +
                              " (pass --force)");
      }
    }
  }
  Manifest train = generate_split(cfg.root, "train", "source", cfg.train, cfg.height, cfg.width, master_seed,
                                  Normalization{}, force);
  // normalization is measured on the stored (8-bit) training images
  const LoadedSplit loaded = load_split(cfg.root, "train");
  const Normalization norm = measure_normalization(loaded.images);
  train.normalization = norm;
  save_manifest((fs::path(cfg.root) / "train" / "manifest.json").string(), train);
  generate_split(cfg.root, "val", "source", cfg.val, cfg.height, cfg.width, master_seed, norm, force);
  for (const auto& d : cfg.unseen_domains) {
    generate_split(cfg.root, "unseen_" + d, d, cfg.unseen, cfg.height, cfg.width, master_seed, norm, force);
  }
  if (cfg.realistic > 0) {
    generate_split(cfg.root, "realistic", "realistic", cfg.realistic, cfg.height, cfg.width, master_seed, norm, force);
  }
  build_corrupted_set(cfg.root, cfg.corrupt_source, "val_c", cfg.corruptions, cfg.severities, master_seed, force,
                      cfg.corrupt_count);
}

LoadedSplit load_split(const std::string& root, const std::string& split) {
  const fs::path dir = fs::path(root) / split;
  LoadedSplit out;
  out.manifest = load_manifest((dir / "manifest.json").string());
  out.images.reserve(out.manifest.samples.size());
  bool labeled = !out.manifest.samples.empty() && !out.manifest.samples.front().label.empty();
  for (const auto& s : out.manifest.samples) {
    Tensor<float> img = read_png_rgb((dir / s.image).string());
    if (img.height() != out.manifest.height || img.width() != out.manifest.width) {
      throw ValidationError("image " + s.image + " does not match the manifest resolution");
    }
    out.images.push_back(std::move(img));
    if (labeled) {
      if (s.label.empty()) throw ValidationError("split " + split + " mixes labeled and unlabeled samples");
      LabelMap l = read_png_labels((dir / s.label).string());
      for (int id : l.ids) {
        if (id >= out.manifest.num_classes) throw ValidationError("label " + s.label + " has out-of-range class id");
      }
      out.labels.push_back(std::move(l));
    }
  }
  return out;
}

std::vector<Tensor<float>> load_image_folder(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("image folder not found: " + dir);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationError("no PNG images in " + dir);
  std::vector<Tensor<float>> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_png_rgb(f));
  return out;
}

Tensor<float> stack_images(const std::vector<Tensor<float>>& images, const std::vector<int>& indices) {
  if (indices.empty()) throw ValidationError("stack_images: empty selection");
  const Shape4 s = images.at(indices.front()).shape();
  Tensor<float> out(static_cast<int>(indices.size()), s.channels, s.height, s.width);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& img = images.at(indices[k]);
    if (img.channels() != s.channels || img.height() != s.height || img.width() != s.width) {
      throw ValidationError("stack_images: images differ in size");
    }
    std::copy(img.item(0).begin(), img.item(0).end(), out.item(static_cast<int>(k)).begin());
  }
  return out;
}

LabelMap stack_labels(const std::vector<LabelMap>& labels, const std::vector<int>& indices) {
  if (indices.empty()) throw ValidationError("stack_labels: empty selection");
  const LabelMap& first = labels.at(indices.front());
  LabelMap out(static_cast<int>(indices.size()), first.height, first.width);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& l = labels.at(indices[k]);
    if (l.height != first.height || l.width != first.width) throw ValidationError("stack_labels: size mismatch");
    std::copy(l.item(0).begin(), l.item(0).end(), out.item(static_cast<int>(k)).begin());
  }
  return out;
}

Tensor<float> normalize(const Tensor<float>& images, const Normalization& norm) {
  if (images.channels() != 3) throw ValidationError("normalize: expected 3 channels");
  Tensor<float> out(images.shape());
  for (int b = 0; b < images.batch(); ++b) {
    for (int c = 0; c < 3; ++c) {
      const auto src = images.plane(b, c);
      auto dst = out.plane(b, c);
      const float m = static_cast<float>(norm.mean[c]);
      const float inv = static_cast<float>(1.0 / norm.std[c]);
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - m) * inv;
    }
  }
  return out;
}

}  // namespace stseg
