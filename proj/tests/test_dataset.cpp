#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "stseg/dataset.hpp"
#include "stseg/image_io.hpp"
#include "stseg/procedural.hpp"
#include "stseg/seg_network.hpp"
#include "test_util.hpp"

using namespace stseg;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

DataConfig tiny_data(const std::string& root) {
  DataConfig cfg;
  cfg.root = root;
  cfg.height = 32;
  cfg.width = 32;
  cfg.train = 6;
  cfg.val = 4;
  cfg.unseen = 2;
  cfg.realistic = 3;
  cfg.corrupt_count = 2;
  cfg.corruptions = {CorruptionKind::kSnowNoise, CorruptionKind::kContrast};
  cfg.severities = {1, 5};
  return cfg;
}

}  // namespace

TEST(Scenes, DeterministicValidAndSizeChecked) {
  const SceneConfig sc;
  const auto a = generate_scene(42, sc);
  const auto b = generate_scene(42, sc);
  EXPECT_EQ(a.image.values(), b.image.values());
  EXPECT_EQ(a.labels.ids, b.labels.ids);
  EXPECT_NE(generate_scene(43, sc).image.values(), a.image.values());
  for (int id : a.labels.ids) ASSERT_TRUE(id >= 0 && id < kNumTerrainClasses);
  for (float v : a.image.values()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  SceneConfig small;
  small.height = 16;
  EXPECT_THROW(generate_scene(1, small), ValidationError);
}

TEST(Scenes, ClassHistogramCoversEveryClass) {
  std::array<double, kNumTerrainClasses> counts{};
  double total = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto s = generate_scene(derive_seed(7, "histogram", i), SceneConfig{});
    for (int id : s.labels.ids) counts[id] += 1;
    total += static_cast<double>(s.labels.ids.size());
  }
  for (int c = 0; c < kNumTerrainClasses; ++c) EXPECT_GE(counts[c] / total, 0.01) << kTerrainClassNames[c];
}

// External-shift testbed: stage-1 style statistics of unseen domains, under a fixed
// randomly initialized encoder, differ from the source domain's.
TEST(Scenes, UnseenDomainsShiftStageOneStyles) {
  SegNetwork net{NetworkConfig{}};
  Rng init(3);
  net.init(init);
  auto stage1_means = [&](const DomainStyle& dom, const std::string& tag) {
    SceneConfig sc;
    sc.domain = dom;
    Tensor<float> x(200, 3, 64, 64);
    for (int i = 0; i < 200; ++i) {
      const auto s = generate_scene(derive_seed(11, tag, i), sc);
      std::copy(s.image.values().begin(), s.image.values().end(), x.item(i).begin());
    }
    const auto st = compute_style(net.encoder().forward_stage(0, normalize(x, Normalization{}), nullptr));
    std::vector<std::vector<double>> per_channel(32);
    for (const auto& s : st) {
      for (int c = 0; c < 32; ++c) per_channel[c].push_back(s.mean[c]);
    }
    return per_channel;
  };
  const auto src = stage1_means(source_domain(), "source");
  for (const std::string tag : {"T", "D", "Y"}) {
    const auto tgt = stage1_means(unseen_domain(tag), tag);
    double ks = 0.0;
    for (int c = 0; c < 32; ++c) ks += ks_two_sample(src[c], tgt[c]);
    EXPECT_GT(ks / 32, 0.1) << "domain " << tag;
  }
  EXPECT_THROW(unseen_domain("Q"), ValidationError);
}

TEST(ImageIo, PngRoundTrip) {
  stseg::test::TempDir dir("png");
  Rng rng(1);
  Tensor<float> img(1, 3, 5, 7);
  for (auto& v : img.values()) v = static_cast<float>(uniform_int(rng, 256)) / 255.0f;
  write_png_rgb(dir.str("a.png"), img);
  EXPECT_EQ(read_png_rgb(dir.str("a.png")).values(), img.values());
  LabelMap y(1, 5, 7);
  for (auto& id : y.ids) id = uniform_int(rng, 8);
  write_png_labels(dir.str("l.png"), y);
  EXPECT_EQ(read_png_labels(dir.str("l.png")).ids, y.ids);
  EXPECT_THROW(read_png_rgb(dir.str("missing.png")), IoError);
  std::ofstream(dir.str("bad.png")) << "not a png";
  EXPECT_THROW(read_png_rgb(dir.str("bad.png")), IoError);
}

TEST(Dataset, GenerationIsReproducibleAndSplitsDisjoint) {
  stseg::test::TempDir a("gen_a"), b("gen_b");
  generate_dataset(tiny_data(a.str()), 7, false);
  generate_dataset(tiny_data(b.str()), 7, false);
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a.path()).string());
  }
  std::sort(files.begin(), files.end());
  ASSERT_FALSE(files.empty());
  for (const auto& f : files) EXPECT_EQ(read_file(a.path() / f), read_file(b.path() / f)) << f;

  std::set<std::string> ids;
  std::size_t n = 0;
  for (const std::string split : {"train", "val", "unseen_T", "unseen_D", "unseen_Y", "realistic"}) {
    const auto m = load_manifest((a.path() / split / "manifest.json").string());
    for (const auto& s : m.samples) ids.insert(s.id);
    n += m.samples.size();
  }
  EXPECT_EQ(ids.size(), n);
  const auto val_c = load_manifest((a.path() / "val_c" / "manifest.json").string());
  EXPECT_EQ(val_c.samples.size(), 2u * 2u * 2u);

  EXPECT_THROW(generate_dataset(tiny_data(a.str()), 7, false), ValidationError);
  EXPECT_NO_THROW(generate_dataset(tiny_data(a.str()), 7, true));
}

TEST(Dataset, ManifestRoundTripAndLoading) {
  stseg::test::TempDir dir("manifest");
  generate_dataset(tiny_data(dir.str()), 3, false);
  const auto train = load_split(dir.str(), "train");
  EXPECT_EQ(train.images.size(), 6u);
  EXPECT_EQ(train.labels.size(), 6u);
  const auto pool = load_split(dir.str(), "realistic");
  EXPECT_TRUE(pool.labels.empty());
  save_manifest(dir.str("copy.json"), train.manifest);
  EXPECT_EQ(load_manifest(dir.str("copy.json")), train.manifest);
  EXPECT_EQ(measure_normalization(train.images), train.manifest.normalization);
  EXPECT_THROW(load_split(dir.str(), "nope"), Error);

  const auto folder = load_image_folder((dir.path() / "train" / "images").string());
  EXPECT_EQ(folder.size(), 6u);
  const auto batch = stack_images(train.images, {2, 0});
  EXPECT_EQ(batch.shape(), (Shape4{2, 3, 32, 32}));
  EXPECT_TRUE(std::equal(batch.item(1).begin(), batch.item(1).end(), train.images[0].values().begin()));
  const auto labels = stack_labels(train.labels, {2, 0});
  EXPECT_EQ(labels.batch, 2);

  Normalization n;
  n.mean = {0.5, 0.25, 0.0};
  n.std = {0.5, 0.25, 2.0};
  Tensor<float> one(1, 3, 1, 1, 1.0f);
  const auto z = normalize(one, n);
  EXPECT_FLOAT_EQ(z.values()[0], 1.0f);
  EXPECT_FLOAT_EQ(z.values()[1], 3.0f);
  EXPECT_FLOAT_EQ(z.values()[2], 0.5f);
}

TEST(Dataset, ConfigValidation) {
  DataConfig cfg;
  cfg.height = 40;
  EXPECT_THROW(validate(cfg), ValidationError);
  cfg = DataConfig{};
  cfg.severities = {0};
  EXPECT_THROW(validate(cfg), ValidationError);
  cfg = DataConfig{};
  cfg.train = 0;
  EXPECT_THROW(validate(cfg), ValidationError);
}

TEST(Rng, NamedStreamsAreIndependentOfEachOther) {
  EXPECT_EQ(derive_seed(1, "a"), derive_seed(1, "a"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(1, "b"));
  EXPECT_NE(derive_seed(1, "a"), derive_seed(2, "a"));
  EXPECT_NE(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
  Rng r = make_stream(5, "x", 3);
  Rng s = make_stream(5, "x", 3);
  EXPECT_EQ(r(), s());
}
