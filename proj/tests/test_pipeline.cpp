#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "stseg/checkpoint.hpp"
#include "stseg/config.hpp"
#include "stseg/evaluator.hpp"
#include "stseg/procedural.hpp"
#include "stseg/report.hpp"
#include "stseg/texture_encoder.hpp"
#include "stseg/trainer.hpp"
#include "test_util.hpp"

using namespace stseg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

NetworkConfig small_net() {
  NetworkConfig n;
  n.widths = {4, 8, 8, 8};
  n.embed_dim = 8;
  return n;
}

TextureConfig small_texture(const std::string& path) {
  TextureConfig t;
  t.checkpoint = path;
  t.classes = 3;
  t.patch = 32;
  t.train_per_class = 8;
  t.val_per_class = 4;
  t.epochs = 1;
  t.batch = 8;
  t.min_accuracy = 0.0;
  return t;
}

// One dataset and one texture checkpoint shared by every trainer test.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new stseg::test::TempDir("pipeline");
    Config c = base();
    generate_dataset(c.data, c.seed, false);
    pretrain_texture_encoder(c.texture, c.model, c.seed).save(c.texture.checkpoint);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static Config base() {
    Config c;
    c.seed = 5;
    c.data.root = dir_->str("data");
    c.data.height = 32;
    c.data.width = 32;
    c.data.train = 6;
    c.data.val = 4;
    c.data.unseen = 2;
    c.data.realistic = 4;
    c.data.corrupt_count = 2;
    c.data.corruptions = {CorruptionKind::kContrast, CorruptionKind::kGaussianNoise};
    c.data.severities = {1, 5};
    c.model = small_net();
    c.texture = small_texture(dir_->str("texture.bin"));
    c.train.steps = 6;
    c.train.batch_size = 2;
    c.train.unlabeled_batch_size = 2;
    c.train.buffer_capacity = 4;
    c.train.gamma_table_points = 200;
    c.train.checkpoint_every = 2;
    c.train.log_every = 1;
    c.eval.splits = {"val", "val_c"};
    c.eval.batch = 4;
    return c;
  }

  static TrainOptions opts(const std::string& name) {
    TrainOptions o;
    o.run_dir = dir_->str("runs/" + name);
    o.verbose = false;
    o.label = name;
    return o;
  }

  static stseg::test::TempDir* dir_;
};

stseg::test::TempDir* Pipeline::dir_ = nullptr;

void expect_same_losses(const std::vector<StepRecord>& a, const std::vector<StepRecord>& b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].step, b[i].step);
    EXPECT_EQ(a[i].loss.ce, b[i].loss.ce) << "step " << a[i].step;
    EXPECT_EQ(a[i].loss.style, b[i].loss.style);
    EXPECT_EQ(a[i].loss.align, b[i].loss.align);
    EXPECT_EQ(a[i].loss.tex, b[i].loss.tex);
    EXPECT_EQ(a[i].loss.total, b[i].loss.total);
  }
}

std::vector<float> flat_params(const SegNetwork& net) {
  std::vector<float> out;
  for (const auto* p : net.parameters()) out.insert(out.end(), p->value.begin(), p->value.end());
  return out;
}

}  // namespace

TEST(ConfigSchema, DefaultsMatchReferenceHyperparameters) {
  const Config c;
  EXPECT_EQ(c.train.optimizer.kind, "adamw");
  EXPECT_EQ(c.train.optimizer.lr, 6e-5);
  EXPECT_EQ(c.train.optimizer.betas, (std::array<double, 2>{0.9, 0.999}));
  EXPECT_EQ(c.train.optimizer.weight_decay, 0.01);
  EXPECT_EQ(c.train.schedule.kind, "poly");
  EXPECT_EQ(c.train.schedule.power, 1.0);
  EXPECT_EQ(c.train.batch_size, 8);
  EXPECT_EQ(c.train.unlabeled_batch_size, 8);
  EXPECT_EQ(c.train.steps, 8000);
  EXPECT_EQ(c.train.ema_alpha, 0.7);
  EXPECT_EQ(c.train.styled_layers, (std::vector<int>{1, 2}));
  EXPECT_EQ(c.train.texture_weights, (std::array<double, 4>{0.05, 0.025, 0.01, 0.005}));
  EXPECT_EQ(c.train.checkpoint_every, 1000);
  EXPECT_TRUE(c.train.se());
  EXPECT_TRUE(c.train.tr);
  EXPECT_NO_THROW(validate(c));
}

TEST(ConfigSchema, JsonOverridesAndRoundTrip) {
  const Config c = config_from_json(R"({"seed": 9, "train": {"optimizer": {"lr": 0.001}, "se": false, "tr": false}})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.train.optimizer.lr, 0.001);
  EXPECT_EQ(c.train.style_mode, StyleMode::kNone);
  EXPECT_FALSE(c.train.tr);
  EXPECT_EQ(c.train.batch_size, 8);  // untouched keys keep their defaults

  const Config back = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(back), config_to_json(c));
  // the resolved snapshot lists every key, so a changed default is visible
  const auto j = json::parse(config_to_json(Config{}));
  EXPECT_EQ(j.at("train").at("optimizer").at("lr").get<double>(), 6e-5);
  EXPECT_TRUE(j.contains("seed"));
}

TEST(ConfigSchema, RejectsUnknownKeysAndContradictions) {
  EXPECT_THROW(config_from_json(R"({"trian": {}})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"train": {"lr": 0.1}})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"train": {"se": true, "style_mode": "random"}})"), ValidationError);
  EXPECT_NO_THROW(config_from_json(R"({"train": {"se": true, "style_mode": "generated"}})"));
  EXPECT_THROW(config_from_json(R"({"train": {"style_mode": "fancy"}})"), ValidationError);
  EXPECT_THROW(config_from_json("{not json"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"train": {"styled_layers": [5]}})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"texture": {"classes": 1}})"), ValidationError);
}

TEST(ConfigSchema, AblationRows) {
  const auto rows = default_ablation_rows();
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows.front().label, "Baseline");
  EXPECT_EQ(rows.back().label, "Baseline + SE + TR");
  EXPECT_EQ(row_slug("Baseline + SE + TR"), "baseline_se_tr");
  std::set<std::string> slugs;
  for (const auto& r : rows) slugs.insert(row_slug(r.label));
  EXPECT_EQ(slugs.size(), 6u);
}

TEST(Checkpoint, RoundTripIsExact) {
  stseg::test::TempDir dir("ckpt");
  SegNetwork net(small_net());
  Rng rng(1);
  net.init(rng);
  Normalization norm;
  norm.mean = {0.1, 0.2, 0.3};
  norm.std = {0.4, 0.5, 0.6};
  save_model(dir.str("m.ckpt"), net, norm, R"({"step": 3})");
  const auto ck = load_model(dir.str("m.ckpt"));
  EXPECT_EQ(ck.config, small_net());
  EXPECT_EQ(ck.normalization, norm);
  EXPECT_EQ(json::parse(ck.meta_json).at("step").get<int>(), 3);
  EXPECT_EQ(flat_params(ck.net), flat_params(net));

  std::ofstream(dir.str("bad.ckpt"), std::ios::binary) << "STSEGCKX garbage";
  EXPECT_THROW(load_model(dir.str("bad.ckpt")), Error);
  EXPECT_THROW(load_model(dir.str("missing.ckpt")), IoError);
  // truncated file
  const auto bytes = read_file(dir.path() / "m.ckpt");
  std::ofstream(dir.str("short.ckpt"), std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_model(dir.str("short.ckpt")), Error);
}

namespace {

EvaluationResults fake_results() {
  ConfusionMatrix cm(8);
  Rng rng(3);
  accumulate_confusion(cm, stseg::test::random_labels(1, 8, 8, 8, rng), stseg::test::random_labels(1, 8, 8, 8, rng));
  std::vector<std::string> names(kTerrainClassNames.begin(), kTerrainClassNames.end());
  EvaluationResults r;
  r.fingerprint = "0123456789abcdef";
  r.splits.push_back(make_report(cm, Grouping{}, "val", r.fingerprint, 1, names));
  for (auto k : kAllCorruptions) {
    for (int s = 1; s <= 5; ++s) {
      r.corruptions[std::string(corruption_name(k))][s] =
          make_report(cm, Grouping{}, std::string(corruption_name(k)), r.fingerprint, 1, names);
    }
  }
  return r;
}

}  // namespace

TEST(Report, JsonRoundTripAndVersion) {
  const auto r = fake_results();
  const auto text = results_to_json(r);
  EXPECT_EQ(results_from_json(text), r);
  auto j = json::parse(text);
  EXPECT_EQ(j.at("version").get<int>(), kReportVersion);
  j["version"] = kReportVersion + 1;
  EXPECT_THROW(results_from_json(j.dump()), ValidationError);
  ASSERT_TRUE(r.corrupted_miou().has_value());
  EXPECT_DOUBLE_EQ(*r.corrupted_miou(), r.splits[0].miou);
}

TEST(Report, SeverityChartHasOneCurvePerKind) {
  const auto svg = severity_chart_svg(fake_results(), false);
  auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = svg.find(needle); pos != std::string::npos; pos = svg.find(needle, pos + 1)) ++n;
    return n;
  };
  EXPECT_EQ(count("class=\"curve\""), 8u);
  EXPECT_EQ(count("class=\"xtick\""), 5u);
  for (auto k : kAllCorruptions) EXPECT_NE(svg.find("data-kind=\"" + std::string(corruption_name(k)) + "\""), std::string::npos);
}

TEST(Report, EmitWritesAllArtifacts) {
  stseg::test::TempDir dir("report");
  emit_report(fake_results(), dir.str("out"), "Baseline");
  for (const char* f : {"report.json", "severity_miou.svg", "severity_macc.svg", "summary.md"}) {
    EXPECT_TRUE(fs::exists(dir.path() / "out" / f)) << f;
  }
  EXPECT_EQ(load_results(dir.str("out/report.json")), fake_results());
}

TEST(Report, MarkdownTables) {
  std::vector<AggregateRow> rows;
  for (const auto& spec : default_ablation_rows()) {
    AggregateRow r;
    r.label = spec.label;
    r.runs = 3;
    r.clean_miou = 0.5;
    r.corrupted_miou = 0.4;
    rows.push_back(r);
  }
  const auto md = aggregate_table_markdown(rows);
  std::size_t lines = 0, pos = 0;
  while ((pos = md.find('\n', pos)) != std::string::npos) ++lines, ++pos;
  EXPECT_EQ(lines, 2u + 6u);  // header, separator, six rows
  EXPECT_NE(md.find("mIoU"), std::string::npos);
  EXPECT_NE(md.find("mAcc"), std::string::npos);

  const auto ct = corruption_table_markdown({{"Baseline", fake_results()}});
  for (auto k : kAllCorruptions) EXPECT_NE(ct.find(corruption_label(k)), std::string::npos);
}

TEST(Report, FingerprintTracksContent) {
  stseg::test::TempDir dir("fp");
  std::ofstream(dir.str("a")) << "abc";
  std::ofstream(dir.str("b")) << "abc";
  std::ofstream(dir.str("c")) << "abd";
  EXPECT_EQ(file_fingerprint(dir.str("a")), file_fingerprint(dir.str("b")));
  EXPECT_NE(file_fingerprint(dir.str("a")), file_fingerprint(dir.str("c")));
  EXPECT_EQ(file_fingerprint(dir.str("a")).size(), 16u);
}

TEST(TextureEncoderTest, PretrainingIsDeterministicAndManifoldWellFormed) {
  stseg::test::TempDir dir("tex");
  const auto cfg = small_texture(dir.str("a.bin"));
  pretrain_texture_encoder(cfg, small_net(), 4).save(dir.str("a.bin"));
  pretrain_texture_encoder(cfg, small_net(), 4).save(dir.str("b.bin"));
  EXPECT_EQ(read_file(dir.path() / "a.bin"), read_file(dir.path() / "b.bin"));

  const auto enc = TextureEncoder::load(dir.str("a.bin"));
  EXPECT_EQ(enc.meta().class_names, (std::vector<std::string>{"grass", "soil", "rock"}));

  const auto zeros = extract_manifold(enc, Tensor<float>(2, 3, 32, 32));
  for (const auto& f : zeros) EXPECT_TRUE(f.all_finite());

  // grass vs rock patches, the second duplicated
  const auto corpus = make_texture_corpus(cfg, 4);
  const auto grass = std::find(corpus.train_labels.begin(), corpus.train_labels.end(), 0) - corpus.train_labels.begin();
  const auto rock = std::find(corpus.train_labels.begin(), corpus.train_labels.end(), 2) - corpus.train_labels.begin();
  Tensor<float> x(3, 3, 32, 32);
  std::copy(corpus.train_images[grass].values().begin(), corpus.train_images[grass].values().end(), x.item(0).begin());
  std::copy(corpus.train_images[rock].values().begin(), corpus.train_images[rock].values().end(), x.item(1).begin());
  std::copy(corpus.train_images[rock].values().begin(), corpus.train_images[rock].values().end(), x.item(2).begin());
  const auto f = extract_manifold(enc, x);
  SegNetwork seg(small_net());
  Rng rng(0);
  seg.init(rng);
  const auto seg_feats = seg.forward_source(normalize(x, Normalization{})).features;
  for (int s = 0; s < kNumStages; ++s) {
    EXPECT_EQ(f[s].shape(), seg_feats[s].shape()) << "stage " << s + 1;
    double d = 0.0;
    for (std::size_t i = 0; i < f[s].shape().numel() / 3; ++i) {
      const double diff = f[s].item(0)[i] - f[s].item(1)[i];
      d += diff * diff;
    }
    EXPECT_GT(d, 0.0) << "stage " << s + 1;
    EXPECT_TRUE(std::equal(f[s].item(1).begin(), f[s].item(1).end(), f[s].item(2).begin()));
  }
}

TEST(TextureEncoderTest, RejectsDegenerateCorpusAndUnreachableAccuracy) {
  auto cfg = small_texture("unused.bin");
  cfg.classes = 1;
  EXPECT_THROW(pretrain_texture_encoder(cfg, small_net(), 1), ValidationError);
  cfg.classes = 3;
  cfg.min_accuracy = 1.0;
  cfg.train_per_class = 1;
  cfg.val_per_class = 20;
  EXPECT_THROW(pretrain_texture_encoder(cfg, small_net(), 1), TrainingError);
}

TEST_F(Pipeline, BaselineHasNoAuxiliaryLosses) {
  Config c = base();
  c.train.style_mode = StyleMode::kNone;
  c.train.tr = false;
  const auto r = train(c, opts("baseline"));
  ASSERT_EQ(r.log.size(), 6u);
  for (const auto& rec : r.log) {
    EXPECT_EQ(rec.loss.style, 0.0);
    EXPECT_EQ(rec.loss.align, 0.0);
    EXPECT_EQ(rec.loss.tex, 0.0);
    EXPECT_EQ(rec.loss.total, rec.loss.ce);
    EXPECT_FALSE(rec.augmented);
  }
  // the learning rate follows the polynomial decay
  EXPECT_DOUBLE_EQ(r.log[0].lr, c.train.optimizer.lr);
  EXPECT_DOUBLE_EQ(r.log[3].lr, c.train.optimizer.lr * (1.0 - 3.0 / 6.0));
}

TEST_F(Pipeline, RunDirectoryIsSelfDescribingAndDeterministic) {
  const Config c = base();
  const auto a = train(c, opts("full_a"));
  const auto b = train(c, opts("full_b"));
  ASSERT_EQ(a.log.size(), 6u);
  expect_same_losses(a.log, b.log);
  for (const auto& rec : a.log) {
    EXPECT_GT(rec.loss.tex, 0.0);
    EXPECT_TRUE(std::isfinite(rec.loss.total));
  }
  // styles are generated once the buffer has been flushed at least once
  EXPECT_FALSE(a.log.front().augmented);
  EXPECT_TRUE(a.log.back().augmented);
  EXPECT_GT(a.log.back().loss.style, 0.0);

  const fs::path run = a.run_dir;
  for (const char* f : {"config.json", "run.json", "losses.csv", "checkpoints/final.ckpt", "reports/report.json"}) {
    EXPECT_TRUE(fs::exists(run / f)) << f;
  }
  const Config snap = load_config((run / "config.json").string());
  EXPECT_EQ(snap.seed, c.seed);
  EXPECT_EQ(config_to_json(snap), config_to_json(c));
  expect_same_losses(read_loss_log((run / "losses.csv").string()), a.log);

  // re-evaluating from the run directory reproduces the stored report
  EvalOptions eo;
  eo.data_root = snap.data.root;
  eo.splits = snap.eval.splits;
  eo.batch = 3;  // batch size must not change the result
  const auto again = evaluate_checkpoint((run / "checkpoints/final.ckpt").string(), eo, "", "again");
  const auto stored = load_results((run / "reports/report.json").string());
  EXPECT_EQ(results_to_json(again), results_to_json(stored));
  ASSERT_TRUE(a.evaluation.has_value());
  EXPECT_EQ(*a.evaluation, stored);
  EXPECT_EQ(stored.corruptions.size(), 2u);
  EXPECT_EQ(stored.corruptions.at("contrast").size(), 2u);

  EXPECT_THROW(train(c, opts("full_a")), ValidationError);
}

TEST_F(Pipeline, ResumeMatchesUninterruptedRun) {
  const Config c = base();
  const auto full = train(c, opts("resume_ref"));
  auto o = opts("resume");
  o.stop_after = 3;
  const auto part = train(c, o);
  EXPECT_TRUE(part.final_checkpoint.empty());
  o.stop_after = -1;
  o.resume = true;
  const auto rest = train(c, o);
  expect_same_losses(read_loss_log(rest.run_dir + "/losses.csv"), full.log);
  EXPECT_EQ(flat_params(load_model(rest.final_checkpoint).net), flat_params(load_model(full.final_checkpoint).net));
}

TEST_F(Pipeline, NanLossHaltsWithLastGoodCheckpoint) {
  const Config c = base();
  auto o = opts("nan");
  o.inject_nan_at = 3;
  o.evaluate_at_end = false;
  EXPECT_THROW(train(c, o), NumericError);
  const fs::path last_good = fs::path(o.run_dir) / "checkpoints" / "last_good.ckpt";
  ASSERT_TRUE(fs::exists(last_good));
  const auto ck = load_model(last_good.string());
  for (float v : flat_params(ck.net)) ASSERT_TRUE(std::isfinite(v));
}

TEST_F(Pipeline, TextureRegularizationNeedsCheckpoint) {
  Config c = base();
  c.texture.checkpoint = dir_->str("does_not_exist.bin");
  EXPECT_THROW(train(c, opts("no_texture")), ValidationError);
  c.train.tr = false;
  auto o = opts("no_texture_ok");
  o.evaluate_at_end = false;
  EXPECT_NO_THROW(train(c, o));
}

TEST_F(Pipeline, OtherStyleModesTrain) {
  for (auto mode : {StyleMode::kRandom, StyleMode::kRealistic}) {
    Config c = base();
    c.train.style_mode = mode;
    c.train.tr = false;
    auto o = opts("mode_" + style_mode_name(mode));
    o.evaluate_at_end = false;
    const auto r = train(c, o);
    for (const auto& rec : r.log) {
      EXPECT_TRUE(rec.augmented);
      EXPECT_GT(rec.loss.style, 0.0);
      EXPECT_EQ(rec.loss.tex, 0.0);
    }
  }
}

TEST_F(Pipeline, EvaluationRejectsClassCountMismatch) {
  NetworkConfig n = small_net();
  n.num_classes = 5;
  SegNetwork net(n);
  Rng rng(2);
  net.init(rng);
  save_model(dir_->str("five.ckpt"), net, Normalization{});
  EvalOptions eo;
  eo.data_root = base().data.root;
  eo.splits = {"val"};
  EXPECT_THROW(evaluate_checkpoint(dir_->str("five.ckpt"), eo, "", "x"), ValidationError);
}

TEST_F(Pipeline, ToyModelFitsItsTrainingSplit) {
  Config c = base();
  c.train.style_mode = StyleMode::kNone;
  c.train.tr = false;
  c.train.steps = 800;
  c.train.batch_size = 6;
  c.train.optimizer.lr = 1e-2;
  c.train.optimizer.weight_decay = 0.0;
  c.train.checkpoint_every = 1000;
  c.eval.splits = {"train"};
  auto o = opts("fit");
  const auto r = train(c, o);
  ASSERT_TRUE(r.evaluation.has_value());
  EXPECT_GT(r.evaluation->splits.at(0).miou, 0.8);
}
