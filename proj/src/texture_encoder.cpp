#include "stseg/texture_encoder.hpp"

#include <algorithm>
#include <filesystem>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "stseg/binary_io.hpp"
#include "stseg/checkpoint.hpp"
#include "stseg/error.hpp"
#include "stseg/image_io.hpp"
#include "stseg/optimizer.hpp"
#include "stseg/procedural.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stseg {
namespace {

constexpr const char* kMagic = "STSEGTEX";

// Global average pool of the last stage: [B, C].
std::vector<float> pool(const Tensor<float>& x) {
  std::vector<float> out(static_cast<std::size_t>(x.batch()) * x.channels());
  const double inv = 1.0 / static_cast<double>(x.shape().plane());
  for (int b = 0; b < x.batch(); ++b) {
    for (int c = 0; c < x.channels(); ++c) {
      double s = 0.0;
      for (float v : x.plane(b, c)) s += v;
      out[static_cast<std::size_t>(b) * x.channels() + c] = static_cast<float>(s * inv);
    }
  }
  return out;
}

std::vector<float> head_forward(const std::vector<float>& pooled, int batch, int channels, const Parameter<float>& w,
                                const Parameter<float>& bias, int classes) {
  std::vector<float> logits(static_cast<std::size_t>(batch) * classes);
  for (int b = 0; b < batch; ++b) {
    for (int k = 0; k < classes; ++k) {
      double s = bias.value[k];
      for (int c = 0; c < channels; ++c) {
        s += static_cast<double>(w.value[static_cast<std::size_t>(k) * channels + c]) *
             pooled[static_cast<std::size_t>(b) * channels + c];
      }
      logits[static_cast<std::size_t>(b) * classes + k] = static_cast<float>(s);
    }
  }
  return logits;
}

void softmax_rows(std::vector<float>& v, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    float* row = v.data() + static_cast<std::size_t>(r) * cols;
    const float mx = *std::max_element(row, row + cols);
    double sum = 0.0;
    for (int k = 0; k < cols; ++k) sum += std::exp(static_cast<double>(row[k] - mx));
    for (int k = 0; k < cols; ++k) row[k] = static_cast<float>(std::exp(static_cast<double>(row[k] - mx)) / sum);
  }
}

TextureCorpus folder_corpus(const TextureConfig& cfg) {
  TextureCorpus corpus;
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(cfg.corpus_dir)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    corpus.class_names.push_back(dirs[k].filename().string());
    const auto images = load_image_folder(dirs[k].string());
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (images[i].height() != cfg.patch || images[i].width() != cfg.patch) {
        throw ValidationError("texture corpus: patches in " + dirs[k].string() + " must be " +
                              std::to_string(cfg.patch) + "x" + std::to_string(cfg.patch));
      }
      // every fifth patch is held out
      auto& imgs = i % 5 == 4 ? corpus.val_images : corpus.train_images;
      auto& labels = i % 5 == 4 ? corpus.val_labels : corpus.train_labels;
      imgs.push_back(images[i]);
      labels.push_back(static_cast<int>(k));
    }
  }
  if (corpus.class_names.size() < 2) throw ValidationError("texture corpus: need at least 2 class folders");
  return corpus;
}

}  // namespace

TextureCorpus make_texture_corpus(const TextureConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  if (!cfg.corpus_dir.empty()) return folder_corpus(cfg);
  TextureCorpus corpus;
  for (int k = 0; k < cfg.classes; ++k) corpus.class_names.emplace_back(kCorpusTextureNames[k]);
  for (int k = 0; k < cfg.classes; ++k) {
    for (int i = 0; i < cfg.train_per_class; ++i) {
      Rng rng = make_stream(seed, "texture.train." + std::to_string(k), static_cast<std::uint64_t>(i));
      corpus.train_images.push_back(corpus_patch(k, cfg.patch, rng));
      corpus.train_labels.push_back(k);
    }
    for (int i = 0; i < cfg.val_per_class; ++i) {
      Rng rng = make_stream(seed, "texture.val." + std::to_string(k), static_cast<std::uint64_t>(i));
      corpus.val_images.push_back(corpus_patch(k, cfg.patch, rng));
      corpus.val_labels.push_back(k);
    }
  }
  return corpus;
}

TextureEncoder::TextureEncoder(Encoder<float> encoder, Parameter<float> head_w, Parameter<float> head_b,
                               Normalization norm, Meta meta)
    : encoder_(std::move(encoder)),
      head_w_(std::move(head_w)),
      head_b_(std::move(head_b)),
      norm_(norm),
      meta_(std::move(meta)) {}

std::array<Tensor<float>, kNumStages> TextureEncoder::features(const Tensor<float>& images) const {
  std::array<Tensor<float>, kNumStages> out;
  Tensor<float> x = normalize(images, norm_);
  for (int s = 0; s < kNumStages; ++s) {
    out[s] = encoder_.forward_stage(s, s == 0 ? x : out[s - 1], nullptr);
  }
  return out;
}

Tensor<float> TextureEncoder::logits(const Tensor<float>& images) const {
  const auto feats = features(images);
  const Tensor<float>& last = feats[kNumStages - 1];
  const int classes = static_cast<int>(head_b_.size());
  const auto l = head_forward(pool(last), last.batch(), last.channels(), head_w_, head_b_, classes);
  Tensor<float> out(last.batch(), classes, 1, 1);
  std::copy(l.begin(), l.end(), out.data());
  return out;
}

void TextureEncoder::save(const std::string& path) const {
  json header;
  header["network"] = json::parse(network_config_json(config()));
  header["class_names"] = meta_.class_names;
  header["seed"] = meta_.seed;
  header["accuracy"] = meta_.accuracy;
  header["per_class_accuracy"] = meta_.per_class_accuracy;
  header["epochs"] = meta_.epochs;
  header["normalization"] = {{"mean", norm_.mean}, {"std", norm_.std}};
  std::error_code ec;
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path(), ec);
  BinaryWriter w(path);
  w.put_magic(kMagic);
  w.put<std::uint32_t>(kTextureCheckpointVersion);
  w.put_string(header.dump());
  write_parameters(w, encoder_.parameters());
  write_parameters(w, std::vector<const Parameter<float>*>{&head_w_, &head_b_});
  w.close();
}

TextureEncoder TextureEncoder::load(const std::string& path) {
  BinaryReader r(path);
  r.expect_magic(kMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kTextureCheckpointVersion) {
    throw ValidationError(path + ": unsupported texture checkpoint version " + std::to_string(version));
  }
  NetworkConfig net;
  Normalization norm;
  Meta meta;
  try {
    const json header = json::parse(r.get_string());
    net = network_config_from_json(header.at("network").dump());
    meta.class_names = header.at("class_names").get<std::vector<std::string>>();
    meta.seed = header.at("seed").get<std::uint64_t>();
    meta.accuracy = header.at("accuracy").get<double>();
    meta.per_class_accuracy = header.at("per_class_accuracy").get<std::vector<double>>();
    meta.epochs = header.at("epochs").get<int>();
    norm.mean = header.at("normalization").at("mean").get<std::array<double, 3>>();
    norm.std = header.at("normalization").at("std").get<std::array<double, 3>>();
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed texture checkpoint header: " + e.what());
  }
  Encoder<float> enc(net, "texture");
  read_parameters(r, enc.parameters(), path);
  const int classes = static_cast<int>(meta.class_names.size());
  Parameter<float> w("texture.head.weight", {classes, net.widths[kNumStages - 1]});
  Parameter<float> b("texture.head.bias", {classes});
  read_parameters(r, {&w, &b}, path);
  return TextureEncoder(std::move(enc), std::move(w), std::move(b), norm, std::move(meta));
}

double classification_accuracy(const TextureEncoder& enc, const std::vector<Tensor<float>>& images,
                               const std::vector<int>& labels, std::vector<double>* per_class) {
  const int classes = static_cast<int>(enc.meta().class_names.size());
  std::vector<int> hit(classes, 0), seen(classes, 0);
  int correct = 0;
  constexpr int kChunk = 32;
  for (std::size_t start = 0; start < images.size(); start += kChunk) {
    std::vector<int> idx;
    for (std::size_t i = start; i < std::min(images.size(), start + kChunk); ++i) idx.push_back(static_cast<int>(i));
    const Tensor<float> logits = enc.logits(stack_images(images, idx));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const float* row = logits.data() + k * classes;
      const int pred = static_cast<int>(std::max_element(row, row + classes) - row);
      const int truth = labels[idx[k]];
      ++seen[truth];
      if (pred == truth) {
        ++hit[truth];
        ++correct;
      }
    }
  }
  if (per_class) {
    per_class->assign(classes, 0.0);
    for (int k = 0; k < classes; ++k) (*per_class)[k] = seen[k] ? static_cast<double>(hit[k]) / seen[k] : 0.0;
  }
  return images.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(images.size());
}

TextureEncoder pretrain_texture_encoder(const TextureConfig& cfg, const NetworkConfig& net, std::uint64_t seed,
                                        PretrainLog* log) {
  validate(cfg);
  validate(net);
  const TextureCorpus corpus = make_texture_corpus(cfg, seed);
  const int classes = static_cast<int>(corpus.class_names.size());
  const int c4 = net.widths[kNumStages - 1];

  Encoder<float> enc(net, "texture");
  Rng init_rng = make_stream(seed, "texture.init");
  enc.init(init_rng);
  Parameter<float> head_w("texture.head.weight", {classes, c4});
  Parameter<float> head_b("texture.head.bias", {classes});
  const double head_std = std::sqrt(1.0 / c4);
  for (auto& v : head_w.value) v = static_cast<float>(head_std * standard_normal(init_rng));

  const Normalization norm = measure_normalization(corpus.train_images);
  std::vector<Parameter<float>*> params = enc.parameters();
  params.push_back(&head_w);
  params.push_back(&head_b);
  AdamW opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  const int n = static_cast<int>(corpus.train_images.size());
  const long steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;
  const long total_steps = steps_per_epoch * cfg.epochs;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = make_stream(seed, "texture.shuffle", static_cast<std::uint64_t>(epoch));
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_int(shuffle, i + 1)]);
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += cfg.batch) {
      const std::vector<int> idx(order.begin() + start, order.begin() + std::min(n, start + cfg.batch));
      const int bsz = static_cast<int>(idx.size());
      Tensor<float> x = normalize(stack_images(corpus.train_images, idx), norm);
      std::array<Encoder<float>::StageCache, kNumStages> caches;
      std::array<Tensor<float>, kNumStages> outs;
      for (int s = 0; s < kNumStages; ++s) outs[s] = enc.forward_stage(s, s == 0 ? x : outs[s - 1], &caches[s]);
      const Tensor<float>& last = outs[kNumStages - 1];
      const auto pooled = pool(last);
      auto probs = head_forward(pooled, bsz, c4, head_w, head_b, classes);
      softmax_rows(probs, bsz, classes);

      for (auto* p : params) p->zero_grad();
      std::vector<float> dpooled(static_cast<std::size_t>(bsz) * c4, 0.0f);
      double loss = 0.0;
      for (int b = 0; b < bsz; ++b) {
        const int y = corpus.train_labels[idx[b]];
        loss -= std::log(std::max(static_cast<double>(probs[static_cast<std::size_t>(b) * classes + y]), 1e-12));
        for (int k = 0; k < classes; ++k) {
          const float d = (probs[static_cast<std::size_t>(b) * classes + k] - (k == y ? 1.0f : 0.0f)) / bsz;
          head_b.grad[k] += d;
          for (int c = 0; c < c4; ++c) {
            head_w.grad[static_cast<std::size_t>(k) * c4 + c] += d * pooled[static_cast<std::size_t>(b) * c4 + c];
            dpooled[static_cast<std::size_t>(b) * c4 + c] += d * head_w.value[static_cast<std::size_t>(k) * c4 + c];
          }
        }
      }
      epoch_loss += loss;
      if (!std::isfinite(loss)) throw NumericError("texture pre-training: non-finite loss");
      Tensor<float> dlast(last.shape());
      const float inv_plane = 1.0f / static_cast<float>(last.shape().plane());
      for (int b = 0; b < bsz; ++b) {
        for (int c = 0; c < c4; ++c) {
          auto plane = dlast.plane(b, c);
          std::fill(plane.begin(), plane.end(), dpooled[static_cast<std::size_t>(b) * c4 + c] * inv_plane);
        }
      }
      Tensor<float> d = std::move(dlast);
      for (int s = kNumStages - 1; s >= 0; --s) d = enc.backward_stage(s, std::move(d), outs[s], caches[s], s > 0);
      opt.step(params, poly_lr(cfg.lr, step, total_steps, 1.0));
      ++step;
    }
    if (log) {
      log->epoch_loss.push_back(epoch_loss / n);
      TextureEncoder probe(enc, head_w, head_b, norm, {corpus.class_names, seed, 0.0, {}, epoch + 1});
      log->epoch_val_accuracy.push_back(classification_accuracy(probe, corpus.val_images, corpus.val_labels));
    }
  }

  TextureEncoder::Meta meta{corpus.class_names, seed, 0.0, {}, cfg.epochs};
  std::vector<double> per_class;
  const double acc = classification_accuracy(TextureEncoder(enc, head_w, head_b, norm, meta), corpus.val_images,
                                             corpus.val_labels, &per_class);
  if (acc < cfg.min_accuracy) {
    std::ostringstream msg;
    msg << "texture encoder reached held-out accuracy " << acc << " < required " << cfg.min_accuracy
        << " after " << cfg.epochs << " epochs; per-class:";
    for (int k = 0; k < classes; ++k) msg << ' ' << corpus.class_names[k] << '=' << per_class[k];
    throw TrainingError(msg.str());
  }
  meta.accuracy = acc;
  meta.per_class_accuracy = per_class;
  return TextureEncoder(std::move(enc), std::move(head_w), std::move(head_b), norm, std::move(meta));
}

std::array<Tensor<float>, kNumStages> extract_manifold(const TextureEncoder& enc, const Tensor<float>& images) {
  return enc.features(images);
}

}  // namespace stseg
