#include "stseg/evaluator.hpp"

#include <filesystem>
#include <map>

#include "stseg/error.hpp"

namespace stseg {

LabelMap predict_labels(const SegNetwork& net, const Normalization& norm, const Tensor<float>& images, int batch) {
  if (batch < 1) throw ValidationError("predict_labels: batch must be >= 1");
  LabelMap out(images.batch(), images.height(), images.width());
  for (int start = 0; start < images.batch(); start += batch) {
    const int n = std::min(batch, images.batch() - start);
    Tensor<float> chunk(n, images.channels(), images.height(), images.width());
    for (int b = 0; b < n; ++b) {
      std::copy(images.item(start + b).begin(), images.item(start + b).end(), chunk.item(b).begin());
    }
    const Tensor<float> probs = net.predict(normalize(chunk, norm));
    const LabelMap labels = argmax_channels(probs);
    std::copy(labels.ids.begin(), labels.ids.end(), out.ids.begin() + static_cast<std::ptrdiff_t>(start) * out.plane());
  }
  return out;
}

namespace {

ConfusionMatrix confusion_for(const SegNetwork& net, const Normalization& norm, const LoadedSplit& data,
                              const std::vector<int>& indices, int batch) {
  ConfusionMatrix cm(net.config().num_classes);
  for (std::size_t start = 0; start < indices.size(); start += batch) {
    const std::size_t end = std::min(indices.size(), start + batch);
    const std::vector<int> chunk(indices.begin() + start, indices.begin() + end);
    const LabelMap pred = predict_labels(net, norm, stack_images(data.images, chunk), batch);
    accumulate_confusion(cm, pred, stack_labels(data.labels, chunk));
  }
  return cm;
}

}  // namespace

EvaluationResults evaluate(const ModelCheckpoint& ck, const EvalOptions& opts, const std::string& fingerprint) {
  validate(opts.grouping, ck.config.num_classes);
  EvaluationResults results;
  results.fingerprint = fingerprint;
  for (const auto& split : opts.splits) {
    const LoadedSplit data = load_split(opts.data_root, split);
    if (data.manifest.num_classes != ck.config.num_classes) {
      throw ValidationError("split " + split + " has " + std::to_string(data.manifest.num_classes) +
                            " classes, checkpoint predicts " + std::to_string(ck.config.num_classes));
    }
    if (data.labels.empty()) throw ValidationError("split " + split + " has no labels to evaluate against");
    std::map<std::pair<std::string, int>, std::vector<int>> corrupted;
    std::vector<int> clean;
    for (int i = 0; i < static_cast<int>(data.manifest.samples.size()); ++i) {
      const auto& c = data.manifest.samples[i].corruption;
      if (c) {
        corrupted[{std::string(corruption_name(c->kind)), c->severity}].push_back(i);
      } else {
        clean.push_back(i);
      }
    }
    if (!clean.empty()) {
      const auto cm = confusion_for(ck.net, ck.normalization, data, clean, opts.batch);
      results.splits.push_back(
          make_report(cm, opts.grouping, split, fingerprint, clean.size(), data.manifest.class_names));
    }
    for (const auto& [key, idx] : corrupted) {
      const auto cm = confusion_for(ck.net, ck.normalization, data, idx, opts.batch);
      results.corruptions[key.first][key.second] =
          make_report(cm, opts.grouping, split + ":" + key.first + ":" + std::to_string(key.second), fingerprint,
                      idx.size(), data.manifest.class_names);
    }
  }
  return results;
}

EvaluationResults evaluate_checkpoint(const std::string& checkpoint_path, const EvalOptions& opts,
                                      const std::string& out_dir, const std::string& label) {
  const ModelCheckpoint ck = load_model(checkpoint_path);
  EvaluationResults r = evaluate(ck, opts, file_fingerprint(checkpoint_path));
  if (!out_dir.empty()) emit_report(r, out_dir, label);
  return r;
}

}  // namespace stseg
