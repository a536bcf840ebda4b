// Diagnostic: how far each encoder's stage features move when the input is corrupted.
// For every encoder, kind and stage it reports the mean over images and severities of
// ||F(corrupt(x)) - F(x)|| / ||F(x)||. Prints a Markdown table.
//
//   stseg-sensitivity --data data --texture texture/texture_encoder.bin
//                     --checkpoint Baseline=runs/ablation/baseline/seed_0/checkpoints/final.ckpt ...

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>

#include "stseg/checkpoint.hpp"
#include "stseg/corruption.hpp"
#include "stseg/dataset.hpp"
#include "stseg/error.hpp"
#include "stseg/texture_encoder.hpp"

namespace {

using Features = std::array<stseg::Tensor<float>, stseg::kNumStages>;
using Extractor = std::function<Features(const stseg::Tensor<float>&)>;

Features encoder_features(const stseg::Encoder<float>& enc, const stseg::Normalization& norm,
                          const stseg::Tensor<float>& images) {
  Features out;
  const auto x = stseg::normalize(images, norm);
  for (int s = 0; s < stseg::kNumStages; ++s) out[s] = enc.forward_stage(s, s == 0 ? x : out[s - 1], nullptr);
  return out;
}

// Mean over items of the relative Frobenius deviation, one value per stage.
std::array<double, stseg::kNumStages> deviation(const Features& clean, const Features& bad) {
  std::array<double, stseg::kNumStages> out{};
  for (int s = 0; s < stseg::kNumStages; ++s) {
    const int b = clean[s].batch();
    for (int i = 0; i < b; ++i) {
      const auto c = clean[s].item(i);
      const auto d = bad[s].item(i);
      double num = 0.0, den = 0.0;
      for (std::size_t k = 0; k < c.size(); ++k) {
        num += (static_cast<double>(d[k]) - c[k]) * (static_cast<double>(d[k]) - c[k]);
        den += static_cast<double>(c[k]) * c[k];
      }
      out[s] += den > 0 ? std::sqrt(num / den) : 0.0;
    }
    out[s] /= b;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feature sensitivity of encoders to input corruptions"};
  std::string data = "data", split = "val", texture;
  std::vector<std::string> checkpoints;
  int count = 50;
  std::uint64_t seed = 0;
  app.add_option("--data", data, "dataset root");
  app.add_option("--split", split, "clean split to corrupt");
  app.add_option("--count", count, "number of images")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "corruption seed");
  app.add_option("--texture", texture, "texture encoder checkpoint");
  app.add_option("--checkpoint", checkpoints, "LABEL=PATH of a segmentation checkpoint (repeatable)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  try {
    std::vector<std::pair<std::string, Extractor>> encoders;
    if (!texture.empty()) {
      auto enc = std::make_shared<stseg::TextureEncoder>(stseg::TextureEncoder::load(texture));
      encoders.emplace_back("texture teacher", [enc](const stseg::Tensor<float>& x) { return enc->features(x); });
    }
    for (const auto& spec : checkpoints) {
      const auto eq = spec.find('=');
      if (eq == std::string::npos) throw stseg::ValidationError("--checkpoint expects LABEL=PATH, got " + spec);
      auto ck = std::make_shared<stseg::ModelCheckpoint>(stseg::load_model(spec.substr(eq + 1)));
      encoders.emplace_back(spec.substr(0, eq), [ck](const stseg::Tensor<float>& x) {
        return encoder_features(ck->net.encoder(), ck->normalization, x);
      });
    }
    if (encoders.empty()) throw stseg::ValidationError("nothing to measure: give --texture and/or --checkpoint");

    const auto loaded = stseg::load_split(data, split);
    std::vector<int> idx;
    for (int i = 0; i < std::min<int>(count, static_cast<int>(loaded.images.size())); ++i) idx.push_back(i);
    const auto clean = stseg::stack_images(loaded.images, idx);

    std::cout << "| Encoder |";
    for (auto k : stseg::kAllCorruptions) std::cout << ' ' << stseg::corruption_label(k) << " |";
    std::cout << " Avg. | stage 1 | stage 2 | stage 3 | stage 4 |\n|---|";
    for (std::size_t i = 0; i < stseg::kAllCorruptions.size() + 5; ++i) std::cout << "---|";
    std::cout << '\n';
    for (const auto& [label, extract] : encoders) {
      const Features ref = extract(clean);
      std::array<double, stseg::kNumStages> per_stage{};
      double total = 0.0;
      std::cout << "| " << label << " |";
      for (auto k : stseg::kAllCorruptions) {
        double kind_sum = 0.0;
        for (int sev = 1; sev <= stseg::kNumSeverities; ++sev) {
          const auto dev = deviation(ref, extract(stseg::corrupt(clean, {k, sev, seed})));
          for (int s = 0; s < stseg::kNumStages; ++s) {
            per_stage[s] += dev[s];
            kind_sum += dev[s];
          }
        }
        const double kind_mean = kind_sum / (stseg::kNumSeverities * stseg::kNumStages);
        total += kind_mean;
        std::printf(" %.3f |", kind_mean);
      }
      std::printf(" %.3f |", total / stseg::kAllCorruptions.size());
      for (double v : per_stage) std::printf(" %.3f |", v / (stseg::kNumSeverities * stseg::kAllCorruptions.size()));
      std::printf("\n");
      std::fflush(stdout);
    }
  } catch (const stseg::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
