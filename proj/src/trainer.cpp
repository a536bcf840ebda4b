#include "stseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "stseg/binary_io.hpp"
#include "stseg/checkpoint.hpp"
#include "stseg/error.hpp"
#include "stseg/evaluator.hpp"
#include "stseg/feature_stats.hpp"
#include "stseg/optimizer.hpp"
#include "stseg/style_model.hpp"
#include "stseg/texture_encoder.hpp"
#include "stseg/texture_loss.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stseg {
namespace {

constexpr const char* kStateMagic = "STSEGRUN";
constexpr std::uint32_t kStateVersion = 1;

std::string step_name(long step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "step_%07ld", step);
  return buf;
}

// Stateless sampling of training indices: epoch-wise permutations keyed by the epoch.
class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, int n) : seed_(seed), n_(n) {}

  std::vector<int> batch(long step, int size) {
    std::vector<int> out;
    for (int k = 0; k < size; ++k) {
      const long g = step * size + k;
      const long epoch = g / n_;
      if (epoch != cached_epoch_) {
        perm_.resize(n_);
        std::iota(perm_.begin(), perm_.end(), 0);
        Rng rng = make_stream(seed_, "train.shuffle", static_cast<std::uint64_t>(epoch));
        for (int i = n_ - 1; i > 0; --i) std::swap(perm_[i], perm_[uniform_int(rng, i + 1)]);
        cached_epoch_ = epoch;
      }
      out.push_back(perm_[g % n_]);
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  int n_;
  long cached_epoch_ = -1;
  std::vector<int> perm_;
};

std::vector<Tensor<float>> load_realistic_pool(const Config& cfg) {
  const std::string& src = cfg.train.realistic_source;
  std::vector<Tensor<float>> images;
  if (fs::is_directory(src) && !fs::exists(fs::path(src) / "manifest.json")) {
    images = load_image_folder(src);
  } else {
    const fs::path split_dir = fs::is_directory(src) ? fs::path(src) : fs::path(cfg.data.root) / src;
    if (!fs::exists(split_dir / "manifest.json")) {
      throw ValidationError("realistic image source not found: " + src + " (a split under " + cfg.data.root +
                            " or a PNG folder)");
    }
    images = load_split(split_dir.parent_path().string(), split_dir.filename().string()).images;
  }
  if (images.empty()) throw ValidationError("realistic image source is empty: " + src);
  for (const auto& img : images) {
    if (img.height() != images.front().height() || img.width() != images.front().width()) {
      throw ValidationError("realistic images must share one resolution");
    }
  }
  return images;
}

void write_params_double_check(const std::vector<Parameter<float>*>& params) {
  for (const auto* p : params) {
    for (float v : p->value) {
      if (!std::isfinite(v)) throw NumericError("non-finite weight in " + p->name);
    }
  }
}

struct TrainState {
  long step = 0;
  SegNetwork net;
  EmaEncoder ema;
  AdamW opt;
  std::optional<StyleBuffer> buffer;
  std::optional<StyleDistModel> style_model;
};

void save_state(const std::string& path, TrainState& st) {
  BinaryWriter w(path);
  w.put_magic(kStateMagic);
  w.put<std::uint32_t>(kStateVersion);
  w.put<std::int64_t>(st.step);
  write_parameters(w, st.net.parameters());
  {
    std::vector<const Parameter<float>*> ema;
    for (auto* p : st.ema.shadow().parameters()) ema.push_back(p);
    write_parameters(w, ema);
  }
  w.put<std::int64_t>(st.opt.steps());
  for (const auto& m : st.opt.first_moments()) w.put_vector(m);
  for (const auto& v : st.opt.second_moments()) w.put_vector(v);
  w.put<std::uint8_t>(st.buffer ? 1 : 0);
  if (st.buffer) {
    w.put<std::uint64_t>(st.buffer->total_seen());
    w.put<std::uint64_t>(st.buffer->observations().size());
    for (const auto& obs : st.buffer->observations()) {
      for (const auto& layer : obs) {
        w.put_vector(layer.mean);
        w.put_vector(layer.std);
      }
    }
  }
  w.put<std::uint8_t>(st.style_model ? 1 : 0);
  w.close();
  if (st.style_model) st.style_model->save(path + ".style");
}

void load_state(const std::string& path, TrainState& st) {
  BinaryReader r(path);
  r.expect_magic(kStateMagic);
  if (r.get<std::uint32_t>() != kStateVersion) throw ValidationError(path + ": unsupported run-state version");
  st.step = static_cast<long>(r.get<std::int64_t>());
  read_parameters(r, st.net.parameters(), path);
  read_parameters(r, st.ema.shadow().parameters(), path);
  st.opt.set_steps(static_cast<long>(r.get<std::int64_t>()));
  for (auto& m : st.opt.first_moments()) {
    auto v = r.get_vector<float>();
    if (v.size() != m.size()) throw ValidationError(path + ": optimizer state does not match the model");
    m = std::move(v);
  }
  for (auto& m : st.opt.second_moments()) {
    auto v = r.get_vector<float>();
    if (v.size() != m.size()) throw ValidationError(path + ": optimizer state does not match the model");
    m = std::move(v);
  }
  const bool has_buffer = r.get<std::uint8_t>() != 0;
  if (has_buffer != st.buffer.has_value()) throw ValidationError(path + ": run state was saved with another style mode");
  if (has_buffer) {
    const auto total = r.get<std::uint64_t>();
    const auto count = r.get<std::uint64_t>();
    std::vector<LayerStyles> obs(count);
    for (auto& o : obs) {
      for (std::size_t l = 0; l < st.buffer->layer_channels().size(); ++l) {
        auto mean = r.get_vector<double>();
        auto sd = r.get_vector<double>();
        o.emplace_back(std::move(mean), std::move(sd));
      }
    }
    st.buffer->restore(obs, total);
  }
  const bool has_model = r.get<std::uint8_t>() != 0;
  if (has_model != st.style_model.has_value()) throw ValidationError(path + ": run state was saved with another style mode");
  if (has_model) st.style_model = StyleDistModel::load(path + ".style");
}

std::optional<std::string> newest_state(const fs::path& ckpt_dir) {
  if (!fs::is_directory(ckpt_dir)) return std::nullopt;
  std::vector<std::string> states;
  for (const auto& e : fs::directory_iterator(ckpt_dir)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("step_", 0) == 0 && e.path().extension() == ".state") states.push_back(e.path().string());
  }
  if (states.empty()) return std::nullopt;
  std::sort(states.begin(), states.end());
  return states.back();
}

std::string format_row(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.step, r.loss.ce, r.loss.style, r.loss.align,
                r.loss.tex, r.loss.total, r.lr);
  return buf;
}

// Keeps rows with step < `keep_before` (used when resuming).
void truncate_log(const fs::path& path, long keep_before) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  std::vector<std::string> rows;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    if (std::stol(line.substr(0, line.find(','))) < keep_before) rows.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  out << header << '\n';
  for (const auto& r : rows) out << r << '\n';
}

std::string meta_json(const Config& cfg, long step, const std::string& label) {
  json m;
  m["step"] = step;
  m["seed"] = cfg.seed;
  m["style_mode"] = style_mode_name(cfg.train.style_mode);
  m["tr"] = cfg.train.tr;
  m["label"] = label;
  return m.dump();
}

StyleBatch random_styles(const ForwardPass<float>& fp, const std::vector<int>& layers, double scale, Rng& rng) {
  StyleBatch out(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto stats = compute_style(fp.raw[layers[i] - 1], layers[i]);
    for (const auto& s : stats) {
      StyleStats<double> g(s.channels());
      for (int c = 0; c < s.channels(); ++c) {
        const double mu = s.mean[c];
        const double sd = s.std[c];
        g.mean[c] = mu + scale * standard_normal(rng) * sd;
        g.std[c] = sd * std::exp(scale * standard_normal(rng));
      }
      out[i].push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace

std::vector<StepRecord> read_loss_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  std::string line;
  std::getline(in, line);
  std::vector<StepRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StepRecord r;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf,%lf,%lf", &r.step, &r.loss.ce, &r.loss.style, &r.loss.align,
                    &r.loss.tex, &r.loss.total, &r.lr) != 7) {
      throw IoError("malformed loss log row in " + path);
    }
    out.push_back(r);
  }
  return out;
}

TrainResult train(const Config& cfg, const TrainOptions& opts) {
  validate(cfg);
  if (opts.run_dir.empty()) throw ValidationError("train: an output run directory is required");
  const TrainConfig& tc = cfg.train;
  const fs::path run(opts.run_dir);
  const fs::path ckpt_dir = run / "checkpoints";
  const fs::path loss_path = run / "losses.csv";

  // --- configuration checks before touching the run directory ---
  std::optional<TextureEncoder> teacher;
  if (tc.tr) {
    if (!fs::exists(cfg.texture.checkpoint)) {
      throw ValidationError("texture regularization is on but the texture checkpoint '" + cfg.texture.checkpoint +
                            "' does not exist (run pretrain-texture first)");
    }
    teacher = TextureEncoder::load(cfg.texture.checkpoint);
    if (teacher->config().widths != cfg.model.widths) {
      throw ValidationError("texture encoder stage widths do not match the segmentation encoder");
    }
  }
  const LoadedSplit train_data = load_split(cfg.data.root, "train");
  if (train_data.labels.empty()) throw ValidationError("training split has no labels");
  if (train_data.manifest.num_classes != cfg.model.num_classes) {
    throw ValidationError("training split has " + std::to_string(train_data.manifest.num_classes) +
                          " classes, model.num_classes is " + std::to_string(cfg.model.num_classes));
  }
  const Normalization norm = train_data.manifest.normalization;
  const bool needs_realistic = tc.style_mode == StyleMode::kRealistic || tc.style_mode == StyleMode::kGenerated;
  std::vector<Tensor<float>> realistic;
  if (needs_realistic) realistic = load_realistic_pool(cfg);

  // --- run directory ---
  std::optional<std::string> resume_from;
  bool reuse_dir = false;
  if (fs::exists(run / "config.json")) {
    if (opts.force) {
      fs::remove_all(run);
    } else if (opts.resume) {
      resume_from = newest_state(ckpt_dir);
      reuse_dir = true;
    } else {
      throw ValidationError("run directory " + run.string() + " already exists (use --force or resume)");
    }
  }
  fs::create_directories(ckpt_dir);
  fs::create_directories(run / "reports");
  {
    std::ofstream out(run / "config.json");
    out << config_to_json(cfg) << '\n';
    std::ofstream meta(run / "run.json");
    meta << json{{"label", opts.label}, {"seed", cfg.seed}, {"style_mode", style_mode_name(tc.style_mode)},
                 {"tr", tc.tr}}
                .dump(2)
         << '\n';
  }

  // --- model and training state ---
  std::vector<int> layer_channels;
  for (int l : tc.styled_layers) layer_channels.push_back(cfg.model.widths[l - 1]);
  TrainState st;
  st.net = SegNetwork(cfg.model);
  Rng init_rng = make_stream(cfg.seed, "model.init");
  st.net.init(init_rng);
  st.ema = EmaEncoder(st.net.encoder());
  st.opt = AdamW(st.net.parameters(), {tc.optimizer.lr, tc.optimizer.betas[0], tc.optimizer.betas[1], 1e-8,
                                       tc.optimizer.weight_decay});
  if (tc.style_mode == StyleMode::kGenerated) {
    st.buffer.emplace(layer_channels, tc.buffer_capacity);
    StyleModelOptions smo;
    smo.table_points = tc.gamma_table_points;
    st.style_model.emplace(layer_channels, smo);
  }
  if (resume_from) {
    load_state(*resume_from, st);
    if (opts.verbose) std::cerr << "resuming " << run.string() << " at step " << st.step << '\n';
  }
  if (reuse_dir) truncate_log(loss_path, st.step);
  if (!fs::exists(loss_path)) {
    std::ofstream out(loss_path);
    out << "step,ce,style,align,tex,total,lr\n";
  }
  std::ofstream loss_log(loss_path, std::ios::app);

  BatchSampler sampler(cfg.seed, static_cast<int>(train_data.images.size()));
  const std::vector<double> tex_weights(tc.texture_weights.begin(), tc.texture_weights.end());
  std::vector<float> last_good;  // weights that produced the previous finite loss
  TrainResult result;
  result.run_dir = run.string();

  auto checkpoint = [&](const std::string& name) {
    save_model((ckpt_dir / (name + ".ckpt")).string(), st.net, norm, meta_json(cfg, st.step, opts.label));
    save_state((ckpt_dir / (name + ".state")).string(), st);
  };

  while (st.step < tc.steps) {
    if (opts.stop_after >= 0 && static_cast<long>(result.log.size()) >= opts.stop_after) return result;
    const long step = st.step;
    if (step == opts.inject_nan_at) st.net.parameters().front()->value[0] = std::numeric_limits<float>::quiet_NaN();
    StepRecord rec;
    rec.step = step;
    rec.lr = poly_lr(tc.optimizer.lr, step, tc.steps, tc.schedule.power);
    try {
      const auto idx = sampler.batch(step, tc.batch_size);
      const Tensor<float> images = stack_images(train_data.images, idx);
      const LabelMap labels = stack_labels(train_data.labels, idx);
      const Tensor<float> x = normalize(images, norm);

      // (1) source path
      ForwardPass<float> fp_s = st.net.forward_source(x);
      const double ce = cross_entropy(fp_s.probs, labels);

      // (2)-(3) style statistics for the augmented path
      std::optional<StyleBatch> styles;
      if (tc.style_mode == StyleMode::kRandom) {
        Rng rng = make_stream(cfg.seed, "random_style", static_cast<std::uint64_t>(step));
        styles = random_styles(fp_s, tc.styled_layers, tc.random_style_scale, rng);
      } else if (needs_realistic) {
        Rng pick = make_stream(cfg.seed, "realistic", static_cast<std::uint64_t>(step));
        std::vector<int> ridx;
        for (int k = 0; k < tc.unlabeled_batch_size; ++k) ridx.push_back(uniform_int(pick, static_cast<int>(realistic.size())));
        const Tensor<float> xr = normalize(stack_images(realistic, ridx), norm);
        const auto observed = st.ema.extract_styles(xr, tc.styled_layers);
        if (tc.style_mode == StyleMode::kRealistic) {
          StyleBatch batch(tc.styled_layers.size());
          for (int b = 0; b < tc.batch_size; ++b) {
            for (std::size_t l = 0; l < tc.styled_layers.size(); ++l) batch[l].push_back(observed[b % observed.size()][l]);
          }
          styles = std::move(batch);
        } else {
          for (const auto& obs : observed) {
            if (st.buffer->push(obs)) st.style_model->flush_update(*st.buffer);
          }
          Rng rng = make_stream(cfg.seed, "style_sample", static_cast<std::uint64_t>(step));
          styles = sample_styles(*st.style_model, tc.batch_size, rng);
        }
      }

      std::optional<ForwardPass<float>> fp_a;
      double style = 0.0;
      double align = 0.0;
      if (styles) {
        fp_a = st.net.forward_augmented(x, *styles, tc.styled_layers);
        style = style_loss(fp_a->probs, labels);
        align = align_loss(fp_s.probs, fp_a->probs);
      }

      // texture regularization on the source-path stage features
      double tex = 0.0;
      std::array<Tensor<float>, kNumStages> tex_grads;
      if (teacher) {
        const auto teacher_feats = extract_manifold(*teacher, images);
        const NaturalMask mask = natural_mask(labels, tc.natural_classes, cfg.model.num_classes);
        auto tl = texture_loss_with_grad(std::span<const Tensor<float>>(teacher_feats),
                                         std::span<const Tensor<float>>(fp_s.raw.data(), kNumStages), mask,
                                         std::span<const double>(tex_weights));
        tex = tl.loss;
        for (int s = 0; s < kNumStages; ++s) {
          tex_grads[s] = std::move(tl.student_grads[s]);
          for (auto& v : tex_grads[s].values()) v *= static_cast<float>(tc.loss_weights.tex);
        }
      }

      // (4) loss bundle; throws on a non-finite component
      rec.loss = total_loss(ce, style, align, tex, tc.loss_weights);
      rec.augmented = styles.has_value();

      // backward through both paths
      st.net.zero_grad();
      Tensor<float> d_src = cross_entropy_grad(fp_s.probs, labels);
      for (auto& v : d_src.values()) v *= static_cast<float>(tc.loss_weights.ce);
      st.net.backward(fp_s, d_src, teacher ? &tex_grads : nullptr);
      if (fp_a) {
        Tensor<float> d_aug = cross_entropy_grad(fp_a->probs, labels);
        const Tensor<float> d_align = align_loss_grad(fp_s.probs, fp_a->probs);
        for (std::size_t i = 0; i < d_aug.size(); ++i) {
          d_aug.values()[i] = static_cast<float>(tc.loss_weights.style * d_aug.values()[i] +
                                                 tc.loss_weights.align * d_align.values()[i]);
        }
        st.net.backward(*fp_a, d_aug);
      }
      for (const auto* p : st.net.parameters()) {
        for (float g : p->grad) {
          if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + p->name);
        }
      }
    } catch (const NumericError& e) {
      if (!last_good.empty()) {
        std::size_t k = 0;
        for (auto* p : st.net.parameters()) {
          std::copy(last_good.begin() + k, last_good.begin() + k + p->size(), p->value.begin());
          k += p->size();
        }
      }
      save_model((ckpt_dir / "last_good.ckpt").string(), st.net, norm, meta_json(cfg, std::max(0L, step - 1), opts.label));
      loss_log.flush();
      throw NumericError("training halted at step " + std::to_string(step) + ": " + e.what() +
                         "; last good weights saved to " + (ckpt_dir / "last_good.ckpt").string());
    }

    // (5) optimizer step, (6) EMA update
    last_good.clear();
    for (const auto* p : st.net.parameters()) last_good.insert(last_good.end(), p->value.begin(), p->value.end());
    st.opt.step(st.net.parameters(), rec.lr);
    st.ema.update(st.net.encoder(), tc.ema_alpha);
    ++st.step;

    loss_log << format_row(rec) << '\n';
    result.log.push_back(rec);
    if (opts.verbose && (st.step % tc.log_every == 0 || st.step == tc.steps)) {
      std::fprintf(stderr, "[%s] step %ld/%ld ce %.4f style %.4f align %.4f tex %.4f total %.4f\n",
                   opts.label.empty() ? "train" : opts.label.c_str(), st.step, tc.steps, rec.loss.ce, rec.loss.style,
                   rec.loss.align, rec.loss.tex, rec.loss.total);
    }
    if (st.step % tc.checkpoint_every == 0 && st.step < tc.steps) {
      loss_log.flush();
      checkpoint(step_name(st.step));
    }
  }
  loss_log.flush();
  write_params_double_check(st.net.parameters());
  checkpoint(step_name(st.step));
  const std::string final_path = (ckpt_dir / "final.ckpt").string();
  save_model(final_path, st.net, norm, meta_json(cfg, st.step, opts.label));
  result.final_checkpoint = final_path;

  if (opts.evaluate_at_end) {
    EvalOptions eo;
    eo.data_root = cfg.data.root;
    eo.splits = cfg.eval.splits;
    eo.grouping = cfg.eval.grouping;
    eo.batch = cfg.eval.batch;
    result.evaluation = evaluate_checkpoint(final_path, eo, (run / "reports").string(),
                                            opts.label.empty() ? run.filename().string() : opts.label);
  }
  return result;
}

void run_ablation(const Config& cfg, const AblationOptions& opts) {
  validate(cfg);
  std::vector<AblationRowSpec> rows;
  for (const auto& r : default_ablation_rows()) {
    if (cfg.ablation.rows.empty() ||
        std::find(cfg.ablation.rows.begin(), cfg.ablation.rows.end(), r.label) != cfg.ablation.rows.end()) {
      rows.push_back(r);
    }
  }
  fs::create_directories(opts.out_dir);
  {
    std::ofstream out(fs::path(opts.out_dir) / "ablation_config.json");
    out << config_to_json(cfg) << '\n';
  }
  for (const auto& row : rows) {
    for (std::uint64_t seed : cfg.ablation.seeds) {
      Config run_cfg = cfg;
      run_cfg.seed = seed;
      run_cfg.train.style_mode = row.style_mode;
      run_cfg.train.tr = row.tr;
      const fs::path dir = fs::path(opts.out_dir) / row_slug(row.label) / ("seed_" + std::to_string(seed));
      if (!opts.force && fs::exists(dir / "reports" / "report.json") && fs::exists(dir / "checkpoints" / "final.ckpt")) {
        if (opts.verbose) std::cerr << "reusing completed run " << dir.string() << '\n';
        continue;
      }
      TrainOptions to;
      to.run_dir = dir.string();
      to.force = opts.force;
      to.resume = !opts.force;
      to.label = row.label;
      to.verbose = opts.verbose;
      train(run_cfg, to);
    }
  }
  aggregate_ablation(opts.out_dir);
}

AblationSummary aggregate_ablation(const std::string& ablation_dir) {
  if (!fs::is_directory(ablation_dir)) throw ValidationError("not an ablation directory: " + ablation_dir);
  struct Acc {
    std::vector<double> clean_miou, clean_macc, cor_miou, cor_macc, unseen_miou, unseen_macc;
    std::vector<std::pair<std::string, EvaluationResults>> results;
  };
  std::map<std::string, Acc> by_label;
  for (const auto& row : default_ablation_rows()) {
    const fs::path row_dir = fs::path(ablation_dir) / row_slug(row.label);
    if (!fs::is_directory(row_dir)) continue;
    std::vector<fs::path> seeds;
    for (const auto& e : fs::directory_iterator(row_dir)) {
      if (e.is_directory() && fs::exists(e.path() / "reports" / "report.json")) seeds.push_back(e.path());
    }
    std::sort(seeds.begin(), seeds.end());
    for (const auto& s : seeds) {
      const EvaluationResults r = load_results((s / "reports" / "report.json").string());
      Acc& a = by_label[row.label];
      double cm = 0.0, ca = 0.0;
      int cn = 0;
      double um = 0.0, ua = 0.0;
      int un = 0;
      for (const auto& sp : r.splits) {
        if (sp.split.rfind("unseen_", 0) == 0) {
          um += sp.miou;
          ua += sp.macc;
          ++un;
        } else if (sp.split == "val") {
          cm += sp.miou;
          ca += sp.macc;
          ++cn;
        }
      }
      if (cn) {
        a.clean_miou.push_back(cm / cn);
        a.clean_macc.push_back(ca / cn);
      }
      if (un) {
        a.unseen_miou.push_back(um / un);
        a.unseen_macc.push_back(ua / un);
      }
      if (auto v = r.corrupted_miou()) a.cor_miou.push_back(*v);
      if (auto v = r.corrupted_macc()) a.cor_macc.push_back(*v);
      a.results.emplace_back(row.label + " (" + s.filename().string() + ")", r);
    }
  }
  auto mean = [](const std::vector<double>& v) { return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  auto opt_mean = [&](const std::vector<double>& v) { return v.empty() ? std::nullopt : std::optional<double>(mean(v)); };
  AblationSummary out;
  std::vector<std::pair<std::string, EvaluationResults>> corruption_rows;
  json j = json::array();
  for (const auto& row : default_ablation_rows()) {
    const auto it = by_label.find(row.label);
    if (it == by_label.end()) continue;
    const Acc& a = it->second;
    AggregateRow r;
    r.label = row.label;
    r.runs = static_cast<int>(a.results.size());
    r.clean_miou = mean(a.clean_miou);
    r.clean_macc = mean(a.clean_macc);
    r.corrupted_miou = opt_mean(a.cor_miou);
    r.corrupted_macc = opt_mean(a.cor_macc);
    r.unseen_miou = opt_mean(a.unseen_miou);
    r.unseen_macc = opt_mean(a.unseen_macc);
    if (a.cor_miou.size() > 1) {
      double ss = 0.0;
      for (double v : a.cor_miou) ss += (v - *r.corrupted_miou) * (v - *r.corrupted_miou);
      r.corrupted_miou_sd = std::sqrt(ss / (a.cor_miou.size() - 1));
    }
    out.rows.push_back(r);
    for (const auto& cr : a.results) corruption_rows.push_back(cr);
    j.push_back({{"label", r.label},
                 {"runs", r.runs},
                 {"clean_miou", r.clean_miou},
                 {"clean_macc", r.clean_macc},
                 {"corrupted_miou", r.corrupted_miou ? json(*r.corrupted_miou) : json(nullptr)},
                 {"corrupted_macc", r.corrupted_macc ? json(*r.corrupted_macc) : json(nullptr)},
                 {"corrupted_miou_sd", r.corrupted_miou_sd},
                 {"unseen_miou", r.unseen_miou ? json(*r.unseen_miou) : json(nullptr)},
                 {"unseen_macc", r.unseen_macc ? json(*r.unseen_macc) : json(nullptr)},
                 {"per_seed_corrupted_miou", a.cor_miou},
                 {"per_seed_unseen_miou", a.unseen_miou}});
  }
  out.table_markdown = aggregate_table_markdown(out.rows);
  out.corruption_markdown = corruption_table_markdown(corruption_rows);
  std::ofstream md(fs::path(ablation_dir) / "summary.md");
  md << "# Ablation summary\n\nMeans over seeds; corrupted = average over all corruption kinds and severities; "
        "unseen = average over the held-out domains.\n\n"
     << out.table_markdown << "\n## Corrupted validation per run\n\n" << out.corruption_markdown;
  std::ofstream js(fs::path(ablation_dir) / "summary.json");
  js << j.dump(2) << '\n';
  if (!md || !js) throw IoError("cannot write ablation summary into " + ablation_dir);
  return out;
}

}  // namespace stseg
