#include "stseg/config.hpp"

#include <cctype>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <json.hpp>

#include "stseg/error.hpp"

using nlohmann::json;

namespace stseg {
namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ValidationError("config: '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("config: unknown key '" + (section.empty() ? key : section + "." + key) + "'");
  }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json corruptions_to_json(const std::vector<CorruptionKind>& kinds) {
  json out = json::array();
  for (auto k : kinds) out.push_back(std::string(corruption_name(k)));
  return out;
}

}  // namespace

std::string style_mode_name(StyleMode m) {
  switch (m) {
    case StyleMode::kNone: return "none";
    case StyleMode::kRandom: return "random";
    case StyleMode::kRealistic: return "realistic";
    case StyleMode::kGenerated: return "generated";
  }
  return "none";
}

StyleMode style_mode_from_name(const std::string& name) {
  for (auto m : {StyleMode::kNone, StyleMode::kRandom, StyleMode::kRealistic, StyleMode::kGenerated}) {
    if (style_mode_name(m) == name) return m;
  }
  throw ValidationError("config: unknown style_mode '" + name + "' (none, random, realistic, generated)");
}

std::vector<AblationRowSpec> default_ablation_rows() {
  return {{"Baseline", StyleMode::kNone, false},
          {"Baseline + Rand style", StyleMode::kRandom, false},
          {"Baseline + Real style", StyleMode::kRealistic, false},
          {"Baseline + SE", StyleMode::kGenerated, false},
          {"Baseline + TR", StyleMode::kNone, true},
          {"Baseline + SE + TR", StyleMode::kGenerated, true}};
}

std::string row_slug(const std::string& label) {
  std::string out;
  for (char ch : label) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

void validate(const TextureConfig& cfg) {
  if (cfg.corpus_dir.empty() && (cfg.classes < 2 || cfg.classes > 6)) {
    throw ValidationError("texture: classes must be in 2..6 (classification needs at least two classes)");
  }
  if (cfg.patch < 16 || cfg.patch % 16 != 0) throw ValidationError("texture: patch size must be a multiple of 16");
  if (cfg.train_per_class < 1 || cfg.val_per_class < 1 || cfg.epochs < 1 || cfg.batch < 1) {
    throw ValidationError("texture: sample counts, epochs and batch must be >= 1");
  }
  if (!(cfg.lr > 0) || cfg.weight_decay < 0) throw ValidationError("texture: invalid optimizer settings");
  if (cfg.min_accuracy < 0 || cfg.min_accuracy > 1) throw ValidationError("texture: min_accuracy must be in [0,1]");
}

void validate(const Config& cfg) {
  validate(cfg.data);
  validate(cfg.texture);
  validate(cfg.model);
  const auto& t = cfg.train;
  if (t.optimizer.kind != "adamw") throw ValidationError("train.optimizer.kind: only 'adamw' is supported");
  if (t.schedule.kind != "poly") throw ValidationError("train.schedule.kind: only 'poly' is supported");
  if (!(t.optimizer.lr > 0)) throw ValidationError("train.optimizer.lr must be > 0");
  for (double b : t.optimizer.betas) {
    if (b < 0 || b >= 1) throw ValidationError("train.optimizer.betas must be in [0,1)");
  }
  if (t.optimizer.weight_decay < 0) throw ValidationError("train.optimizer.weight_decay must be >= 0");
  if (t.schedule.power < 0) throw ValidationError("train.schedule.power must be >= 0");
  if (t.batch_size < 1 || t.unlabeled_batch_size < 1) throw ValidationError("train: batch sizes must be >= 1");
  if (t.steps < 1) throw ValidationError("train.steps must be >= 1");
  if (t.ema_alpha < 0 || t.ema_alpha > 1) throw ValidationError("train.ema_alpha must be in [0,1]");
  if (t.buffer_capacity < 1) throw ValidationError("train.buffer_capacity must be >= 1");
  if (t.styled_layers.empty()) throw ValidationError("train.styled_layers must not be empty");
  for (int l : t.styled_layers) {
    if (l < 1 || l > kNumStages) throw ValidationError("train.styled_layers entries must be in 1..4");
  }
  for (double g : t.texture_weights) {
    if (g < 0) throw ValidationError("train.texture_weights must be >= 0");
  }
  for (int c : t.natural_classes) {
    if (c < 0 || c >= cfg.model.num_classes) throw ValidationError("train.natural_classes: class id out of range");
  }
  if (t.checkpoint_every < 1 || t.log_every < 1) throw ValidationError("train: checkpoint_every/log_every must be >= 1");
  if (t.gamma_table_points < 2) throw ValidationError("train.gamma_table_points must be >= 2");
  if (t.random_style_scale < 0) throw ValidationError("train.random_style_scale must be >= 0");
  validate(cfg.eval.grouping, cfg.model.num_classes);
  if (cfg.eval.batch < 1) throw ValidationError("eval.batch must be >= 1");
  if (cfg.ablation.seeds.empty()) throw ValidationError("ablation.seeds must not be empty");
  const auto rows = default_ablation_rows();
  for (const auto& r : cfg.ablation.rows) {
    bool known = false;
    for (const auto& d : rows) known = known || d.label == r;
    if (!known) throw ValidationError("ablation.rows: unknown row '" + r + "'");
  }
}

Config config_from_json(const std::string& json_text, Config cfg) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    check_keys(j, "", {"seed", "data", "texture", "model", "train", "eval", "ablation"});
    get(j, "seed", cfg.seed);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      check_keys(d, "data", {"root", "height", "width", "train", "val", "unseen", "unseen_domains", "realistic",
                             "corrupt_source", "corrupt_count", "corruptions", "severities"});
      get(d, "root", cfg.data.root);
      get(d, "height", cfg.data.height);
      get(d, "width", cfg.data.width);
      get(d, "train", cfg.data.train);
      get(d, "val", cfg.data.val);
      get(d, "unseen", cfg.data.unseen);
      get(d, "unseen_domains", cfg.data.unseen_domains);
      get(d, "realistic", cfg.data.realistic);
      get(d, "corrupt_source", cfg.data.corrupt_source);
      get(d, "corrupt_count", cfg.data.corrupt_count);
      if (d.contains("corruptions")) {
        cfg.data.corruptions.clear();
        for (const auto& k : d.at("corruptions")) cfg.data.corruptions.push_back(corruption_from_name(k.get<std::string>()));
      }
      get(d, "severities", cfg.data.severities);
    }
    if (j.contains("texture")) {
      const auto& t = j.at("texture");
      check_keys(t, "texture", {"checkpoint", "corpus_dir", "classes", "patch", "train_per_class", "val_per_class",
                                "epochs", "batch", "lr", "weight_decay", "min_accuracy"});
      get(t, "checkpoint", cfg.texture.checkpoint);
      get(t, "corpus_dir", cfg.texture.corpus_dir);
      get(t, "classes", cfg.texture.classes);
      get(t, "patch", cfg.texture.patch);
      get(t, "train_per_class", cfg.texture.train_per_class);
      get(t, "val_per_class", cfg.texture.val_per_class);
      get(t, "epochs", cfg.texture.epochs);
      get(t, "batch", cfg.texture.batch);
      get(t, "lr", cfg.texture.lr);
      get(t, "weight_decay", cfg.texture.weight_decay);
      get(t, "min_accuracy", cfg.texture.min_accuracy);
    }
    if (j.contains("model")) {
      const auto& m = j.at("model");
      check_keys(m, "model", {"widths", "embed_dim", "num_classes"});
      get(m, "widths", cfg.model.widths);
      get(m, "embed_dim", cfg.model.embed_dim);
      get(m, "num_classes", cfg.model.num_classes);
    }
    if (j.contains("train")) {
      const auto& t = j.at("train");
      check_keys(t, "train", {"optimizer", "schedule", "batch_size", "unlabeled_batch_size", "steps", "se", "tr",
                              "style_mode", "ema_alpha", "buffer_capacity", "styled_layers", "texture_weights",
                              "natural_classes", "loss_weights", "random_style_scale", "gamma_table_points",
                              "checkpoint_every", "log_every", "realistic_source"});
      if (t.contains("optimizer")) {
        const auto& o = t.at("optimizer");
        check_keys(o, "train.optimizer", {"kind", "lr", "betas", "weight_decay"});
        get(o, "kind", cfg.train.optimizer.kind);
        get(o, "lr", cfg.train.optimizer.lr);
        get(o, "betas", cfg.train.optimizer.betas);
        get(o, "weight_decay", cfg.train.optimizer.weight_decay);
      }
      if (t.contains("schedule")) {
        const auto& s = t.at("schedule");
        check_keys(s, "train.schedule", {"kind", "power"});
        get(s, "kind", cfg.train.schedule.kind);
        get(s, "power", cfg.train.schedule.power);
      }
      get(t, "batch_size", cfg.train.batch_size);
      get(t, "unlabeled_batch_size", cfg.train.unlabeled_batch_size);
      get(t, "steps", cfg.train.steps);
      if (t.contains("se")) {
        // shorthand: "se": true selects generated styles, false disables the augmented path
        cfg.train.style_mode = t.at("se").get<bool>() ? StyleMode::kGenerated : StyleMode::kNone;
      }
      if (t.contains("style_mode")) {
        const StyleMode m = style_mode_from_name(t.at("style_mode").get<std::string>());
        if (t.contains("se") && t.at("se").get<bool>() != (m == StyleMode::kGenerated)) {
          throw ValidationError("config: train.se contradicts train.style_mode");
        }
        cfg.train.style_mode = m;
      }
      get(t, "tr", cfg.train.tr);
      get(t, "ema_alpha", cfg.train.ema_alpha);
      get(t, "buffer_capacity", cfg.train.buffer_capacity);
      get(t, "styled_layers", cfg.train.styled_layers);
      get(t, "texture_weights", cfg.train.texture_weights);
      get(t, "natural_classes", cfg.train.natural_classes);
      if (t.contains("loss_weights")) {
        const auto& w = t.at("loss_weights");
        check_keys(w, "train.loss_weights", {"ce", "style", "align", "tex"});
        get(w, "ce", cfg.train.loss_weights.ce);
        get(w, "style", cfg.train.loss_weights.style);
        get(w, "align", cfg.train.loss_weights.align);
        get(w, "tex", cfg.train.loss_weights.tex);
      }
      get(t, "random_style_scale", cfg.train.random_style_scale);
      get(t, "gamma_table_points", cfg.train.gamma_table_points);
      get(t, "checkpoint_every", cfg.train.checkpoint_every);
      get(t, "log_every", cfg.train.log_every);
      get(t, "realistic_source", cfg.train.realistic_source);
    }
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      check_keys(e, "eval", {"splits", "grouping", "batch"});
      get(e, "splits", cfg.eval.splits);
      if (e.contains("grouping")) {
        const auto& g = e.at("grouping");
        check_keys(g, "eval.grouping", {"traversable", "non_traversable"});
        get(g, "traversable", cfg.eval.grouping.traversable);
        get(g, "non_traversable", cfg.eval.grouping.non_traversable);
      }
      get(e, "batch", cfg.eval.batch);
    }
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      check_keys(a, "ablation", {"seeds", "rows"});
      get(a, "seeds", cfg.ablation.seeds);
      get(a, "rows", cfg.ablation.rows);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: wrong value type: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json(text);
}

std::string config_to_json(const Config& cfg) {
  json j;
  j["seed"] = cfg.seed;
  const auto& d = cfg.data;
  j["data"] = {{"root", d.root},
               {"height", d.height},
               {"width", d.width},
               {"train", d.train},
               {"val", d.val},
               {"unseen", d.unseen},
               {"unseen_domains", d.unseen_domains},
               {"realistic", d.realistic},
               {"corrupt_source", d.corrupt_source},
               {"corrupt_count", d.corrupt_count},
               {"corruptions", corruptions_to_json(d.corruptions)},
               {"severities", d.severities}};
  const auto& t = cfg.texture;
  j["texture"] = {{"checkpoint", t.checkpoint}, {"corpus_dir", t.corpus_dir},
                  {"classes", t.classes},       {"patch", t.patch},
                  {"train_per_class", t.train_per_class}, {"val_per_class", t.val_per_class},
                  {"epochs", t.epochs},         {"batch", t.batch},
                  {"lr", t.lr},                 {"weight_decay", t.weight_decay},
                  {"min_accuracy", t.min_accuracy}};
  j["model"] = {{"widths", cfg.model.widths}, {"embed_dim", cfg.model.embed_dim}, {"num_classes", cfg.model.num_classes}};
  const auto& tr = cfg.train;
  j["train"] = {
      {"optimizer",
       {{"kind", tr.optimizer.kind}, {"lr", tr.optimizer.lr}, {"betas", tr.optimizer.betas},
        {"weight_decay", tr.optimizer.weight_decay}}},
      {"schedule", {{"kind", tr.schedule.kind}, {"power", tr.schedule.power}}},
      {"batch_size", tr.batch_size},
      {"unlabeled_batch_size", tr.unlabeled_batch_size},
      {"steps", tr.steps},
      {"style_mode", style_mode_name(tr.style_mode)},
      {"tr", tr.tr},
      {"ema_alpha", tr.ema_alpha},
      {"buffer_capacity", tr.buffer_capacity},
      {"styled_layers", tr.styled_layers},
      {"texture_weights", tr.texture_weights},
      {"natural_classes", tr.natural_classes},
      {"loss_weights",
       {{"ce", tr.loss_weights.ce}, {"style", tr.loss_weights.style}, {"align", tr.loss_weights.align},
        {"tex", tr.loss_weights.tex}}},
      {"random_style_scale", tr.random_style_scale},
      {"gamma_table_points", tr.gamma_table_points},
      {"checkpoint_every", tr.checkpoint_every},
      {"log_every", tr.log_every},
      {"realistic_source", tr.realistic_source}};
  j["eval"] = {{"splits", cfg.eval.splits},
               {"grouping",
                {{"traversable", cfg.eval.grouping.traversable}, {"non_traversable", cfg.eval.grouping.non_traversable}}},
               {"batch", cfg.eval.batch}};
  j["ablation"] = {{"seeds", cfg.ablation.seeds}, {"rows", cfg.ablation.rows}};
  return j.dump(2);
}

}  // namespace stseg
