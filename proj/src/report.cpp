#include "stseg/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "stseg/corruption.hpp"
#include "stseg/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stseg {
namespace {

json optional_vector(const std::vector<std::optional<double>>& v) {
  json out = json::array();
  for (const auto& x : v) out.push_back(x ? json(*x) : json(nullptr));
  return out;
}

std::vector<std::optional<double>> parse_optional_vector(const json& j) {
  std::vector<std::optional<double>> out;
  for (const auto& x : j) out.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
  return out;
}

json report_to_json(const MetricsReport& m) {
  return json{{"split", m.split},
              {"fingerprint", m.fingerprint},
              {"class_names", m.class_names},
              {"iou", optional_vector(m.iou)},
              {"acc", optional_vector(m.acc)},
              {"miou", m.miou},
              {"macc", m.macc},
              {"classes_present", m.classes_present},
              {"absent_classes_excluded", true},
              {"grouping",
               {{"traversable", m.grouping.traversable}, {"non_traversable", m.grouping.non_traversable}}},
              {"groups",
               {{"traversable", {{"precision", m.groups.traversable.precision}, {"recall", m.groups.traversable.recall}}},
                {"non_traversable",
                 {{"precision", m.groups.non_traversable.precision}, {"recall", m.groups.non_traversable.recall}}}}},
              {"samples", m.samples},
              {"pixels", m.pixels},
              {"confusion", m.confusion}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport m;
  m.split = j.at("split").get<std::string>();
  m.fingerprint = j.at("fingerprint").get<std::string>();
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.iou = parse_optional_vector(j.at("iou"));
  m.acc = parse_optional_vector(j.at("acc"));
  m.miou = j.at("miou").get<double>();
  m.macc = j.at("macc").get<double>();
  m.classes_present = j.at("classes_present").get<int>();
  m.grouping.traversable = j.at("grouping").at("traversable").get<std::set<int>>();
  m.grouping.non_traversable = j.at("grouping").at("non_traversable").get<std::set<int>>();
  const auto& g = j.at("groups");
  m.groups.traversable = {g.at("traversable").at("precision").get<double>(), g.at("traversable").at("recall").get<double>()};
  m.groups.non_traversable = {g.at("non_traversable").at("precision").get<double>(),
                              g.at("non_traversable").at("recall").get<double>()};
  m.samples = j.at("samples").get<std::uint64_t>();
  m.pixels = j.at("pixels").get<std::uint64_t>();
  m.confusion = j.at("confusion").get<std::vector<std::uint64_t>>();
  return m;
}

std::string fmt(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string pct(std::optional<double> v) { return v ? fmt(100.0 * *v) : "n/a"; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

// Mean over severities of one corruption kind.
std::optional<std::pair<double, double>> kind_average(const EvaluationResults& r, CorruptionKind kind) {
  const auto it = r.corruptions.find(std::string(corruption_name(kind)));
  if (it == r.corruptions.end() || it->second.empty()) return std::nullopt;
  double miou = 0.0, macc = 0.0;
  for (const auto& [sev, rep] : it->second) {
    miou += rep.miou;
    macc += rep.macc;
  }
  const double n = static_cast<double>(it->second.size());
  return std::make_pair(miou / n, macc / n);
}

}  // namespace

MetricsReport make_report(const ConfusionMatrix& cm, const Grouping& grouping, const std::string& split,
                          const std::string& fingerprint, std::uint64_t samples,
                          const std::vector<std::string>& class_names) {
  MetricsReport r;
  const ClassMetrics m = miou_macc(cm);
  r.split = split;
  r.fingerprint = fingerprint;
  r.class_names = class_names;
  r.iou = m.iou;
  r.acc = m.acc;
  r.miou = m.miou;
  r.macc = m.macc;
  r.classes_present = m.classes_present;
  r.grouping = grouping;
  r.groups = precision_recall(cm, grouping);
  r.samples = samples;
  r.pixels = cm.total();
  r.confusion = cm.counts();
  return r;
}

std::optional<double> EvaluationResults::corrupted_miou() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& [kind, bysev] : corruptions) {
    for (const auto& [sev, rep] : bysev) {
      sum += rep.miou;
      ++n;
    }
  }
  return n > 0 ? std::optional<double>(sum / n) : std::nullopt;
}

std::optional<double> EvaluationResults::corrupted_macc() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& [kind, bysev] : corruptions) {
    for (const auto& [sev, rep] : bysev) {
      sum += rep.macc;
      ++n;
    }
  }
  return n > 0 ? std::optional<double>(sum / n) : std::nullopt;
}

const MetricsReport* EvaluationResults::split(const std::string& name) const {
  for (const auto& s : splits) {
    if (s.split == name) return &s;
  }
  return nullptr;
}

std::string results_to_json(const EvaluationResults& r) {
  json j;
  j["format"] = "stseg-report";
  j["version"] = kReportVersion;
  j["fingerprint"] = r.fingerprint;
  j["splits"] = json::array();
  for (const auto& s : r.splits) j["splits"].push_back(report_to_json(s));
  j["corruptions"] = json::object();
  for (const auto& [kind, bysev] : r.corruptions) {
    json k = json::object();
    for (const auto& [sev, rep] : bysev) k[std::to_string(sev)] = report_to_json(rep);
    j["corruptions"][kind] = std::move(k);
  }
  return j.dump(1);
}

EvaluationResults results_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("format") != "stseg-report") throw ValidationError("not a report file");
    if (j.at("version").get<int>() != kReportVersion) throw ValidationError("unsupported report version");
    EvaluationResults r;
    r.fingerprint = j.at("fingerprint").get<std::string>();
    for (const auto& s : j.at("splits")) r.splits.push_back(report_from_json(s));
    for (const auto& [kind, bysev] : j.at("corruptions").items()) {
      for (const auto& [sev, rep] : bysev.items()) r.corruptions[kind][std::stoi(sev)] = report_from_json(rep);
    }
    return r;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed report: ") + e.what());
  }
}

EvaluationResults load_results(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read report " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return results_from_json(text);
}

std::string severity_chart_svg(const EvaluationResults& r, bool use_macc) {
  constexpr int kW = 640, kH = 400, kLeft = 60, kRight = 170, kTop = 30, kBottom = 50;
  constexpr std::array<const char*, kNumCorruptionKinds> kColors = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const double pw = kW - kLeft - kRight;
  const double ph = kH - kTop - kBottom;
  auto px = [&](int sev) { return kLeft + pw * (sev - 1) / 4.0; };
  auto py = [&](double v) { return kTop + ph * (1.0 - v); };
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << kLeft << "\" y=\"18\">" << (use_macc ? "mAcc" : "mIoU") << " vs. corruption level</text>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = k / 5.0;
    s << "<line class=\"grid\" x1=\"" << kLeft << "\" y1=\"" << py(v) << "\" x2=\"" << kLeft + pw << "\" y2=\"" << py(v)
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << kLeft - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fmt(100.0 * v, 0) << "</text>\n";
  }
  for (int sev = 1; sev <= kNumSeverities; ++sev) {
    s << "<text class=\"xtick\" x=\"" << px(sev) << "\" y=\"" << kTop + ph + 18 << "\" text-anchor=\"middle\">" << sev
      << "</text>\n";
  }
  s << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">corruption level</text>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kTop + ph << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + ph << "\" x2=\"" << kLeft + pw << "\" y2=\"" << kTop + ph
    << "\" stroke=\"black\"/>\n";
  int legend = 0;
  for (int k = 0; k < kNumCorruptionKinds; ++k) {
    const auto kind = kAllCorruptions[k];
    const auto it = r.corruptions.find(std::string(corruption_name(kind)));
    if (it == r.corruptions.end() || it->second.empty()) continue;
    s << "<polyline class=\"curve\" data-kind=\"" << corruption_name(kind) << "\" fill=\"none\" stroke=\"" << kColors[k]
      << "\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const auto& [sev, rep] : it->second) {
      s << (first ? "" : " ") << px(sev) << "," << py(use_macc ? rep.macc : rep.miou);
      first = false;
    }
    s << "\"/>\n";
    const double ly = kTop + 10 + 18.0 * legend++;
    s << "<line x1=\"" << kW - kRight + 15 << "\" y1=\"" << ly << "\" x2=\"" << kW - kRight + 35 << "\" y2=\"" << ly
      << "\" stroke=\"" << kColors[k] << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << kW - kRight + 40 << "\" y=\"" << ly + 4 << "\">" << corruption_label(kind) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string corruption_table_markdown(const std::vector<std::pair<std::string, EvaluationResults>>& rows) {
  std::ostringstream s;
  s << "| Method (mIoU / mAcc) |";
  for (auto kind : kAllCorruptions) s << ' ' << corruption_label(kind) << " |";
  s << " Avg. |\n|---|";
  for (int k = 0; k <= kNumCorruptionKinds; ++k) s << "---|";
  s << '\n';
  for (const auto& [label, r] : rows) {
    s << "| " << label << " |";
    for (auto kind : kAllCorruptions) {
      const auto avg = kind_average(r, kind);
      s << ' ' << (avg ? fmt(100.0 * avg->first) + " / " + fmt(100.0 * avg->second) : std::string("n/a")) << " |";
    }
    s << ' ' << pct(r.corrupted_miou()) << " / " << pct(r.corrupted_macc()) << " |\n";
  }
  return s.str();
}

std::string aggregate_table_markdown(const std::vector<AggregateRow>& rows) {
  std::ostringstream s;
  s << "| Method | Runs | Clean mIoU | Clean mAcc | Corrupted mIoU | Corrupted mAcc | Unseen mIoU | Unseen mAcc |\n";
  s << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    s << "| " << r.label << " | " << r.runs << " | " << fmt(100.0 * r.clean_miou) << " | " << fmt(100.0 * r.clean_macc)
      << " | " << pct(r.corrupted_miou);
    if (r.corrupted_miou && r.runs > 1) s << " ± " << fmt(100.0 * r.corrupted_miou_sd);
    s << " | " << pct(r.corrupted_macc) << " | " << pct(r.unseen_miou) << " | " << pct(r.unseen_macc) << " |\n";
  }
  return s.str();
}

void emit_report(const EvaluationResults& r, const std::string& out_dir, const std::string& method_label) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir)) throw IoError("cannot create report directory " + out_dir);
  const fs::path dir(out_dir);
  write_text(dir / "report.json", results_to_json(r) + "\n");
  if (!r.corruptions.empty()) {
    write_text(dir / "severity_miou.svg", severity_chart_svg(r, false));
    write_text(dir / "severity_macc.svg", severity_chart_svg(r, true));
  }
  std::ostringstream md;
  md << "# Evaluation of " << method_label << "\n\ncheckpoint fingerprint `" << r.fingerprint << "`\n\n";
  md << "| Split | Samples | mIoU | mAcc | Trav. precision | Trav. recall | Non-trav. precision | Non-trav. recall |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& s : r.splits) {
    md << "| " << s.split << " | " << s.samples << " | " << fmt(100.0 * s.miou) << " | " << fmt(100.0 * s.macc) << " | "
       << fmt(100.0 * s.groups.traversable.precision) << " | " << fmt(100.0 * s.groups.traversable.recall) << " | "
       << fmt(100.0 * s.groups.non_traversable.precision) << " | " << fmt(100.0 * s.groups.non_traversable.recall)
       << " |\n";
  }
  if (!r.corruptions.empty()) {
    md << "\n## Corrupted validation\n\n" << corruption_table_markdown({{method_label, r}});
  }
  md << "\nMeans are taken over classes present in each split's ground truth.\n";
  write_text(dir / "summary.md", md.str());
}

std::string file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace stseg
