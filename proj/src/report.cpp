#include "gct/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "gct/evaluation.hpp"
#include "gct/text.hpp"

namespace gct {

namespace {

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string text_bars(const std::vector<std::string>& labels, const std::vector<double>& values, int width) {
  double top = 0.0;
  for (double v : values)
    if (std::isfinite(v)) top = std::max(top, std::abs(v));
  std::size_t lw = 0;
  for (const auto& l : labels) lw = std::max(lw, l.size());
  std::string out;
  for (std::size_t i = 0; i < labels.size() && i < values.size(); ++i) {
    const double v = values[i];
    const int n = top > 0 && std::isfinite(v) ? static_cast<int>(std::lround(std::abs(v) / top * width)) : 0;
    out += pad(labels[i], lw) + " |" + std::string(static_cast<std::size_t>(n), v < 0 ? '-' : '#') + " " + fixed(v) + "\n";
  }
  return out;
}

Report build_report(const Json& summary) {
  Report r;
  const auto stories = summary.value("stories", Json::array());
  const std::string selected = summary.value("selected", std::string{});
  std::string& t = r.text;
  t += "GCT run report\n";
  if (summary.contains("seed")) t += "seed: " + std::to_string(summary["seed"].get<std::uint64_t>()) + "\n";
  if (summary.contains("explained"))
    t += "explained targets: " + std::to_string(summary["explained"].get<int>()) + " (" +
         std::to_string(summary.value("failed", Json::array()).size()) + " without a viable explanation)\n";
  if (summary.contains("recovery")) {
    const auto& rec = summary["recovery"];
    t += "planted concept recovered: " + std::to_string(rec.value("matched", 0)) + " of " +
         std::to_string(rec.value("total", 0)) + "\n";
  }

  // selected story, per target
  const Json* sel = nullptr;
  for (const auto& s : stories)
    if (s.value("candidate", std::string{}) == selected) sel = &s;
  r.driving_csv = "story_id,target,paragraph,explanation,score,p,significant\n";
  if (sel) {
    const auto& d = sel->at("driving");
    const auto expl = sel->value("explanations", Json::object());
    t += "\nDriving scores, story " + d.value("story_id", std::string{}) + " (hrf lag " +
         std::to_string(d.value("hrf_lag_trs", 0)) + " TRs, FDR q " + format_double(d.value("fdr_q", 0.05)) + ")\n";
    t += pad("target", 12) + pad("para", 6) + pad("explanation", 26) + pad("score", 9) + pad("p", 11) + "FDR\n";
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const auto& e : d.at("entries")) {
      const auto target = e.at("target").get<std::string>();
      const auto text = expl.value(target, std::string{});
      const double score = e.at("score").get<double>();
      const auto p_text = e.value("p_text", std::string{"-"});
      const bool sig = e.value("significant", false);
      t += pad(target, 12) + pad(std::to_string(e.at("paragraph").get<int>()), 6) + pad(text, 26) +
           pad(fixed(score), 9) + pad(p_text, 11) + (sig ? "*" : "") + "\n";
      r.driving_csv += csv_field(d.value("story_id", std::string{})) + "," + csv_field(target) + "," +
                       std::to_string(e.at("paragraph").get<int>()) + "," + csv_field(text) + "," +
                       format_double(score) + "," + (e.contains("p") ? format_double(e["p"].get<double>()) : "") +
                       "," + (sig ? "1" : "0") + "\n";
      labels.push_back(target);
      values.push_back(score);
    }
    t += "fraction positive: " + format_double(d.value("fraction_positive", 0.0));
    if (d.contains("pooled"))
      t += ", pooled mean " + fixed(d["pooled"].value("mean_score", 0.0)) + " sigma, " +
           d["pooled"].value("p_text", std::string{});
    t += "\n";
    // best effort; a malformed entry only loses the chart
    try {
      r.plot = text_bars(labels, values);
    } catch (...) {
      r.plot.clear();
    }
  }

  // per story
  r.stories_csv = "candidate,story_id,prompt_version,n_targets,fraction_positive,mean_score,pooled_p,prevalidation,selected\n";
  struct Agg {
    int n = 0;
    double frac = 0, mean = 0;
  };
  std::map<std::string, Agg> by_version;
  if (!stories.empty()) {
    t += "\nStories\n" + pad("candidate", 14) + pad("version", 9) + pad("targets", 9) + pad("frac+", 8) +
         pad("mean", 9) + pad("pooled p", 11) + "prevalidation\n";
  }
  for (const auto& s : stories) {
    const auto& d = s.at("driving");
    const auto cand = s.value("candidate", std::string{});
    const auto ver = s.value("prompt_version", std::string{});
    const double frac = d.value("fraction_positive", 0.0), mean = d.value("mean_score", 0.0);
    const double pooled = d.contains("pooled") ? d["pooled"].value("p", 1.0) : 1.0;
    const double pre = s.value("prevalidation", 0.0);
    const auto n = d.at("entries").size();
    t += pad(cand + (cand == selected ? "*" : ""), 14) + pad(ver, 9) + pad(std::to_string(n), 9) +
         pad(format_double(std::round(frac * 1000) / 1000), 8) + pad(fixed(mean), 9) + pad(format_p(pooled), 11) +
         fixed(pre) + "\n";
    r.stories_csv += csv_field(cand) + "," + csv_field(d.value("story_id", std::string{})) + "," + ver + "," +
                     std::to_string(n) + "," + format_double(frac) + "," + format_double(mean) + "," +
                     format_double(pooled) + "," + format_double(pre) + "," + (cand == selected ? "1" : "0") + "\n";
    auto& a = by_version[ver];
    ++a.n;
    a.frac += frac;
    a.mean += mean;
  }

  r.versions_csv = "prompt_version,stories,mean_fraction_positive,mean_score\n";
  if (!by_version.empty()) t += "\nPrompt versions\n" + pad("version", 9) + pad("stories", 9) + pad("frac+", 8) + "mean\n";
  for (const auto& [ver, a] : by_version) {
    const double f = a.frac / a.n, m = a.mean / a.n;
    t += pad(ver, 9) + pad(std::to_string(a.n), 9) + pad(format_double(std::round(f * 1000) / 1000), 8) + fixed(m) + "\n";
    r.versions_csv += ver + "," + std::to_string(a.n) + "," + format_double(f) + "," + format_double(m) + "\n";
  }
  if (!r.plot.empty()) t += "\nScores (sigma)\n" + r.plot;
  return r;
}

}  // namespace gct
