#include "mcdrop/report.hpp"

#include "mcdrop/text.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace mcdrop {
namespace {

std::string opt(const std::optional<double>& v, std::string_view missing = "") {
  return v ? format_double(*v) : std::string(missing);
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Just enough SVG for boxes, bars, lines and labels.
class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  void rect(double x, double y, double w, double h, std::string_view fill, double opacity = 1.0,
            std::string_view stroke = "none") {
    body_ << "<rect x=\"" << px(x) << "\" y=\"" << px(y) << "\" width=\"" << px(std::max(w, 0.0)) << "\" height=\""
          << px(std::max(h, 0.0)) << "\" fill=\"" << fill << "\" fill-opacity=\"" << px(opacity) << "\" stroke=\""
          << stroke << "\"/>\n";
  }
  void line(double x1, double y1, double x2, double y2, std::string_view stroke = "#333") {
    body_ << "<line x1=\"" << px(x1) << "\" y1=\"" << px(y1) << "\" x2=\"" << px(x2) << "\" y2=\"" << px(y2)
          << "\" stroke=\"" << stroke << "\"/>\n";
  }
  void text(double x, double y, std::string_view s, std::string_view anchor = "middle", int size = 11) {
    body_ << "<text x=\"" << px(x) << "\" y=\"" << px(y) << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
          << "\" font-family=\"sans-serif\">" << s << "</text>\n";
  }
  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(width_) << "\" height=\"" << px(height_)
        << "\" viewBox=\"0 0 " << px(width_) << " " << px(height_) << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << body_.str() << "</svg>\n";
    return out.str();
  }

 private:
  double width_, height_;
  std::ostringstream body_;
};

constexpr std::string_view kCorrectColor = "#3b75af";
constexpr std::string_view kIncorrectColor = "#d9812b";

struct Panel {
  double x0, y0, w, h;  // plot area
  double ymax;
  double y(double v) const { return y0 + h - (ymax > 0.0 ? v / ymax : 0.0) * h; }
};

void axes(Svg& svg, const Panel& p, std::string_view title, std::string_view subtitle) {
  svg.line(p.x0, p.y0, p.x0, p.y0 + p.h);
  svg.line(p.x0, p.y0 + p.h, p.x0 + p.w, p.y0 + p.h);
  for (int i = 0; i <= 4; ++i) {
    const double v = p.ymax * i / 4.0;
    svg.line(p.x0 - 4, p.y(v), p.x0, p.y(v));
    svg.text(p.x0 - 6, p.y(v) + 4, label(v), "end", 9);
  }
  svg.text(p.x0 + p.w / 2, p.y0 - 20, title, "middle", 12);
  svg.text(p.x0 + p.w / 2, p.y0 - 7, subtitle, "middle", 9);
}

void legend(Svg& svg, double x, double y) {
  svg.rect(x, y - 9, 10, 10, kCorrectColor, 0.6);
  svg.text(x + 14, y, "correct", "start", 10);
  svg.rect(x + 70, y - 9, 10, 10, kIncorrectColor, 0.6);
  svg.text(x + 84, y, "incorrect", "start", 10);
}

std::string panel_title(Variant v, const UncertaintyReport& r) {
  return std::string(to_string(v)) + (r.ratio ? ", R = " + label(*r.ratio) : ", R undefined");
}

}  // namespace

std::optional<double> reference_ratio(Variant variant) {
  switch (variant) {
    case Variant::bayesian1: return 8.7;
    case Variant::bayesian2: return 6.0;
    case Variant::variational: return 4.6;
    case Variant::baseline: break;
  }
  return std::nullopt;
}

std::string per_example_csv(const UncertaintyReport& report) {
  const bool sampled = std::any_of(report.records.begin(), report.records.end(),
                                   [](const ExampleRecord& r) { return r.sampled_score.has_value(); });
  const Index classes = report.records.empty() ? 0 : report.records.front().class_variance.size();
  std::string out = "id,true,predicted,correct,score,entropy";
  if (sampled) out += ",score_sampled";
  for (Index k = 0; k < classes; ++k) out += ",var_" + std::to_string(k);
  out += "\n";
  for (const auto& r : report.records) {
    out += std::to_string(r.id) + "," + std::to_string(r.truth) + "," + std::to_string(r.predicted) + "," +
           (r.correct ? "1" : "0") + "," + format_double(r.score) + "," + format_double(r.entropy);
    if (sampled) out += "," + opt(r.sampled_score);
    for (Index k = 0; k < classes; ++k) out += "," + (k < r.class_variance.size() ? format_double(r.class_variance[k]) : "");
    out += "\n";
  }
  return out;
}

std::string metrics_csv(Variant variant, const Evaluation& eval) {
  const auto& m = eval.metrics;
  const auto& r = eval.report;
  std::string out = "name,value\n";
  auto row = [&out](const std::string& name, const std::string& value) { out += name + "," + value + "\n"; };
  row("variant", std::string(to_string(variant)));
  row("method", std::string(to_string(r.method)));
  row("examples", std::to_string(r.records.size()));
  row("accuracy", format_double(m.accuracy));
  row("macro_precision", format_double(m.macro_precision));
  row("macro_recall", format_double(m.macro_recall));
  row("macro_f1", format_double(m.macro_f1));
  for (Index k = 0; k < m.precision.size(); ++k) {
    const std::string c = std::to_string(k);
    row("precision_" + c, format_double(m.precision[k]));
    row("recall_" + c, format_double(m.recall[k]));
    row("f1_" + c, format_double(m.f1[k]));
  }
  for (const auto& [name, group] : {std::pair{"correct", &r.correct}, std::pair{"incorrect", &r.incorrect}}) {
    const std::string g = name;
    row("count_" + g, std::to_string(*group ? (*group)->count : 0));
    if (!*group) continue;
    row("mean_" + g, format_double((*group)->mean));
    row("min_" + g, format_double((*group)->min));
    row("q1_" + g, format_double((*group)->q1));
    row("median_" + g, format_double((*group)->median));
    row("q3_" + g, format_double((*group)->q3));
    row("max_" + g, format_double((*group)->max));
  }
  row("ratio", opt(r.ratio, "undefined"));
  if (const auto ref = reference_ratio(variant)) row("reference_ratio", format_double(*ref));
  return out;
}

std::string histogram_csv(const std::vector<std::pair<Variant, const UncertaintyReport*>>& reports) {
  std::string out = "variant,bin,lower,upper,freq_correct,freq_incorrect\n";
  for (const auto& [variant, report] : reports) {
    const auto& h = report->histogram;
    for (std::size_t b = 0; b < h.correct.size(); ++b) {
      out += std::string(to_string(variant)) + "," + std::to_string(b) + "," + format_double(h.edges[b]) + "," +
             format_double(h.edges[b + 1]) + "," + format_double(h.correct[b]) + "," + format_double(h.incorrect[b]) +
             "\n";
    }
  }
  return out;
}

std::string comparison_csv(const std::vector<ComparisonRow>& rows, const std::vector<ComparisonSummary>& summary) {
  std::string out =
      "variant,seed,method,accuracy,macro_precision,macro_recall,macro_f1,mean_correct,mean_incorrect,ratio,"
      "reference_ratio\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.variant)) + "," + std::to_string(r.seed) + "," + std::string(to_string(r.method)) +
           "," + format_double(r.accuracy) + "," + format_double(r.macro_precision) + "," +
           format_double(r.macro_recall) + "," + format_double(r.macro_f1) + "," + opt(r.mean_correct) + "," +
           opt(r.mean_incorrect) + "," + opt(r.ratio, "undefined") + "," + opt(reference_ratio(r.variant)) + "\n";
  }
  for (const auto& s : summary) {
    const std::string method = [&] {
      for (const auto& r : rows) {
        if (r.variant == s.variant) return std::string(to_string(r.method));
      }
      return std::string();
    }();
    using Field = SummaryStat ComparisonSummary::*;
    auto cell = [&](Field f, double SummaryStat::*stat) {
      const SummaryStat& st = s.*f;
      return st.count > 0 ? format_double(st.*stat) : std::string(f == &ComparisonSummary::ratio ? "undefined" : "");
    };
    for (const auto& [name, stat] : {std::pair{"mean", &SummaryStat::mean}, std::pair{"min", &SummaryStat::min},
                                     std::pair{"max", &SummaryStat::max}}) {
      out += std::string(to_string(s.variant)) + "," + name + "," + method + "," +
             cell(&ComparisonSummary::accuracy, stat) + "," + cell(&ComparisonSummary::macro_precision, stat) + "," +
             cell(&ComparisonSummary::macro_recall, stat) + "," + cell(&ComparisonSummary::macro_f1, stat) + "," +
             cell(&ComparisonSummary::mean_correct, stat) + "," + cell(&ComparisonSummary::mean_incorrect, stat) + "," +
             cell(&ComparisonSummary::ratio, stat) + "," + opt(reference_ratio(s.variant)) + "\n";
    }
  }
  return out;
}

std::string train_log_csv(const std::vector<EpochRecord>& log) {
  std::string out = "epoch,split,total,cross_entropy,kld,kld_weight,accuracy\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + e.split + "," + format_double(e.loss.total) + "," +
           format_double(e.loss.cross_entropy) + "," + format_double(e.loss.kld) + "," +
           format_double(e.loss.kld_weight) + "," + format_double(e.accuracy) + "\n";
  }
  return out;
}

std::string uncertainty_box_svg(const std::vector<std::pair<Variant, const UncertaintyReport*>>& reports) {
  constexpr double kPanelW = 260, kPanelH = 300;
  Svg svg(kPanelW * static_cast<double>(std::max<std::size_t>(reports.size(), 1)), kPanelH);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& [variant, r] = reports[i];
    double ymax = 0.0;
    for (const auto* g : {&r->correct, &r->incorrect}) {
      if (*g) ymax = std::max(ymax, (*g)->max);
    }
    if (ymax <= 0.0) ymax = 1.0;
    const Panel p{kPanelW * static_cast<double>(i) + 50, 40, kPanelW - 70, kPanelH - 90, ymax};
    axes(svg, p, panel_title(variant, *r), to_string(r->method));
    const std::array<std::pair<const std::optional<GroupSummary>*, std::string_view>, 2> groups{
        {{&r->correct, "correct"}, {&r->incorrect, "incorrect"}}};
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const auto& [group, name] = groups[k];
      const double cx = p.x0 + p.w * (k == 0 ? 0.3 : 0.7);
      svg.text(cx, p.y0 + p.h + 16, name, "middle", 10);
      if (!*group) {
        svg.text(cx, p.y0 + p.h / 2, "empty", "middle", 10);
        continue;
      }
      const GroupSummary& s = **group;
      const auto color = k == 0 ? kCorrectColor : kIncorrectColor;
      svg.line(cx, p.y(s.min), cx, p.y(s.q1));
      svg.line(cx, p.y(s.q3), cx, p.y(s.max));
      svg.line(cx - 10, p.y(s.min), cx + 10, p.y(s.min));
      svg.line(cx - 10, p.y(s.max), cx + 10, p.y(s.max));
      svg.rect(cx - 25, p.y(s.q3), 50, p.y(s.q1) - p.y(s.q3), color, 0.6, "#333");
      svg.line(cx - 25, p.y(s.median), cx + 25, p.y(s.median), "#000");
      svg.text(cx, p.y0 + p.h + 29, "n=" + std::to_string(s.count), "middle", 9);
      svg.text(cx, p.y0 + p.h + 41, "mean " + label(s.mean), "middle", 9);
    }
  }
  return svg.str();
}

std::string uncertainty_hist_svg(const std::vector<std::pair<Variant, const UncertaintyReport*>>& reports) {
  constexpr double kPanelW = 320, kPanelH = 260;
  Svg svg(kPanelW * static_cast<double>(std::max<std::size_t>(reports.size(), 1)), kPanelH);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& [variant, r] = reports[i];
    const auto& h = r->histogram;
    double ymax = 0.0;
    for (std::size_t b = 0; b < h.correct.size(); ++b) ymax = std::max({ymax, h.correct[b], h.incorrect[b]});
    if (ymax <= 0.0) ymax = 1.0;
    const Panel p{kPanelW * static_cast<double>(i) + 45, 40, kPanelW - 65, kPanelH - 90, ymax};
    axes(svg, p, panel_title(variant, *r), to_string(r->method));
    const double bw = p.w / static_cast<double>(std::max<std::size_t>(h.correct.size(), 1));
    for (std::size_t b = 0; b < h.correct.size(); ++b) {
      const double x = p.x0 + bw * static_cast<double>(b);
      svg.rect(x, p.y(h.correct[b]), bw, p.y0 + p.h - p.y(h.correct[b]), kCorrectColor, 0.5);
      svg.rect(x, p.y(h.incorrect[b]), bw, p.y0 + p.h - p.y(h.incorrect[b]), kIncorrectColor, 0.5);
    }
    svg.text(p.x0, p.y0 + p.h + 14, "0", "middle", 9);
    svg.text(p.x0 + p.w, p.y0 + p.h + 14, label(h.edges.empty() ? 0.0 : h.edges.back()), "middle", 9);
    svg.text(p.x0 + p.w / 2, p.y0 + p.h + 28, "uncertainty score", "middle", 10);
    legend(svg, p.x0 + 10, p.y0 + p.h + 44);
  }
  return svg.str();
}

}  // namespace mcdrop
