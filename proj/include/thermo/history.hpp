#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "thermo/error.hpp"
#include "thermo/train.hpp"

// Training-history persistence: a CSV table and a two-panel SVG line chart
// (accuracy and loss, train and validation series).

namespace thermo {

inline constexpr const char* kHistoryHeader =
    "epoch,train_loss,train_acc,val_loss,val_acc,val_precision,val_recall,seconds";

inline std::string history_to_csv(const TrainHistory& history) {
  if (history.empty()) throw DataError("history export: empty history");
  std::string out = std::string(kHistoryHeader) + "\n";
  char line[256];
  for (const auto& r : history.rows) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.epoch,
                  r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.val_precision,
                  r.val_recall, r.seconds);
    out += line;
  }
  return out;
}

inline TrainHistory history_from_csv(const std::string& text) {
  TrainHistory history;
  std::size_t pos = 0, line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kHistoryHeader) {
        throw DataError("history csv: bad header at line " + std::to_string(line_no));
      }
      header_seen = true;
      continue;
    }
    EpochRow row;
    if (std::sscanf(line.c_str(), "%zu,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &row.epoch,
                    &row.train_loss, &row.train_acc, &row.val_loss, &row.val_acc,
                    &row.val_precision, &row.val_recall, &row.seconds) != 8) {
      throw DataError("history csv: malformed row at line " + std::to_string(line_no));
    }
    history.rows.push_back(row);
  }
  if (!header_seen) throw DataError("history csv: missing header");
  return history;
}

namespace detail {

struct SvgSeries {
  const char* label;
  const char* color;
  std::vector<double> values;
};

inline void svg_panel(std::string& out, double x0, const char* title,
                      const std::vector<SvgSeries>& series, double y_max,
                      std::size_t epochs) {
  constexpr double kW = 400.0, kH = 280.0, kPad = 45.0;
  char buf[512];

  std::snprintf(buf, sizeof(buf),
                "<g transform=\"translate(%.1f,20)\">\n"
                "<text x=\"%.1f\" y=\"-4\" text-anchor=\"middle\" font-size=\"14\">%s</text>\n"
                "<rect x=\"%.1f\" y=\"0\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
                "stroke=\"#444\"/>\n",
                x0, kPad + (kW - kPad) / 2, title, kPad, kW - kPad, kH - kPad);
  out += buf;

  // axes labels and ticks
  for (int tick = 0; tick <= 4; ++tick) {
    const double frac = tick / 4.0;
    const double y = (kH - kPad) * (1.0 - frac);
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\" font-size=\"10\">"
                  "%.2f</text>\n",
                  kPad - 4, y + 3, frac * y_max);
    out += buf;
    const double ex = kPad + frac * (kW - kPad);
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"10\">"
                  "%zu</text>\n",
                  ex, kH - kPad + 14, static_cast<std::size_t>(1 + frac * (epochs - 1)));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\" font-size=\"11\">"
                "epoch</text>\n",
                kPad + (kW - kPad) / 2, kH - 8);
  out += buf;

  for (std::size_t s = 0; s < series.size(); ++s) {
    out += "<polyline fill=\"none\" stroke=\"";
    out += series[s].color;
    out += "\" stroke-width=\"1.5\" points=\"";
    const auto& v = series[s].values;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double fx = v.size() == 1 ? 0.0
                                      : static_cast<double>(i) /
                                            static_cast<double>(v.size() - 1);
      const double px = kPad + fx * (kW - kPad);
      const double clamped = y_max > 0 ? std::min(v[i] / y_max, 1.0) : 0.0;
      const double py = (kH - kPad) * (1.0 - clamped);
      std::snprintf(buf, sizeof(buf), "%s%.2f,%.2f", i ? " " : "", px, py);
      out += buf;
    }
    out += "\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" "
                  "stroke-width=\"2\"/>\n"
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\">%s</text>\n",
                  kPad + 8.0, kH - kPad + 26.0 + 13.0 * s, kPad + 28.0,
                  kH - kPad + 26.0 + 13.0 * s, series[s].color, kPad + 33.0,
                  kH - kPad + 30.0 + 13.0 * s, series[s].label);
    out += buf;
  }
  out += "</g>\n";
}

}  // namespace detail

// Standalone SVG, two panels (accuracy, loss) with train/val series: exactly
// four polylines in total.
inline std::string history_to_svg(const TrainHistory& history) {
  if (history.empty()) throw DataError("history export: empty history");
  std::vector<double> train_acc, val_acc, train_loss, val_loss;
  double max_loss = 0.0;
  for (const auto& r : history.rows) {
    train_acc.push_back(r.train_acc);
    val_acc.push_back(r.val_acc);
    train_loss.push_back(r.train_loss);
    val_loss.push_back(r.val_loss);
    max_loss = std::max({max_loss, r.train_loss, r.val_loss});
  }
  if (max_loss <= 0.0) max_loss = 1.0;

  std::string out =
      "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"860\" height=\"340\" "
      "viewBox=\"0 0 860 340\">\n";
  detail::svg_panel(out, 10.0, "accuracy",
                    {{"train", "#1f77b4", train_acc}, {"val", "#ff7f0e", val_acc}}, 1.0,
                    history.rows.size());
  detail::svg_panel(out, 440.0, "loss",
                    {{"train", "#1f77b4", train_loss}, {"val", "#ff7f0e", val_loss}},
                    max_loss, history.rows.size());
  out += "</svg>\n";
  return out;
}

inline void export_history(const TrainHistory& history, const std::filesystem::path& csv_path,
                           const std::filesystem::path& svg_path) {
  const std::string csv = history_to_csv(history);
  const std::string svg = history_to_svg(history);
  std::ofstream csv_out(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv_out) throw DataError("cannot write history csv: " + csv_path.string());
  csv_out << csv;
  std::ofstream svg_out(svg_path, std::ios::binary | std::ios::trunc);
  if (!svg_out) throw DataError("cannot write history svg: " + svg_path.string());
  svg_out << svg;
}

inline TrainHistory load_history(const std::filesystem::path& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw DataError("cannot open history csv: " + csv_path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return history_from_csv(text);
}

}  // namespace thermo
