#include "otfit/plot.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "otfit/error.hpp"

namespace otfit {

namespace {

constexpr double kWidth = 480.0;
constexpr double kHeight = 480.0;
constexpr double kMargin = 40.0;

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const auto end = line.find(',', pos);
    out.push_back(line.substr(pos, end == std::string::npos ? std::string::npos : end - pos));
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return out;
}

std::optional<double> parse_field(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw FormatError(FormatErrorKind::Io, "write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatErrorKind::Io, "cannot open " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  return buf.str();
}

std::string svg_open() {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) +
         "\" viewBox=\"0 0 " + px(kWidth) + " " + px(kHeight) + "\">\n" +
         "<rect x=\"0\" y=\"0\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) + "\" fill=\"white\"/>\n";
}

std::string frame(const std::string& x_lo, const std::string& x_hi, const std::string& y_lo, const std::string& y_hi) {
  const double w = kWidth - 2 * kMargin, h = kHeight - 2 * kMargin;
  std::string s = "<rect x=\"" + px(kMargin) + "\" y=\"" + px(kMargin) + "\" width=\"" + px(w) + "\" height=\"" +
                  px(h) + "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  auto label = [](double x, double y, const std::string& anchor, const std::string& text) {
    return "<text x=\"" + px(x) + "\" y=\"" + px(y) + "\" font-size=\"11\" text-anchor=\"" + anchor + "\">" + text +
           "</text>\n";
  };
  s += label(kMargin, kHeight - kMargin + 14, "start", x_lo);
  s += label(kWidth - kMargin, kHeight - kMargin + 14, "end", x_hi);
  s += label(kMargin - 4, kHeight - kMargin, "end", y_lo);
  s += label(kMargin - 4, kMargin + 10, "end", y_hi);
  return s;
}

}  // namespace

void write_sample_dump(const std::filesystem::path& path, const SampleDump& dump) {
  const std::size_t d = std::max(dump.generated.dim(), dump.targets.dim());
  if ((dump.generated.size() > 0 && dump.generated.dim() != d) || (dump.targets.size() > 0 && dump.targets.dim() != d)) {
    throw InvalidInput("write_sample_dump: generated/target dimension mismatch");
  }
  std::string s = "set";
  for (std::size_t k = 0; k < d; ++k) s += ",x" + std::to_string(k);
  s += '\n';
  auto rows = [&s](const PointSet& pts, const char* tag) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s += tag;
      for (double v : pts.row(i)) s += ',' + num(v);
      s += '\n';
    }
  };
  rows(dump.targets, "target");
  rows(dump.generated, "generated");
  write_text(path, s);
}

SampleDump read_sample_dump(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatErrorKind::Malformed, path.string() + ": empty sample dump");
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "set" || header.size() < 2) {
    throw FormatError(FormatErrorKind::Malformed, path.string() + ": missing 'set,x0,...' header");
  }
  const std::size_t d = header.size() - 1;
  SampleDump dump{PointSet(0, d), PointSet(0, d)};
  std::size_t line_no = 1;
  Point p(d);
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != d + 1) {
      throw FormatError(FormatErrorKind::Malformed, path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    for (std::size_t k = 0; k < d; ++k) {
      const auto v = parse_field(f[k + 1]);
      if (!v) throw FormatError(FormatErrorKind::Malformed, path.string() + ":" + std::to_string(line_no) + ": bad number");
      p[k] = *v;
    }
    if (f[0] == "generated") {
      dump.generated.push_back(p);
    } else if (f[0] == "target") {
      dump.targets.push_back(p);
    } else {
      throw FormatError(FormatErrorKind::Malformed, path.string() + ":" + std::to_string(line_no) + ": unknown set '" + f[0] + "'");
    }
  }
  return dump;
}

std::string scatter_svg(const SampleDump& dump, AxisRange x, AxisRange y) {
  if (!(x.max > x.min) || !(y.max > y.min)) throw InvalidInput("scatter_svg: empty axis range");
  for (const auto* pts : {&dump.targets, &dump.generated}) {
    if (pts->size() > 0 && pts->dim() != 2) throw InvalidInput("scatter_svg: points are not 2D");
  }
  const double w = kWidth - 2 * kMargin, h = kHeight - 2 * kMargin;
  auto sx = [&](double v) { return kMargin + (v - x.min) / (x.max - x.min) * w; };
  auto sy = [&](double v) { return kHeight - kMargin - (v - y.min) / (y.max - y.min) * h; };
  std::string s = svg_open();
  s += frame(num(x.min), num(x.max), num(y.min), num(y.max));
  auto markers = [&](const PointSet& pts, const char* color, const char* cls) {
    s += std::string("<g class=\"") + cls + "\" fill=\"" + color + "\" fill-opacity=\"0.6\">\n";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      s += "<circle cx=\"" + px(sx(pts.row(i)[0])) + "\" cy=\"" + px(sy(pts.row(i)[1])) + "\" r=\"1.8\"/>\n";
    }
    s += "</g>\n";
  };
  markers(dump.targets, "#d62728", "target");
  markers(dump.generated, "#1f77b4", "generated");
  s += "</svg>\n";
  return s;
}

std::string line_svg(const std::vector<double>& x, const std::vector<Series>& series, const std::string& x_label) {
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = 0.0, y_hi = -INFINITY;
  for (double v : x) {
    x_lo = std::min(x_lo, v);
    x_hi = std::max(x_hi, v);
  }
  for (const auto& s : series) {
    for (double v : s.values) {
      if (std::isfinite(v)) {
        y_lo = std::min(y_lo, v);
        y_hi = std::max(y_hi, v);
      }
    }
  }
  if (!(x_hi > x_lo)) {
    x_lo = std::isfinite(x_lo) ? x_lo - 1.0 : 0.0;
    x_hi = x_lo + 2.0;
  }
  if (!(y_hi > y_lo)) y_hi = y_lo + 1.0;
  const double w = kWidth - 2 * kMargin, h = kHeight - 2 * kMargin;
  auto sx = [&](double v) { return kMargin + (v - x_lo) / (x_hi - x_lo) * w; };
  auto sy = [&](double v) { return kHeight - kMargin - (v - y_lo) / (y_hi - y_lo) * h; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  std::string s = svg_open();
  s += frame(num(x_lo), num(x_hi), num(y_lo), num(y_hi));
  s += "<text x=\"" + px(kWidth / 2) + "\" y=\"" + px(kHeight - 8) + "\" font-size=\"12\" text-anchor=\"middle\">" +
       x_label + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % 5];
    std::string pts;
    for (std::size_t i = 0; i < std::min(x.size(), series[k].values.size()); ++i) {
      const double v = series[k].values[i];
      if (!std::isfinite(v)) continue;
      if (!pts.empty()) pts += ' ';
      pts += px(sx(x[i])) + "," + px(sy(v));
    }
    s += std::string("<polyline fill=\"none\" stroke=\"") + color + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + px(kWidth - kMargin - 4) + "\" y=\"" + px(kMargin + 14 + 14 * static_cast<double>(k)) +
         "\" font-size=\"11\" text-anchor=\"end\" fill=\"" + color + "\">" + series[k].name + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

ExportResult export_metrics(const std::filesystem::path& log, const std::filesystem::path& out_dir) {
  const std::string text = read_text(log);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(FormatErrorKind::Malformed, log.string() + ": empty metrics log");
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const auto c_iter = column("iter");
  if (c_iter < 0) throw FormatError(FormatErrorKind::Malformed, log.string() + ": no 'iter' column");
  const std::vector<std::string> names = {"cost_estimate", "eps_ot2", "eps_fit"};
  std::vector<double> x;
  std::vector<Series> series;
  for (const auto& n : names) {
    if (column(n) >= 0) series.push_back({n, {}});
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw FormatError(FormatErrorKind::Malformed, log.string() + ": ragged row");
    x.push_back(parse_field(f[static_cast<std::size_t>(c_iter)]).value_or(NAN));
    for (auto& s : series) {
      s.values.push_back(parse_field(f[static_cast<std::size_t>(column(s.name))]).value_or(NAN));
    }
  }
  std::filesystem::create_directories(out_dir);
  ExportResult r;
  r.csv = out_dir / (log.stem().string() + ".csv");
  write_text(r.csv, text);
  r.svg = out_dir / (log.stem().string() + ".svg");
  write_text(*r.svg, line_svg(x, series, "outer iteration"));
  return r;
}

ExportResult export_samples(const std::filesystem::path& dump_path, const std::filesystem::path& out_dir, AxisRange x,
                            AxisRange y) {
  const auto dump = read_sample_dump(dump_path);
  std::filesystem::create_directories(out_dir);
  ExportResult r;
  r.csv = out_dir / (dump_path.stem().string() + ".csv");
  write_sample_dump(r.csv, dump);
  const std::size_t d = std::max(dump.generated.dim(), dump.targets.dim());
  if (d == 2) {
    r.svg = out_dir / (dump_path.stem().string() + ".svg");
    write_text(*r.svg, scatter_svg(dump, x, y));
  } else {
    r.notice = "SVG skipped: points are " + std::to_string(d) + "-dimensional, scatter needs 2";
  }
  return r;
}

}  // namespace otfit
