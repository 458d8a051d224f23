#include "otfit/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "otfit/error.hpp"

namespace otfit {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    const auto end = s.find(sep, pos);
    out.push_back(trim(std::string_view(s).substr(pos, end == std::string::npos ? std::string::npos : end - pos)));
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw InvalidInput("expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InvalidInput("expected true or false, got '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  if (v.empty() || v == "none") return out;
  for (const auto& part : split(v, ',')) out.push_back(parse_number<int>(part));
  return out;
}

std::vector<Point> parse_means(const std::string& v) {
  std::vector<Point> out;
  for (const auto& group : split(v, ';')) {
    Point p;
    for (const auto& part : split(group, ',')) p.push_back(parse_number<double>(part));
    out.push_back(std::move(p));
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <class T>
std::string fmt_int(T v) {
  return std::to_string(v);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

std::string fmt_list(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

std::string fmt_means(const std::vector<Point>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    for (std::size_t k = 0; k < v[i].size(); ++k) s += (k ? "," : "") + fmt(v[i][k]);
  }
  return s;
}

struct Entry {
  std::string section;
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define OTFIT_NUM(sec, name, T, expr)                                                        \
  Entry {                                                                                    \
    sec, name, [](RunConfig& c, const std::string& v) { expr = parse_number<T>(v); },        \
        [](const RunConfig& c) { return fmt_value(expr); }                                   \
  }
#define OTFIT_BOOL(sec, name, expr)                                                          \
  Entry {                                                                                    \
    sec, name, [](RunConfig& c, const std::string& v) { expr = parse_bool(v); },             \
        [](const RunConfig& c) { return fmt_bool(expr); }                                    \
  }

std::string fmt_value(double v) { return fmt(v); }
std::string fmt_value(int v) { return fmt_int(v); }
std::string fmt_value(long v) { return fmt_int(v); }
std::string fmt_value(unsigned long v) { return fmt_int(v); }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"cost", "metric",
            [](RunConfig& c, const std::string& v) { c.cost = CostSpec(parse_metric(v), c.cost.exponent()); },
            [](const RunConfig& c) { return to_string(c.cost.metric()); }},
      Entry{"cost", "p",
            [](RunConfig& c, const std::string& v) { c.cost = CostSpec(c.cost.metric(), parse_number<double>(v)); },
            [](const RunConfig& c) { return fmt(c.cost.exponent()); }},

      Entry{"data", "kind",
            [](RunConfig& c, const std::string& v) {
              if (v != "idx" && v != "csv") parse_synthetic_kind(v);
              c.data.kind = v;
            },
            [](const RunConfig& c) { return c.data.kind; }},
      Entry{"data", "path", [](RunConfig& c, const std::string& v) { c.data.path = v; },
            [](const RunConfig& c) { return c.data.path.string(); }},
      Entry{"data", "test_path", [](RunConfig& c, const std::string& v) { c.data.test_path = v; },
            [](const RunConfig& c) { return c.data.test_path.string(); }},
      OTFIT_NUM("data", "limit", std::size_t, c.data.limit),
      OTFIT_NUM("data", "test_limit", std::size_t, c.data.test_limit),
      OTFIT_NUM("data", "n_points", std::size_t, c.data.synthetic.n_points),
      OTFIT_NUM("data", "seed", std::uint64_t, c.data.synthetic.seed),
      OTFIT_NUM("data", "test_seed", std::uint64_t, c.data.test_seed),
      OTFIT_NUM("data", "test_points", std::size_t, c.data.test_points),
      OTFIT_NUM("data", "radius", double, c.data.synthetic.radius),
      OTFIT_NUM("data", "thickness", double, c.data.synthetic.thickness),
      OTFIT_NUM("data", "half_length", double, c.data.synthetic.half_length),
      OTFIT_NUM("data", "angle", double, c.data.synthetic.angle),
      OTFIT_NUM("data", "jitter", double, c.data.synthetic.jitter),
      OTFIT_NUM("data", "scale", double, c.data.synthetic.scale),
      OTFIT_NUM("data", "noise", double, c.data.synthetic.noise),
      Entry{"data", "means", [](RunConfig& c, const std::string& v) { c.data.synthetic.means = parse_means(v); },
            [](const RunConfig& c) { return fmt_means(c.data.synthetic.means); }},
      Entry{"data", "normalize", [](RunConfig& c, const std::string& v) { c.data.normalize = parse_normalize_mode(v); },
            [](const RunConfig& c) { return to_string(c.data.normalize); }},

      Entry{"latent", "kind", [](RunConfig& c, const std::string& v) { c.train.latent.kind = parse_latent_kind(v); },
            [](const RunConfig& c) { return to_string(c.train.latent.kind); }},
      OTFIT_NUM("latent", "dim", int, c.train.latent.dim),
      OTFIT_NUM("latent", "low", double, c.train.latent.low),
      OTFIT_NUM("latent", "high", double, c.train.latent.high),

      Entry{"net", "hidden", [](RunConfig& c, const std::string& v) { c.net.hidden = parse_int_list(v); },
            [](const RunConfig& c) { return fmt_list(c.net.hidden); }},
      Entry{"net", "prefit", [](RunConfig& c, const std::string& v) { c.net.prefit = v; },
            [](const RunConfig& c) { return c.net.prefit; }},
      OTFIT_NUM("net", "prefit_steps", std::int64_t, c.net.prefit_steps),
      OTFIT_NUM("net", "prefit_learning_rate", double, c.net.prefit_learning_rate),
      OTFIT_NUM("net", "prefit_scale_x", double, c.net.prefit_scale_x),
      OTFIT_NUM("net", "prefit_scale_y", double, c.net.prefit_scale_y),

      OTFIT_NUM("ots", "learning_rate", double, c.train.ots.learning_rate),
      OTFIT_NUM("ots", "batch_size", int, c.train.ots.batch_size),
      OTFIT_NUM("ots", "max_steps", std::int64_t, c.train.ots.max_steps),
      OTFIT_NUM("ots", "window_batches", int, c.train.ots.window_batches),
      OTFIT_NUM("ots", "window_samples_per_target", double, c.train.ots.window_samples_per_target),
      OTFIT_NUM("ots", "histogram_tolerance", double, c.train.ots.histogram_tolerance),
      OTFIT_NUM("ots", "plateau_tolerance", double, c.train.ots.plateau_tolerance),
      OTFIT_NUM("ots", "plateau_patience", int, c.train.ots.plateau_patience),
      OTFIT_NUM("ots", "subsample_start", double, c.train.ots.subsample_start),
      OTFIT_NUM("ots", "subsample_horizon", std::int64_t, c.train.ots.subsample_horizon),
      OTFIT_NUM("ots", "subsample_stages", int, c.train.ots.subsample_stages),
      Entry{"ots", "lr_schedule",
            [](RunConfig& c, const std::string& v) { c.train.ots.lr_schedule = parse_lr_schedule(v); },
            [](const RunConfig& c) { return to_string(c.train.ots.lr_schedule); }},
      OTFIT_NUM("ots", "lr_decay_factor", double, c.train.ots.lr_decay_factor),
      OTFIT_NUM("ots", "lr_min", double, c.train.ots.lr_min),
      OTFIT_NUM("ots", "lr_min_improvement", double, c.train.ots.lr_min_improvement),
      OTFIT_BOOL("ots", "averaging", c.train.ots.averaging),
      OTFIT_BOOL("ots", "snapshot_check", c.train.ots.snapshot_check),
      OTFIT_BOOL("ots", "memorize", c.train.ots.memorize),
      OTFIT_NUM("ots", "memo_capacity", std::size_t, c.train.ots.memo_capacity),

      OTFIT_NUM("eval", "samples", std::size_t, c.train.eval_samples),
      OTFIT_BOOL("eval", "each_iteration", c.train.evaluate_each_iteration),
      OTFIT_NUM("eval", "plateau_tolerance", double, c.train.eval_plateau_tolerance),
      OTFIT_NUM("eval", "max_steps", std::int64_t, c.train.eval_max_steps),
      OTFIT_NUM("eval", "histogram_samples", std::size_t, c.train.histogram_samples),
      OTFIT_BOOL("eval", "eps_ot2", c.train.estimate_eps_ot2),
      OTFIT_BOOL("eval", "final", c.train.final_evaluation),

      OTFIT_NUM("fit", "batch_size", int, c.train.fit.batch_size),
      OTFIT_NUM("fit", "learning_rate", double, c.train.fit.learning_rate),
      OTFIT_NUM("fit", "max_steps", std::int64_t, c.train.fit.max_steps),
      OTFIT_BOOL("fit", "reuse_memoized", c.train.fit.reuse_memoized),
      OTFIT_NUM("fit", "check_every", int, c.train.fit.check_every),
      OTFIT_NUM("fit", "eval_pairs", std::size_t, c.train.fit.eval_pairs),
      OTFIT_NUM("fit", "plateau_tolerance", double, c.train.fit.plateau_tolerance),
      OTFIT_NUM("fit", "plateau_patience", int, c.train.fit.plateau_patience),
      Entry{"fit", "optimizer",
            [](RunConfig& c, const std::string& v) { c.train.fit.optimizer = parse_fit_optimizer(v); },
            [](const RunConfig& c) { return to_string(c.train.fit.optimizer); }},
      OTFIT_NUM("fit", "momentum", double, c.train.fit.momentum),

      OTFIT_NUM("train", "alpha", double, c.train.alpha),
      OTFIT_NUM("train", "outer_iterations", int, c.train.outer_iterations),
      OTFIT_NUM("train", "seed", std::uint64_t, c.train.seed),
      OTFIT_NUM("train", "checkpoint_every", int, c.train.checkpoint_every),
      OTFIT_NUM("train", "perturbation_sigma", double, c.train.perturbation_sigma),
      OTFIT_BOOL("train", "warm_start_psi", c.train.warm_start_psi),
      OTFIT_NUM("train", "cost_plateau_tolerance", double, c.train.cost_plateau_tolerance),
      OTFIT_NUM("train", "cost_plateau_window", int, c.train.cost_plateau_window),
      Entry{"train", "output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; },
            [](const RunConfig& c) { return c.output_dir.string(); }},
      OTFIT_NUM("train", "dump_samples", std::size_t, c.dump_samples),

      Entry{"psi", "hidden", [](RunConfig& c, const std::string& v) { c.psi.hidden = parse_int_list(v); },
            [](const RunConfig& c) { return fmt_list(c.psi.hidden); }},
      OTFIT_NUM("psi", "steps", std::int64_t, c.psi.steps),
      OTFIT_NUM("psi", "learning_rate", double, c.psi.learning_rate),
      OTFIT_BOOL("psi", "cosine_decay", c.psi.cosine_decay),
      OTFIT_NUM("psi", "smoothing", int, c.psi.smoothing),
      OTFIT_NUM("psi", "scatter_points", std::size_t, c.psi.scatter_points),
  };
  return table;
}

#undef OTFIT_NUM
#undef OTFIT_BOOL

void validate(const RunConfig& c) {
  static const std::set<std::string> kinds = {"ring", "line", "gmm", "moons", "idx", "csv"};
  if (!kinds.count(c.data.kind)) throw ConfigError("unknown data kind '" + c.data.kind + "'", 0, "data.kind");
  if ((c.data.kind == "idx" || c.data.kind == "csv") && c.data.path.empty()) {
    throw ConfigError("file data needs a path", 0, "data.path");
  }
  if (c.net.prefit != "none" && c.net.prefit != "line" && c.net.prefit != "pca") {
    throw ConfigError("prefit must be none, line or pca", 0, "net.prefit");
  }
  for (int w : c.net.hidden) {
    if (w < 1) throw ConfigError("hidden widths must be positive", 0, "net.hidden");
  }
  for (int w : c.psi.hidden) {
    if (w < 1) throw ConfigError("hidden widths must be positive", 0, "psi.hidden");
  }
  if (c.psi.steps < 0 || !(c.psi.learning_rate > 0.0) || c.psi.smoothing < 1) {
    throw ConfigError("psi steps >= 0, learning_rate > 0 and smoothing >= 1 required", 0, "psi");
  }
  if (c.data.kind != "idx" && c.data.kind != "csv") {
    SyntheticSpec s = c.data.synthetic;
    s.kind = parse_synthetic_kind(c.data.kind);
    try {
      s.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what(), 0, "data");
    }
  }
  try {
    c.train.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  std::map<std::string, const Entry*> index;
  for (const auto& e : entries()) index[e.section + "." + e.key] = &e;

  RunConfig c;
  std::set<std::string> seen;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("unterminated section header", line_no);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      bool known = false;
      for (const auto& e : entries()) known = known || e.section == section;
      if (!known) throw ConfigError("unknown section [" + section + "]", line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value", line_no);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) throw ConfigError("key outside of a [section]", line_no, key);
    const std::string full = section + "." + key;
    const auto it = index.find(full);
    if (it == index.end()) throw ConfigError("unknown key", line_no, full);
    if (!seen.insert(full).second) throw ConfigError("duplicate key", line_no, full);
    try {
      it->second->set(c, value);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what(), line_no, full);
    }
  }
  c.data.synthetic.kind = (c.data.kind == "idx" || c.data.kind == "csv") ? SyntheticKind::Ring
                                                                          : parse_synthetic_kind(c.data.kind);
  validate(c);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << is.rdbuf();
  RunConfig c = parse_run_config(buf.str());
  const auto base = path.parent_path();
  if (!c.data.path.empty() && c.data.path.is_relative()) c.data.path = base / c.data.path;
  if (!c.data.test_path.empty() && c.data.test_path.is_relative()) c.data.test_path = base / c.data.test_path;
  return c;
}

std::string resolved_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const auto& e : entries()) {
    if (e.section != section) {
      if (!section.empty()) out += '\n';
      section = e.section;
      out += "[" + section + "]\n";
    }
    out += e.key + " = " + e.get(config) + "\n";
  }
  return out;
}

}  // namespace otfit
