#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ex2mcmc/adapt.hpp"
#include "ex2mcmc/core.hpp"
#include "ex2mcmc/flow.hpp"
#include "ex2mcmc/kernels.hpp"
#include "ex2mcmc/metrics.hpp"
#include "ex2mcmc/proposals.hpp"
#include "ex2mcmc/rng.hpp"
#include "ex2mcmc/targets.hpp"
#include "ex2mcmc/theory.hpp"

namespace ex2::bench {

/// Invalid experiment configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// -- configuration ----------------------------------------------------------------------------

struct ExperimentConfig {
  std::string experiment;
  std::string target = "gaussian";
  int dim = 2;
  std::vector<int> dims;
  double target_a = 0.0;  // 0: preset value
  double target_b = 0.0;
  double target_variance = 1.0;
  std::vector<std::string> samplers;
  int n_particles = 10;
  double proposal_var = 2.0;
  double mala_step = 0.1;
  int mala_steps = 3;
  double adapt_target_rate = 0.5;
  double adapt_lr = 0.05;
  int chains = 1;
  long n_steps = 1000;
  long burn_in = 100;
  int replicates = 1;
  std::vector<std::string> metrics;
  std::vector<long> checkpoints;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  long reference_samples = 10000;
  int n_projections = 25;
  double start = 5.0;  // isir-tv-bound: initial point
  // flow / adaptation
  int flow_layers = 4;
  std::vector<int> flow_hidden = {32, 32};
  long flow_iterations = 1000;
  double gamma0 = 1e-2;
  double iota = 0.51;
  double alpha = 0.9;
  bool extend_dims = false;
  // theory
  double theory_m = 0.1, theory_M = 2.0, theory_L = 1.0, theory_K = 5.0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* b = v.data();
  const char* e = b + v.size();
  auto [p, ec] = std::from_chars(b, e, out);
  if (ec != std::errc() || p != e) throw ConfigError("config: key '" + key + "' has invalid value '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace detail

inline const std::set<std::string>& known_experiments() {
  static const std::set<std::string> e = {"gauss-dim-sweep", "mixture-2d", "funnel", "banana",
                                          "flex2-train", "theory-report", "isir-tv-bound"};
  return e;
}

/// Applies key=value pairs onto defaults. Every unknown key is reported in one error.
inline ExperimentConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
  using detail::parse_number;
  ExperimentConfig c;
  std::vector<std::string> unknown;
  bool have_seed = false;
  for (const auto& [k, v] : pairs) {
    if (k == "experiment") c.experiment = v;
    else if (k == "target") c.target = v;
    else if (k == "dim") c.dim = parse_number<int>(k, v);
    else if (k == "dims") {
      c.dims.clear();
      for (const auto& s : detail::split_list(v)) c.dims.push_back(parse_number<int>(k, s));
    } else if (k == "target_a") c.target_a = parse_number<double>(k, v);
    else if (k == "target_b") c.target_b = parse_number<double>(k, v);
    else if (k == "target_variance") c.target_variance = parse_number<double>(k, v);
    else if (k == "samplers") c.samplers = detail::split_list(v);
    else if (k == "n_particles") c.n_particles = parse_number<int>(k, v);
    else if (k == "proposal_var") c.proposal_var = parse_number<double>(k, v);
    else if (k == "mala_step") c.mala_step = parse_number<double>(k, v);
    else if (k == "mala_steps") c.mala_steps = parse_number<int>(k, v);
    else if (k == "adapt_target_rate") c.adapt_target_rate = parse_number<double>(k, v);
    else if (k == "adapt_lr") c.adapt_lr = parse_number<double>(k, v);
    else if (k == "chains") c.chains = parse_number<int>(k, v);
    else if (k == "n_steps") c.n_steps = parse_number<long>(k, v);
    else if (k == "burn_in") c.burn_in = parse_number<long>(k, v);
    else if (k == "replicates") c.replicates = parse_number<int>(k, v);
    else if (k == "metrics") c.metrics = detail::split_list(v);
    else if (k == "checkpoints") {
      c.checkpoints.clear();
      for (const auto& s : detail::split_list(v)) c.checkpoints.push_back(parse_number<long>(k, s));
    } else if (k == "seed") {
      c.seed = parse_number<std::uint64_t>(k, v);
      have_seed = true;
    } else if (k == "output_dir") c.output_dir = v;
    else if (k == "reference_samples") c.reference_samples = parse_number<long>(k, v);
    else if (k == "n_projections") c.n_projections = parse_number<int>(k, v);
    else if (k == "start") c.start = parse_number<double>(k, v);
    else if (k == "flow_layers") c.flow_layers = parse_number<int>(k, v);
    else if (k == "flow_hidden") {
      c.flow_hidden.clear();
      for (const auto& s : detail::split_list(v)) c.flow_hidden.push_back(parse_number<int>(k, s));
    } else if (k == "flow_iterations") c.flow_iterations = parse_number<long>(k, v);
    else if (k == "gamma0") c.gamma0 = parse_number<double>(k, v);
    else if (k == "iota") c.iota = parse_number<double>(k, v);
    else if (k == "alpha") c.alpha = parse_number<double>(k, v);
    else if (k == "extend_dims") c.extend_dims = detail::parse_bool(k, v);
    else if (k == "theory_m") c.theory_m = parse_number<double>(k, v);
    else if (k == "theory_M") c.theory_M = parse_number<double>(k, v);
    else if (k == "theory_L") c.theory_L = parse_number<double>(k, v);
    else if (k == "theory_K") c.theory_K = parse_number<double>(k, v);
    else unknown.push_back(k);
  }
  if (!unknown.empty()) {
    std::string msg = "config: unknown key(s):";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg);
  }
  if (!have_seed) throw ConfigError("config: missing required key 'seed'");
  if (!known_experiments().count(c.experiment)) throw ConfigError("config: unknown experiment '" + c.experiment + "'");
  if (c.dims.empty()) c.dims = {c.dim};
  std::vector<std::string> bad;
  if (c.dim < 1) bad.push_back("dim");
  for (int d : c.dims)
    if (d < 1) bad.push_back("dims");
  if (!c.extend_dims)
    for (int d : c.dims)
      if (d > 100) bad.push_back("dims (> 100 needs extend_dims = true)");
  if (c.n_particles < 1) bad.push_back("n_particles");
  if (c.mala_steps < 0) bad.push_back("mala_steps");
  if (c.chains < 1) bad.push_back("chains");
  if (c.replicates < 1) bad.push_back("replicates");
  if (c.n_steps < 1) bad.push_back("n_steps");
  if (c.burn_in < 0 || c.burn_in >= c.n_steps) bad.push_back("burn_in");
  if (!(c.proposal_var > 0.0)) bad.push_back("proposal_var");
  if (!(c.mala_step > 0.0)) bad.push_back("mala_step");
  if (!(c.target_variance > 0.0)) bad.push_back("target_variance");
  if (c.reference_samples < 50) bad.push_back("reference_samples");
  if (c.n_projections < 1) bad.push_back("n_projections");
  if (c.flow_layers < 1) bad.push_back("flow_layers");
  if (c.flow_iterations < 0) bad.push_back("flow_iterations");
  if (!(c.iota > 0.5 && c.iota <= 1.0)) bad.push_back("iota");
  if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) bad.push_back("alpha");
  if (!bad.empty()) {
    std::string msg = "config: invalid value for:";
    for (const auto& k : bad) msg += " " + k;
    throw ConfigError(msg);
  }
  return c;
}

/// Flat typed key = value file; '#' starts a comment. `overrides` are applied last.
inline ExperimentConfig parse_config(const std::string& path,
                                     const std::vector<std::pair<std::string, std::string>>& overrides = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::vector<std::pair<std::string, std::string>> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not of the form key = value");
    pairs.emplace_back(detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  pairs.insert(pairs.end(), overrides.begin(), overrides.end());
  return config_from_pairs(pairs);
}

// -- results --------------------------------------------------------------------------------

struct ResultRow {
  std::string experiment;
  std::string sampler;
  int dim = 0;
  std::string metric;
  double value = 0.0;
  int replicate = 0;
  std::uint64_t seed = 0;
};

/// Shortest decimal that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, p);
}

/// The config as a file that parses back to the same values.
inline std::string config_text(const ExperimentConfig& c) {
  std::ostringstream os;
  auto list = [](const auto& v, auto fmt) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
    return s;
  };
  auto num = [](auto x) { return std::to_string(x); };
  auto str = [](const std::string& x) { return x; };
  os << "experiment = " << c.experiment << "\n"
     << "target = " << c.target << "\n"
     << "dim = " << c.dim << "\n"
     << "dims = " << list(c.dims, num) << "\n"
     << "target_a = " << format_double(c.target_a) << "\n"
     << "target_b = " << format_double(c.target_b) << "\n"
     << "target_variance = " << format_double(c.target_variance) << "\n";
  if (!c.samplers.empty()) os << "samplers = " << list(c.samplers, str) << "\n";
  os << "n_particles = " << c.n_particles << "\n"
     << "proposal_var = " << format_double(c.proposal_var) << "\n"
     << "mala_step = " << format_double(c.mala_step) << "\n"
     << "mala_steps = " << c.mala_steps << "\n"
     << "adapt_target_rate = " << format_double(c.adapt_target_rate) << "\n"
     << "adapt_lr = " << format_double(c.adapt_lr) << "\n"
     << "chains = " << c.chains << "\n"
     << "n_steps = " << c.n_steps << "\n"
     << "burn_in = " << c.burn_in << "\n"
     << "replicates = " << c.replicates << "\n";
  if (!c.metrics.empty()) os << "metrics = " << list(c.metrics, str) << "\n";
  if (!c.checkpoints.empty()) os << "checkpoints = " << list(c.checkpoints, num) << "\n";
  os << "seed = " << c.seed << "\n"
     << "output_dir = " << c.output_dir << "\n"
     << "reference_samples = " << c.reference_samples << "\n"
     << "n_projections = " << c.n_projections << "\n"
     << "start = " << format_double(c.start) << "\n"
     << "flow_layers = " << c.flow_layers << "\n"
     << "flow_hidden = " << list(c.flow_hidden, num) << "\n"
     << "flow_iterations = " << c.flow_iterations << "\n"
     << "gamma0 = " << format_double(c.gamma0) << "\n"
     << "iota = " << format_double(c.iota) << "\n"
     << "alpha = " << format_double(c.alpha) << "\n"
     << "extend_dims = " << (c.extend_dims ? "true" : "false") << "\n"
     << "theory_m = " << format_double(c.theory_m) << "\n"
     << "theory_M = " << format_double(c.theory_M) << "\n"
     << "theory_L = " << format_double(c.theory_L) << "\n"
     << "theory_K = " << format_double(c.theory_K) << "\n";
  return os.str();
}

inline void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.sampler != b.sampler) return a.sampler < b.sampler;
    if (a.dim != b.dim) return a.dim < b.dim;
    return a.replicate < b.replicate;
  });
}

inline std::string csv_text(const std::vector<ResultRow>& rows) {
  std::string out = "experiment,sampler,dim,metric,value,replicate,seed\n";
  for (const auto& r : rows) {
    out += r.experiment + ',' + r.sampler + ',' + std::to_string(r.dim) + ',' + r.metric + ',' + format_double(r.value) +
           ',' + std::to_string(r.replicate) + ',' + std::to_string(r.seed) + '\n';
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

// -- minimal SVG plotter ---------------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

inline std::string svg_escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

inline std::string render_svg(const Plot& plot) {
  const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  auto tx = [&](double v) { return plot.log_x ? std::log10(v) : v; };
  auto ty = [&](double v) { return plot.log_y ? std::log10(v) : v; };
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : plot.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(tx(s.x[i])) || !std::isfinite(ty(s.y[i]))) continue;
      x0 = std::min(x0, tx(s.x[i]));
      x1 = std::max(x1, tx(s.x[i]));
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(plot.title) << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    const double vx = plot.log_x ? std::pow(10.0, fx) : fx, vy = plot.log_y ? std::pow(10.0, fy) : fy;
    o << "<text x=\"" << px(vx) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << format_double(std::round(vx * 1000) / 1000) << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(vy) + 4 << "\" text-anchor=\"end\">" << format_double(std::round(vy * 1000) / 1000) << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << svg_escape(plot.x_label) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (T + H - B) / 2 << ")\">" << svg_escape(plot.y_label) << "</text>\n";
  for (std::size_t k = 0; k < plot.series.size(); ++k) {
    const auto& s = plot.series[k];
    const char* col = colors[k % 6];
    o << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(tx(s.x[i])) && std::isfinite(ty(s.y[i]))) o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    o << "\"/>\n";
    const double ly = T + 16 * (k + 1);
    o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 35 << "\" y=\"" << ly + 4 << "\">" << svg_escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// Averages `metric` over replicates for every sampler, as a series indexed by dim.
inline Plot plot_by_dim(const std::vector<ResultRow>& rows, const std::string& metric, const std::string& title) {
  std::map<std::string, std::map<int, std::pair<double, int>>> acc;
  for (const auto& r : rows)
    if (r.metric == metric) {
      auto& a = acc[r.sampler][r.dim];
      a.first += r.value;
      a.second += 1;
    }
  Plot p{title, "dimension", metric, false, false, {}};
  for (const auto& [name, by_dim] : acc) {
    Series s{name, {}, {}};
    for (const auto& [d, a] : by_dim) {
      s.x.push_back(d);
      s.y.push_back(a.first / a.second);
    }
    p.series.push_back(std::move(s));
  }
  return p;
}

// -- parallel execution ---------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on `threads` workers. Results must be stored by index, so
/// the output does not depend on scheduling. The first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// -- building blocks -----------------------------------------------------------------------

inline TargetPtr make_target(const ExperimentConfig& c, int dim) {
  const std::string& t = c.target;
  if (t == "gaussian") return std::make_shared<StdGaussianTarget>(dim, c.target_variance);
  if (t == "mixture-2d-equal") return presets::mixture_2d_equal();
  if (t == "mixture-2d-uneven") return presets::mixture_2d_uneven();
  if (t == "funnel") {
    if (c.target_a > 0.0 || c.target_b > 0.0)
      return std::make_shared<FunnelTarget>(dim, c.target_a > 0.0 ? c.target_a : 2.0, c.target_b > 0.0 ? c.target_b : 0.5);
    return presets::funnel(dim);
  }
  if (t == "banana") {
    if (c.target_a > 0.0 || c.target_b > 0.0)
      return std::make_shared<BananaTarget>(dim, c.target_a > 0.0 ? c.target_a : 5.0, c.target_b > 0.0 ? c.target_b : 0.02);
    return presets::banana(dim);
  }
  throw ConfigError("config: unknown target '" + t + "'");
}

/// Sampler name -> (particles, MALA steps). "isir": global only, "mala": local only.
struct SamplerShape {
  int n_particles;
  int mala_steps;
};

inline SamplerShape sampler_shape(const ExperimentConfig& c, const std::string& name) {
  if (name == "isir" || name == "aisir") return {c.n_particles, 0};
  if (name == "mala") return {1, std::max(c.mala_steps, 1)};
  if (name == "ex2" || name == "flex2") return {c.n_particles, c.mala_steps};
  throw ConfigError("config: unknown sampler '" + name + "'");
}

/// `chains` independent chains of one sampler, pooled post-burn-in rows.
struct MultiChainResult {
  Matrix samples;  // (chains * kept) x d
  std::vector<Matrix> trajectories;
  ChainStats stats;
  double final_step_size = 0.0;
};

inline MultiChainResult run_chains(const TargetPtr& target, const ProposalPtr& proposal, SamplerShape shape,
                                   const ExperimentConfig& c, int chains, long n_steps, long burn_in,
                                   std::uint64_t seed, std::uint64_t stream_base, const Matrix* starts = nullptr) {
  MultiChainResult out;
  const long kept = n_steps - burn_in;
  out.samples.resize(static_cast<Eigen::Index>(chains) * kept, target->dim());
  StepSizeAdaptation ad{c.adapt_lr > 0.0, c.adapt_target_rate, c.adapt_lr};
  for (int j = 0; j < chains; ++j) {
    Rng rng(seed, stream_base + static_cast<std::uint64_t>(j));
    Ex2Sampler s(target, proposal, IsirConfig{shape.n_particles, false}, MalaConfig{c.mala_step, shape.mala_steps}, ad);
    const Vector y0 = starts ? Vector(starts->row(j).transpose()) : proposal->sample(rng);
    ChainResult r = s.run(y0, n_steps, burn_in, rng);
    out.samples.middleRows(static_cast<Eigen::Index>(j) * kept, kept) = r.trajectory;
    out.stats.merge(r.stats);
    out.final_step_size = s.step_size();
    out.trajectories.push_back(std::move(r.trajectory));
  }
  return out;
}

/// ESS mean with a chain that never moved in some coordinate reported as 0.
inline double ess_mean_or_zero(const Matrix& trajectory) {
  try {
    return ess(trajectory).mean;
  } catch (const ArgumentError&) {
    return 0.0;
  }
}

inline FlowConfig flow_config(const ExperimentConfig& c, int dim) {
  FlowConfig f;
  f.dim = dim;
  f.n_layers = c.flow_layers;
  f.hidden = c.flow_hidden;
  return f;
}

inline FlexConfig flex_config(const ExperimentConfig& c) {
  FlexConfig f;
  f.n_chains = c.chains;
  f.isir = IsirConfig{c.n_particles, false};
  f.mala = MalaConfig{c.mala_step, c.mala_steps};
  f.mala_adapt = StepSizeAdaptation{c.adapt_lr > 0.0, c.adapt_target_rate, c.adapt_lr};
  return f;
}

inline AdaptSchedule adapt_schedule(const ExperimentConfig& c) {
  AdaptSchedule s;
  s.gamma0 = c.gamma0;
  s.iota = c.iota;
  s.alpha_inf = c.alpha;
  return s;
}

/// FlEx2MCMC pre-run: trains a flow for flow_iterations, returns the state (flow inside).
inline FlexState train_flow(const Target& target, const ExperimentConfig& c, int dim, std::uint64_t seed,
                            std::uint64_t stream) {
  Rng init(seed, stream);
  auto flow = std::make_shared<RealNvpFlow>(flow_config(c, dim), init);
  FlexState st = flex_init(target, flow, flex_config(c), stream_seed(seed, stream + 1));
  const FlexConfig fc = flex_config(c);
  const AdaptSchedule sch = adapt_schedule(c);
  for (long k = 0; k < c.flow_iterations; ++k) flex2_iteration(st, target, fc, sch, true);
  return st;
}

/// Mean of the last `window` entries minus the first `window` of the backward-KL trace.
inline std::pair<double, double> backward_kl_ends(const std::vector<FlexLogRow>& log, std::size_t window = 50) {
  if (log.size() < window) window = log.size();
  double a = 0, b = 0;
  for (std::size_t i = 0; i < window; ++i) {
    a += log[i].backward_kl;
    b += log[log.size() - window + i].backward_kl;
  }
  return {a / window, b / window};
}

// -- experiments ---------------------------------------------------------------------------

struct ExperimentOutput {
  std::vector<ResultRow> rows;
  std::vector<std::pair<std::string, Plot>> plots;  // file name -> plot
  std::vector<std::pair<std::string, std::string>> extra_files;  // file name -> contents
};

/// Replicate r of the geometry experiments (funnel, banana, gauss-dim-sweep): every sampler
/// runs `chains` chains for n_steps, the flow sampler after its pre-run.
inline std::vector<ResultRow> geometry_replicate(const ExperimentConfig& c, int dim, int rep) {
  std::vector<ResultRow> rows;
  const TargetPtr target = make_target(c, dim);
  const std::uint64_t rseed = stream_seed(c.seed, static_cast<std::uint64_t>(rep) * 1000003ULL + dim);
  auto gauss = IsotropicGaussianProposal::centered(dim, c.proposal_var);
  std::vector<std::string> samplers = c.samplers;
  if (samplers.empty()) samplers = {"isir", "mala", "ex2"};
  const bool want_tv = std::find(c.metrics.begin(), c.metrics.end(), "sliced_tv") != c.metrics.end() || c.metrics.empty();
  Matrix reference;
  if (want_tv && target->has_exact_sampler()) {
    Rng ref_rng(rseed, 7);
    reference = target->sample(c.reference_samples, ref_rng);
  }
  std::shared_ptr<const RealNvpFlow> trained;
  auto row = [&](const std::string& sampler, const std::string& metric, double v) {
    rows.push_back({c.experiment, sampler, dim, metric, v, rep, c.seed});
  };
  for (std::size_t si = 0; si < samplers.size(); ++si) {
    const std::string& name = samplers[si];
    const SamplerShape shape = sampler_shape(c, name);
    ProposalPtr proposal = gauss;
    if (name == "flex2" || name == "aisir") {
      if (!trained) {
        FlexState st = train_flow(*target, c, dim, rseed, 100);
        trained = st.snapshot();
        const auto [first, last] = backward_kl_ends(st.training_log);
        row("flex2", "train_backward_kl_first", first);
        row("flex2", "train_backward_kl_last", last);
      }
      proposal = std::make_shared<FlowProposal>(trained);
    }
    MultiChainResult res = run_chains(target, proposal, shape, c, c.chains, c.n_steps, c.burn_in, rseed, 1000 * (si + 1));
    const AcceptanceSummary acc = acceptance_summary(res.stats);
    row(name, "global_accept", acc.global_move_rate);
    if (shape.mala_steps > 0) row(name, "mala_accept", acc.mala_rate);
    double ess_sum = 0.0;
    for (const auto& t : res.trajectories) ess_sum += ess_mean_or_zero(t);
    row(name, "ess", ess_sum / static_cast<double>(res.trajectories.size()));
    if (reference.size() > 0) {
      Rng proj(rseed, 9);  // same projections for every sampler
      row(name, "sliced_tv", sliced_tv(res.samples, reference, c.n_projections, proj));
    }
  }
  return rows;
}

inline ExperimentOutput run_geometry(const ExperimentConfig& c, int threads) {
  std::vector<std::pair<int, int>> tasks;
  for (int d : c.dims)
    for (int r = 0; r < c.replicates; ++r) tasks.emplace_back(d, r);
  std::vector<std::vector<ResultRow>> parts(tasks.size());
  parallel_for(tasks.size(), threads, [&](std::size_t i) { parts[i] = geometry_replicate(c, tasks[i].first, tasks[i].second); });
  ExperimentOutput out;
  for (auto& p : parts) out.rows.insert(out.rows.end(), p.begin(), p.end());
  out.plots.emplace_back(c.experiment + "_ess.svg", plot_by_dim(out.rows, "ess", c.experiment + ": ESS vs dimension"));
  if (std::any_of(out.rows.begin(), out.rows.end(), [](const ResultRow& r) { return r.metric == "sliced_tv"; }))
    out.plots.emplace_back(c.experiment + "_sliced_tv.svg",
                           plot_by_dim(out.rows, "sliced_tv", c.experiment + ": sliced TV vs dimension"));
  return out;
}

/// One single-chain replicate of the 2D mixture experiment: TV/KL at each checkpoint.
inline std::vector<ResultRow> mixture_replicate(const ExperimentConfig& c, int rep) {
  std::vector<ResultRow> rows;
  const TargetPtr target = make_target(c, 2);
  const std::uint64_t rseed = stream_seed(c.seed, static_cast<std::uint64_t>(rep));
  auto gauss = IsotropicGaussianProposal::centered(2, c.proposal_var);
  std::vector<std::string> samplers = c.samplers;
  if (samplers.empty()) samplers = {"isir", "mala", "ex2"};
  std::vector<long> checkpoints = c.checkpoints;
  const long kept = c.n_steps - c.burn_in;
  if (checkpoints.empty()) checkpoints = {kept};
  Rng start_rng(rseed, 1);
  const Matrix start = gauss->sample(start_rng).transpose();  // shared start for every sampler
  for (std::size_t si = 0; si < samplers.size(); ++si) {
    const std::string& name = samplers[si];
    const MultiChainResult res =
        run_chains(target, gauss, sampler_shape(c, name), c, 1, c.n_steps, c.burn_in, rseed, 10 * (si + 1), &start);
    for (long n : checkpoints) {
      if (n < 2 || n > kept) continue;
      const TvKl m = kde_tv_and_kl(res.samples.topRows(n), *target);
      rows.push_back({c.experiment, name, 2, "tv@" + std::to_string(n), m.tv, rep, c.seed});
      rows.push_back({c.experiment, name, 2, "kl@" + std::to_string(n), m.kl, rep, c.seed});
    }
  }
  return rows;
}

inline ExperimentOutput run_mixture(const ExperimentConfig& c, int threads) {
  std::vector<std::vector<ResultRow>> parts(c.replicates);
  parallel_for(parts.size(), threads, [&](std::size_t i) { parts[i] = mixture_replicate(c, static_cast<int>(i)); });
  ExperimentOutput out;
  for (auto& p : parts) out.rows.insert(out.rows.end(), p.begin(), p.end());
  std::map<std::string, std::map<long, std::pair<double, int>>> acc;
  for (const auto& r : out.rows)
    if (r.metric.rfind("tv@", 0) == 0) {
      auto& a = acc[r.sampler][std::stol(r.metric.substr(3))];
      a.first += r.value;
      a.second++;
    }
  Plot p{"2D mixture: KDE TV vs samples", "samples", "TV", false, false, {}};
  for (const auto& [name, m] : acc) {
    Series s{name, {}, {}};
    for (const auto& [n, a] : m) {
      s.x.push_back(static_cast<double>(n));
      s.y.push_back(a.first / a.second);
    }
    p.series.push_back(std::move(s));
  }
  out.plots.emplace_back("mixture_tv.svg", p);
  return out;
}

struct IsirTvCurve {
  std::vector<double> tv;  // tv[k-1] after k steps
  double kappa_exact = 0.0;
};

/// Parallel i-SIR chains on N(0, target_variance) in 1D with proposal N(0, proposal_var),
/// all started at `start`; KDE TV to the target after each of `steps` steps.
inline IsirTvCurve isir_tv_curve(int n_chains, int steps, double start, int n_particles, double target_variance,
                                 double proposal_var, std::uint64_t seed) {
  StdGaussianTarget target(1, target_variance);
  IsotropicGaussianProposal prop(Vector::Zero(1), proposal_var);
  std::vector<Rng> rngs;
  for (int j = 0; j < n_chains; ++j) rngs.emplace_back(seed, static_cast<std::uint64_t>(j));
  Vector states = Vector::Constant(n_chains, start);
  IsirTvCurve out;
  const double sd = std::sqrt(target_variance);
  const double lo = std::min(-7.0 * sd, start - 2.0), hi = std::max(7.0 * sd, start + 2.0);
  for (int k = 0; k < steps; ++k) {
    for (int j = 0; j < n_chains; ++j) {
      Vector y(1);
      y[0] = states[j];
      states[j] = isir_step(y, target, prop, IsirConfig{n_particles, false}, rngs[j]).new_state[0];
    }
    out.tv.push_back(kde_tv_to_density(states, [&](double x) { return -0.5 * x * x / target_variance; }, lo, hi));
  }
  // L = sup pi/lambda for Gaussians with var_lambda >= var_pi: sqrt(var_lambda / var_pi)
  const double L = std::sqrt(std::max(proposal_var / target_variance, 1.0));
  out.kappa_exact = isir_rate(n_particles, L).kappa;
  return out;
}

inline ExperimentOutput run_isir_tv_bound(const ExperimentConfig& c, int threads) {
  (void)threads;
  const int steps = static_cast<int>(std::min<long>(c.n_steps, 1000));
  const IsirTvCurve curve =
      isir_tv_curve(c.chains, steps, c.start, c.n_particles, c.target_variance, c.proposal_var, c.seed);
  ExperimentOutput out;
  Series tv{"i-SIR TV", {}, {}}, bound{"kappa^k", {}, {}};
  for (int k = 1; k <= steps; ++k) {
    const double b = std::pow(curve.kappa_exact, k);
    out.rows.push_back({c.experiment, "isir", 1, "tv@" + std::to_string(k), curve.tv[k - 1], 0, c.seed});
    out.rows.push_back({c.experiment, "bound", 1, "kappa^" + std::to_string(k), b, 0, c.seed});
    tv.x.push_back(k);
    tv.y.push_back(curve.tv[k - 1]);
    bound.x.push_back(k);
    bound.y.push_back(b);
  }
  out.plots.emplace_back("isir_tv_bound.svg", Plot{"i-SIR TV vs uniform-ergodicity bound", "k", "TV", false, false, {tv, bound}});
  return out;
}

inline ExperimentOutput run_flex2_train(const ExperimentConfig& c, int threads) {
  (void)threads;
  const int dim = c.dims.front();
  const TargetPtr target = make_target(c, dim);
  Rng init(c.seed, 0);
  auto flow = std::make_shared<RealNvpFlow>(flow_config(c, dim), init);
  ExperimentOutput out;
  auto row = [&](const std::string& m, double v) { out.rows.push_back({c.experiment, "flex2", dim, m, v, 0, c.seed}); };
  const bool residual = target->has_exact_sampler();
  if (residual) {
    Rng r(c.seed, 5);
    row("residual_initial", stationarity_residual(*flow, *target, c.alpha, 4096, r));
  }
  FlexState st = flex_init(*target, flow, flex_config(c), stream_seed(c.seed, 1));
  const FlexConfig fc = flex_config(c);
  const AdaptSchedule sch = adapt_schedule(c);
  for (long k = 0; k < c.flow_iterations; ++k) flex2_iteration(st, *target, fc, sch, true);
  if (residual) {
    Rng r(c.seed, 5);
    row("residual_final", stationarity_residual(*st.flow, *target, c.alpha, 4096, r));
  }
  const auto [first, last] = backward_kl_ends(st.training_log);
  row("backward_kl_first", first);
  row("backward_kl_last", last);
  if (!st.training_log.empty()) {
    row("global_accept_final", st.training_log.back().global_accept);
    row("mala_step_final", st.mala_step);
  }
  std::ostringstream log;
  log << "iteration,gamma,alpha,mean_log_weight_var,global_accept,mala_accept,grad_norm,backward_kl\n";
  Series bk{"backward KL surrogate", {}, {}}, ga{"global acceptance", {}, {}};
  for (const auto& r : st.training_log) {
    log << r.iteration << ',' << format_double(r.gamma) << ',' << format_double(r.alpha) << ','
        << format_double(r.mean_log_weight_var) << ',' << format_double(r.global_accept) << ','
        << format_double(r.mala_accept) << ',' << format_double(r.grad_norm) << ',' << format_double(r.backward_kl) << '\n';
    bk.x.push_back(r.iteration);
    bk.y.push_back(r.backward_kl);
    ga.x.push_back(r.iteration);
    ga.y.push_back(r.global_accept);
  }
  out.extra_files.emplace_back("training_log.csv", log.str());
  out.plots.emplace_back("training_backward_kl.svg", Plot{"FlEx2MCMC training", "iteration", "backward KL surrogate", false, false, {bk}});
  out.plots.emplace_back("training_acceptance.svg", Plot{"FlEx2MCMC training", "iteration", "global acceptance", false, false, {ga}});
  std::ostringstream bytes(std::ios::binary);
  st.flow->save(bytes);
  out.extra_files.emplace_back("flow.bin", bytes.str());
  return out;
}

inline TheoryRequest theory_request(const ExperimentConfig& c) {
  TheoryRequest req;
  req.mala = MalaInputs{c.theory_m, c.theory_M, c.theory_L, c.theory_K, c.dims.front()};
  for (int d = 2; d <= (c.extend_dims ? 300 : 100); ++d) req.dims.push_back(d);
  return req;
}

inline ExperimentOutput run_theory_report(const ExperimentConfig& c, int threads) {
  (void)threads;
  const TheoryRequest req = theory_request(c);
  const nlohmann::json rep = theory_report(req);
  ExperimentOutput out;
  Series s{"K_Gamma_bar(d) / K_Gamma_bar(2)", {}, {}}, ref{"sqrt(d/2)", {}, {}};
  for (const auto& e : rep["K_Gamma_bar_scan"]) {
    const int d = e["d"].get<int>();
    out.rows.push_back({c.experiment, "theory", d, "K_Gamma_bar", e["K_Gamma_bar"].get<double>(), 0, c.seed});
    s.x.push_back(d);
    s.y.push_back(e["ratio"].get<double>());
    ref.x.push_back(d);
    ref.y.push_back(std::sqrt(d / 2.0));
  }
  out.rows.push_back({c.experiment, "theory", req.mala.d, "K_Gamma_bar_loglog_slope",
                      rep["K_Gamma_bar_loglog_slope"].get<double>(), 0, c.seed});
  out.rows.push_back({c.experiment, "theory", req.mala.d, "log_mixing_ratio_limit",
                      rep["log_mixing_ratio_limit"].get<double>(), 0, c.seed});
  out.plots.emplace_back("k_gamma_scale.svg", Plot{"Scaling of K_Gamma_bar with dimension", "d", "normalized K", true, true, {s, ref}});
  out.extra_files.emplace_back("theory_report.json", rep.dump(2) + "\n");
  return out;
}

inline ExperimentOutput run_experiment(const ExperimentConfig& c, int threads = 1) {
  ExperimentOutput out;
  if (c.experiment == "gauss-dim-sweep") {
    ExperimentConfig g = c;
    g.target = "gaussian";
    if (g.samplers.empty()) g.samplers = {"isir", "ex2"};
    if (g.metrics.empty()) g.metrics = {"ess"};
    out = run_geometry(g, threads);
  } else if (c.experiment == "funnel" || c.experiment == "banana") {
    ExperimentConfig g = c;
    g.target = c.experiment;
    out = run_geometry(g, threads);
  } else if (c.experiment == "mixture-2d") {
    out = run_mixture(c, threads);
  } else if (c.experiment == "isir-tv-bound") {
    out = run_isir_tv_bound(c, threads);
  } else if (c.experiment == "flex2-train") {
    out = run_flex2_train(c, threads);
  } else if (c.experiment == "theory-report") {
    out = run_theory_report(c, threads);
  } else {
    throw ConfigError("config: unknown experiment '" + c.experiment + "'");
  }
  sort_rows(out.rows);
  out.extra_files.emplace_back("config.cfg", config_text(c));
  return out;
}

/// Writes results.csv, the SVG plots and any extra files into output_dir; returns the paths.
inline std::vector<std::string> emit_outputs(const ExperimentOutput& out, const std::string& output_dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> paths;
  const fs::path dir(output_dir);
  fs::create_directories(dir);
  write_text(dir / "results.csv", csv_text(out.rows));
  paths.push_back((dir / "results.csv").string());
  for (const auto& [name, plot] : out.plots) {
    write_text(dir / name, render_svg(plot));
    paths.push_back((dir / name).string());
  }
  for (const auto& [name, text] : out.extra_files) {
    write_text(dir / name, text);
    paths.push_back((dir / name).string());
  }
  return paths;
}

}  // namespace ex2::bench
