#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "laplace_audit/bounds.hpp"
#include "laplace_audit/diagnostics.hpp"
#include "laplace_audit/laplace.hpp"
#include "laplace_audit/reference.hpp"
#include "laplace_audit/targets.hpp"
#include "laplace_audit/taylor.hpp"

namespace laplace_audit {

struct ExperimentConfig {
  std::string model = "logistic";
  std::vector<int> p_values{5, 10, 30};
  std::vector<long> n_values{10, 30, 100, 300, 1000, 3000};
  int seeds = 5;
  long samples = 50000;
  long var_elbo_se = 2000;
  long var_elbo_sr = 100;
  long chain_samples = 60000;
  long warmup = 10000;
  double target_accept = 0.8;
  int taylor_guard = 150;
  std::vector<std::string> estimators{"klvar", "lsi", "klvar_plus_lsi", "reference_direct",
                                      "reference_chain"};
  std::string out = "results.csv";

  void validate() const {
    require(!p_values.empty() && !n_values.empty(), "config: empty grid");
    require(seeds >= 1, "config: seeds must be >= 1");
    std::set<std::pair<int, long>> cells;
    for (int p : p_values)
      for (long n : n_values)
        require(cells.insert({p, n}).second, "config: duplicate (n,p) cell");
  }
};

// The full-scale grid; hours of compute rather than minutes.
inline ExperimentConfig full_scale_config() {
  ExperimentConfig cfg;
  cfg.p_values = {10, 30, 100, 300, 1000};
  cfg.n_values = {10, 30, 100, 300, 1000, 3000, 5600};
  cfg.chain_samples = 260000;
  return cfg;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> parse_array(const std::string& s) {
  std::vector<std::string> out;
  std::string body = s;
  if (!body.empty() && body.front() == '[' && body.back() == ']')
    body = body.substr(1, body.size() - 2);
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace detail

// Flat `key = value` text format; arrays in brackets, # comments.
inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_config: cannot open " + path);
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("parse_config: missing '=' at line " + std::to_string(lineno));
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (key == "model") cfg.model = detail::unquote(val);
    else if (key == "out") cfg.out = detail::unquote(val);
    else if (key == "seeds") cfg.seeds = std::stoi(val);
    else if (key == "samples") cfg.samples = std::stol(val);
    else if (key == "chain_samples") cfg.chain_samples = std::stol(val);
    else if (key == "warmup") cfg.warmup = std::stol(val);
    else if (key == "target_accept") cfg.target_accept = std::stod(val);
    else if (key == "taylor_guard") cfg.taylor_guard = std::stoi(val);
    else if (key == "var_elbo_se") cfg.var_elbo_se = std::stol(val);
    else if (key == "var_elbo_sr") cfg.var_elbo_sr = std::stol(val);
    else if (key == "p") {
      cfg.p_values.clear();
      for (auto& v : detail::parse_array(val)) cfg.p_values.push_back(std::stoi(v));
    } else if (key == "n") {
      cfg.n_values.clear();
      for (auto& v : detail::parse_array(val)) cfg.n_values.push_back(std::stol(v));
    } else if (key == "estimators") {
      cfg.estimators = detail::parse_array(val);
    } else {
      throw std::runtime_error("parse_config: unknown key '" + key + "' at line " +
                               std::to_string(lineno));
    }
  }
  cfg.validate();
  return cfg;
}

struct ResultRow {
  std::string model;
  long n = 0;
  int p = 0;
  long seed = 0;
  std::string estimator;
  double value = 0.0;
  double std_error = 0.0;
  double runtime_ms = 0.0;
  std::optional<bool> gate;  // chain estimators only
  std::string notes;
};

inline std::string format_g17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline const char* results_csv_header() {
  return "model,n,p,seed,estimator,value,std_error,runtime_ms,gate,notes";
}

inline std::string to_csv_line(const ResultRow& r) {
  std::string gate = r.gate.has_value() ? (*r.gate ? "1" : "0") : "";
  std::string notes = r.notes;
  std::replace(notes.begin(), notes.end(), ',', ';');
  std::replace(notes.begin(), notes.end(), '\n', ' ');
  return r.model + "," + std::to_string(r.n) + "," + std::to_string(r.p) + "," +
         std::to_string(r.seed) + "," + r.estimator + "," + format_g17(r.value) + "," +
         format_g17(r.std_error) + "," + format_g17(r.runtime_ms) + "," + gate + "," + notes;
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_results_csv: cannot open " + path);
  std::vector<ResultRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (first) {
      first = false;
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    ResultRow r;
    std::getline(ss, r.model, ',');
    std::getline(ss, cell, ',');
    r.n = std::stol(cell);
    std::getline(ss, cell, ',');
    r.p = std::stoi(cell);
    std::getline(ss, cell, ',');
    r.seed = std::stol(cell);
    std::getline(ss, r.estimator, ',');
    std::getline(ss, cell, ',');
    r.value = std::stod(cell);
    std::getline(ss, cell, ',');
    r.std_error = std::stod(cell);
    std::getline(ss, cell, ',');
    r.runtime_ms = std::stod(cell);
    std::getline(ss, cell, ',');
    if (!cell.empty()) r.gate = cell == "1";
    std::getline(ss, r.notes);
    rows.push_back(std::move(r));
  }
  return rows;
}

struct SweepSummary {
  long rows_written = 0;
  long rows_skipped = 0;
};

namespace detail {

struct CellFit {
  LogisticDataset data;
  std::optional<LogisticTarget> target;
  std::optional<StandardizedTarget> st;
};

inline std::uint64_t cell_stream(const char* tag, long n, int p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* c = tag; *c; ++c) h = (h ^ static_cast<std::uint64_t>(*c)) * 0x100000001b3ULL;
  h = (h ^ static_cast<std::uint64_t>(n)) * 0x100000001b3ULL;
  h = (h ^ static_cast<std::uint64_t>(p)) * 0x100000001b3ULL;
  return h;
}

}  // namespace detail

// Runs every missing (p, n, seed, estimator) cell of the grid and appends one
// CSV row per run; already-present rows are skipped, so a finished file is a
// no-op. Per-cell failures become rows with an error note. Deterministic:
// every cell draws from streams keyed by (n, p, seed, estimator).
inline SweepSummary run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  require(cfg.model == "logistic", "run_sweep: only the logistic sweep is defined");

  std::set<std::string> existing;
  bool file_exists = std::filesystem::exists(cfg.out);
  if (file_exists) {
    for (const ResultRow& r : read_results_csv(cfg.out))
      existing.insert(r.model + "|" + std::to_string(r.n) + "|" + std::to_string(r.p) + "|" +
                      std::to_string(r.seed) + "|" + r.estimator);
  }

  std::ofstream out(cfg.out, std::ios::app);
  if (!out) throw std::runtime_error("run_sweep: cannot open " + cfg.out);
  if (!file_exists) out << results_csv_header() << "\n";

  SweepSummary summary;
  for (int p : cfg.p_values) {
    for (long n : cfg.n_values) {
      for (long seed = 1; seed <= cfg.seeds; ++seed) {
        // skip the whole cell fit when every row is already present
        bool all_present = true;
        for (const std::string& est : cfg.estimators) {
          std::string key = cfg.model + "|" + std::to_string(n) + "|" + std::to_string(p) + "|" +
                            std::to_string(seed) + "|" + est;
          if (!existing.count(key)) {
            all_present = false;
            break;
          }
        }
        if (all_present) {
          summary.rows_skipped += static_cast<long>(cfg.estimators.size());
          continue;
        }

        std::optional<LogisticTarget> target;
        std::optional<StandardizedTarget> st;
        std::string fit_error;
        try {
          target.emplace(generate_logistic_data(n, p, static_cast<std::uint64_t>(seed)));
          st.emplace(fit_standardized(*target, logistic_theta0(p)));
        } catch (const std::exception& e) {
          fit_error = e.what();
        }

        std::optional<Chain> chain;
        std::optional<GateReport> gate;
        std::string chain_error;

        for (const std::string& est : cfg.estimators) {
          std::string key = cfg.model + "|" + std::to_string(n) + "|" + std::to_string(p) + "|" +
                            std::to_string(seed) + "|" + est;
          if (existing.count(key)) {
            ++summary.rows_skipped;
            continue;
          }

          ResultRow row;
          row.model = cfg.model;
          row.n = n;
          row.p = p;
          row.seed = seed;
          row.estimator = est;
          row.value = std::numeric_limits<double>::quiet_NaN();

          auto t0 = std::chrono::steady_clock::now();
          try {
            if (!fit_error.empty()) throw std::runtime_error("fit failed: " + fit_error);
            RngStream rng(static_cast<std::uint64_t>(seed),
                          detail::cell_stream(est.c_str(), n, p));
            if (est == "klvar") {
              KlEstimate e = estimate_klvar(*st, cfg.samples, rng);
              row.value = e.value;
              row.std_error = e.std_error;
            } else if (est == "lsi") {
              KlEstimate e = estimate_lsi(*st, cfg.samples, rng);
              row.value = e.value;
              row.std_error = e.std_error;
            } else if (est == "klvar_plus_lsi") {
              KlEstimate e = klvar_plus_lsi(*st, cfg.samples, rng);
              row.value = e.value;
              row.std_error = e.std_error;
            } else if (est == "var_elbo") {
              KlEstimate e = estimate_var_elbo(*st, cfg.var_elbo_se, cfg.var_elbo_sr, rng);
              row.value = e.value;
              row.std_error = e.std_error;
            } else if (est == "varelbo_plus_lsi") {
              KlEstimate e = varelbo_plus_lsi(*st, cfg.var_elbo_se, cfg.var_elbo_sr, rng);
              row.value = e.value;
              row.std_error = e.std_error;
            } else if (est == "taylor3" || est == "taylor4") {
              if (p > cfg.taylor_guard) {
                row.notes = "disabled: p exceeds taylor guard " + std::to_string(cfg.taylor_guard);
              } else {
                auto [t3, t4] = compute_tensors(*st, TensorMethod::analytic, cfg.taylor_guard);
                TaylorSums sums = compute_taylor_sums(t3, t4);
                row.value = est == "taylor3" ? 0.5 * taylor_klvar_third_order(sums)
                                             : 0.5 * taylor_klvar(sums);
                row.std_error = 0.0;
              }
            } else if (est == "reference_direct") {
              KlEstimate e = kl_direct(*st, cfg.samples, rng);
              row.value = e.value;
              row.std_error = e.std_error;
            } else if (est == "reference_chain") {
              if (!chain && chain_error.empty()) {
                try {
                  chain = nuts_sample(*st, logistic_theta0(p), cfg.chain_samples, cfg.warmup,
                                      static_cast<std::uint64_t>(seed) * 1000003ULL +
                                          detail::cell_stream("chain", n, p),
                                      cfg.target_accept);
                  gate = autocorr_gate(chain->phi_values);
                } catch (const std::exception& e) {
                  chain_error = e.what();
                }
              }
              if (!chain_error.empty()) throw std::runtime_error(chain_error);
              row.gate = gate->passed;
              KlEstimate e = kl_via_chain(*st, *chain, cfg.samples, rng);
              row.value = e.value;
              row.std_error = e.std_error;
              if (!e.note.empty()) row.notes = e.note;
            } else {
              throw std::invalid_argument("unknown estimator '" + est + "'");
            }
          } catch (const std::exception& e) {
            row.notes = "error: " + std::string(e.what());
          }
          auto t1 = std::chrono::steady_clock::now();
          row.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

          out << to_csv_line(row) << "\n";
          out.flush();
          ++summary.rows_written;
        }
      }
    }
  }
  return summary;
}

// ---------------------------------------------------------------------------
// SVG plotting
// ---------------------------------------------------------------------------

enum class PlotKind { kl_vs_n, ratio_vs_n, ratio_vs_kl };

inline PlotKind parse_plot_kind(const std::string& s) {
  if (s == "kl_vs_n") return PlotKind::kl_vs_n;
  if (s == "ratio_vs_n") return PlotKind::ratio_vs_n;
  if (s == "ratio_vs_kl") return PlotKind::ratio_vs_kl;
  throw std::invalid_argument("unknown plot kind '" + s + "'");
}

struct PlotOptions {
  std::string estimator = "klvar";            // numerator for ratio plots
  std::string reference = "reference_chain";  // KL denominator / y of kl_vs_n
};

namespace detail {

struct PlotPoint {
  double x, y;
  int p;
};

inline const char* plot_color(int idx) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#e377c2"};
  return palette[idx % 8];
}

inline std::string svg_scatter_loglog(const std::vector<PlotPoint>& pts,
                                      const std::string& x_label, const std::string& y_label,
                                      bool slope_guide) {
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& pt : pts) {
    xmin = std::min(xmin, pt.x);
    xmax = std::max(xmax, pt.x);
    ymin = std::min(ymin, pt.y);
    ymax = std::max(ymax, pt.y);
  }
  double lx0 = std::floor(std::log10(xmin)), lx1 = std::ceil(std::log10(xmax));
  double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax));
  if (lx1 <= lx0) lx1 = lx0 + 1;
  if (ly1 <= ly0) ly1 = ly0 + 1;

  const double w = 720, h = 480, ml = 70, mr = 20, mt = 20, mb = 55;
  auto sx = [&](double x) { return ml + (std::log10(x) - lx0) / (lx1 - lx0) * (w - ml - mr); };
  auto sy = [&](double y) { return h - mb - (std::log10(y) - ly0) / (ly1 - ly0) * (h - mt - mb); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  svg << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";

  // frame + decade grid
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\""
      << h - mt - mb << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double e = lx0; e <= lx1 + 0.5; e += 1.0) {
    double x = sx(std::pow(10.0, e));
    svg << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\"" << h - mb
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << x << "\" y=\"" << h - mb + 18
        << "\" font-size=\"12\" text-anchor=\"middle\">1e" << static_cast<int>(e) << "</text>\n";
  }
  for (double e = ly0; e <= ly1 + 0.5; e += 1.0) {
    double y = sy(std::pow(10.0, e));
    svg << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << w - mr << "\" y2=\"" << y
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << y + 4
        << "\" font-size=\"12\" text-anchor=\"end\">1e" << static_cast<int>(e) << "</text>\n";
  }
  svg << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" font-size=\"14\" text-anchor=\"middle\">" << x_label << "</text>\n";
  svg << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
      << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (mt + h - mb) / 2 << ")\">" << y_label << "</text>\n";

  // per-p colors, scatter, and mean lines over x
  std::set<int> ps;
  for (const auto& pt : pts) ps.insert(pt.p);
  int idx = 0;
  for (int p : ps) {
    const char* color = plot_color(idx);
    std::map<double, std::pair<double, int>> acc;  // x -> (sum log y, count)
    for (const auto& pt : pts) {
      if (pt.p != p) continue;
      svg << "<circle cx=\"" << sx(pt.x) << "\" cy=\"" << sy(pt.y)
          << "\" r=\"3\" fill=\"" << color << "\" fill-opacity=\"0.55\"/>\n";
      acc[pt.x].first += std::log(pt.y);
      acc[pt.x].second += 1;
    }
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
    for (const auto& [x, sc] : acc)
      svg << sx(x) << "," << sy(std::exp(sc.first / sc.second)) << " ";
    svg << "\"/>\n";
    svg << "<text x=\"" << w - mr - 8 << "\" y=\"" << mt + 18 + 16 * idx
        << "\" font-size=\"13\" text-anchor=\"end\" fill=\"" << color << "\">p = " << p
        << "</text>\n";
    ++idx;
  }

  if (slope_guide) {
    // reference slope -1 through the geometric center
    double cx = std::pow(10.0, 0.5 * (lx0 + lx1));
    double cy = std::pow(10.0, 0.5 * (ly0 + ly1));
    double x_a = std::pow(10.0, lx0), x_b = std::pow(10.0, lx1);
    double y_a = cy * cx / x_a, y_b = cy * cx / x_b;
    svg << "<line x1=\"" << sx(x_a) << "\" y1=\"" << sy(y_a) << "\" x2=\"" << sx(x_b)
        << "\" y2=\"" << sy(y_b)
        << "\" stroke=\"#555555\" stroke-dasharray=\"6 4\"/>\n";
    svg << "<text x=\"" << sx(x_b) - 6 << "\" y=\"" << sy(y_b) - 6
        << "\" font-size=\"12\" text-anchor=\"end\" fill=\"#555555\">slope -1</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace detail

// Renders one of the sweep views as a self-contained SVG file.
inline void plot(const std::vector<ResultRow>& rows, PlotKind kind, const std::string& out_path,
                 const PlotOptions& opt = {}) {
  std::map<std::string, double> ref, est;
  for (const ResultRow& r : rows) {
    if (!std::isfinite(r.value)) continue;
    std::string key =
        std::to_string(r.n) + "|" + std::to_string(r.p) + "|" + std::to_string(r.seed);
    if (r.estimator == opt.reference) ref[key] = r.value;
    if (r.estimator == opt.estimator) est[key] = r.value;
  }

  std::vector<detail::PlotPoint> pts;
  for (const ResultRow& r : rows) {
    if (!std::isfinite(r.value)) continue;
    std::string key =
        std::to_string(r.n) + "|" + std::to_string(r.p) + "|" + std::to_string(r.seed);
    if (kind == PlotKind::kl_vs_n) {
      if (r.estimator != opt.reference || r.value <= 0.0) continue;
      pts.push_back({static_cast<double>(r.n), r.value, r.p});
    } else if (kind == PlotKind::ratio_vs_n) {
      if (r.estimator != opt.estimator || !ref.count(key)) continue;
      double denom = ref.at(key);
      if (denom <= 0.0 || r.value <= 0.0) continue;
      pts.push_back({static_cast<double>(r.n), r.value / denom, r.p});
    } else {
      if (r.estimator != opt.estimator || !ref.count(key)) continue;
      double denom = ref.at(key);
      if (denom <= 0.0 || r.value <= 0.0) continue;
      pts.push_back({denom, r.value / denom, r.p});
    }
  }
  if (pts.empty()) throw std::runtime_error("plot: no rows match the requested view");

  std::string x_label = kind == PlotKind::ratio_vs_kl ? "reference KL (nats)" : "n";
  std::string y_label = kind == PlotKind::kl_vs_n
                            ? "KL(g,f) (nats)"
                            : opt.estimator + " / " + opt.reference;
  std::string svg =
      detail::svg_scatter_loglog(pts, x_label, y_label, kind == PlotKind::kl_vs_n);
  std::ofstream out(out_path);
  if (!out) throw std::runtime_error("plot: cannot open " + out_path);
  out << svg;
}

inline void plot_file(const std::string& in_csv, PlotKind kind, const std::string& out_path,
                      const PlotOptions& opt = {}) {
  plot(read_results_csv(in_csv), kind, out_path, opt);
}

// ---------------------------------------------------------------------------
// Mixture counterexample demo
// ---------------------------------------------------------------------------

struct MixtureDemoReport {
  double sigma_wide = 0.0;
  double klvar_half = 0.0;       // 1/2 KL-variance estimate
  double klvar_se = 0.0;
  double quadrature_kl = 0.0;    // ground truth
  std::string warning;
};

inline MixtureDemoReport demo_mixture(double sigma_wide, long s = 50000,
                                      std::uint64_t seed = 1) {
  Mixture1DTarget target = mixture_target_1d(sigma_wide);
  VectorXd zero = VectorXd::Zero(1);
  StandardizedTarget st = standardize(target, build_laplace(target, zero));

  MixtureDemoReport rep;
  rep.sigma_wide = sigma_wide;
  KlEstimate kv = estimate_klvar(st, s, RngStream(seed, 0x313ULL));
  rep.klvar_half = kv.value;
  rep.klvar_se = kv.std_error;
  rep.quadrature_kl = kl_quadrature_1d(st);
  rep.warning =
      "warning: the KL-variance surrogate assumes a log-concave target; this mixture "
      "violates that precondition, so the surrogate can sit far below the true KL";
  return rep;
}

}  // namespace laplace_audit
