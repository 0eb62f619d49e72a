#include "tll/harness.hpp"

#include <gsl/gsl_cdf.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "tll/analysis.hpp"
#include "tll/exact.hpp"
#include "tll/io.hpp"
#include "tll/rng.hpp"
#include "tll/stats.hpp"

namespace tll::harness {

namespace {

using nlohmann::json;

#ifndef TLL_VERSION
#define TLL_VERSION "0.0.0-dev"
#endif
constexpr const char* kToolVersion = TLL_VERSION;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

constexpr std::pair<const char*, Scenario> kScenarioNames[] = {
    {"ground_state_correlations", Scenario::GroundStateCorrelations},
    {"adiabatic_ramp", Scenario::AdiabaticRamp},
    {"back_and_forth_ramp", Scenario::BackAndForthRamp},
    {"friedel", Scenario::Friedel},
    {"quench", Scenario::Quench},
    {"dsf", Scenario::Dsf},
    {"disordered_chain", Scenario::DisorderedChain},
    {"thermal_comparison", Scenario::ThermalComparison},
};

// ------------------------------------------------------------- svg writer
//
// Line plots and heatmaps for quick visual checks of a run; not meant for
// publication. Fixed canvas, five ticks per axis, decade ticks on log axes.

struct Series {
  std::string name;
  std::vector<double> x, y;
};

const char* series_color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  return palette[i % 6];
}

std::string fmt2(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string fmt_tick(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Frame {
  double x0 = 64, x1 = 612, y0 = 376, y1 = 44;  // pixel corners (y flipped)
  double lo_x = 0, hi_x = 1, lo_y = 0, hi_y = 1;
  bool log_x = false, log_y = false;

  double px(double x) const {
    const double t = log_x ? std::log10(x) : x;
    return x0 + (t - lo_x) / (hi_x - lo_x) * (x1 - x0);
  }
  double py(double y) const {
    const double t = log_y ? std::log10(y) : y;
    return y0 + (t - lo_y) / (hi_y - lo_y) * (y1 - y0);
  }
  bool usable(double x, double y) const {
    if (!std::isfinite(x) || !std::isfinite(y)) return false;
    if (log_x && x <= 0) return false;
    if (log_y && y <= 0) return false;
    return true;
  }
};

void svg_open(std::ostringstream& s, const std::string& title) {
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"660\" height=\"420\" "
       "viewBox=\"0 0 660 420\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"660\" height=\"420\" fill=\"white\"/>\n"
    << "<text x=\"330\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title
    << "</text>\n";
}

void svg_axes(std::ostringstream& s, const Frame& f, const std::string& xlabel,
              const std::string& ylabel) {
  s << "<rect x=\"" << fmt2(f.x0) << "\" y=\"" << fmt2(f.y1) << "\" width=\""
    << fmt2(f.x1 - f.x0) << "\" height=\"" << fmt2(f.y0 - f.y1)
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double tx = f.lo_x + (f.hi_x - f.lo_x) * k / 4.0;
    const double ty = f.lo_y + (f.hi_y - f.lo_y) * k / 4.0;
    const double vx = f.log_x ? std::pow(10.0, tx) : tx;
    const double vy = f.log_y ? std::pow(10.0, ty) : ty;
    const double px = f.x0 + (f.x1 - f.x0) * k / 4.0;
    const double py = f.y0 + (f.y1 - f.y0) * k / 4.0;
    s << "<line x1=\"" << fmt2(px) << "\" y1=\"" << fmt2(f.y0) << "\" x2=\"" << fmt2(px)
      << "\" y2=\"" << fmt2(f.y0 + 4) << "\" stroke=\"#444\"/>\n"
      << "<text x=\"" << fmt2(px) << "\" y=\"" << fmt2(f.y0 + 17)
      << "\" text-anchor=\"middle\">" << fmt_tick(vx) << "</text>\n"
      << "<line x1=\"" << fmt2(f.x0 - 4) << "\" y1=\"" << fmt2(py) << "\" x2=\""
      << fmt2(f.x0) << "\" y2=\"" << fmt2(py) << "\" stroke=\"#444\"/>\n"
      << "<text x=\"" << fmt2(f.x0 - 7) << "\" y=\"" << fmt2(py + 4)
      << "\" text-anchor=\"end\">" << fmt_tick(vy) << "</text>\n";
  }
  s << "<text x=\"" << fmt2((f.x0 + f.x1) / 2) << "\" y=\"410\" text-anchor=\"middle\">"
    << xlabel << "</text>\n"
    << "<text x=\"16\" y=\"" << fmt2((f.y0 + f.y1) / 2)
    << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << fmt2((f.y0 + f.y1) / 2)
    << ")\">" << ylabel << "</text>\n";
}

std::string svg_line_plot(const std::string& title, const std::string& xlabel,
                          const std::string& ylabel, const std::vector<Series>& series,
                          bool log_x = false, bool log_y = false) {
  Frame f;
  f.log_x = log_x;
  f.log_y = log_y;
  bool any = false;
  double lo_x = 0, hi_x = 0, lo_y = 0, hi_y = 0;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!f.usable(s.x[i], s.y[i])) continue;
      const double tx = log_x ? std::log10(s.x[i]) : s.x[i];
      const double ty = log_y ? std::log10(s.y[i]) : s.y[i];
      if (!any) {
        lo_x = hi_x = tx;
        lo_y = hi_y = ty;
        any = true;
      } else {
        lo_x = std::min(lo_x, tx);
        hi_x = std::max(hi_x, tx);
        lo_y = std::min(lo_y, ty);
        hi_y = std::max(hi_y, ty);
      }
    }
  if (!any) {
    lo_x = lo_y = 0;
    hi_x = hi_y = 1;
  }
  if (hi_x - lo_x < 1e-12) {
    lo_x -= 1;
    hi_x += 1;
  }
  if (hi_y - lo_y < 1e-12) {
    lo_y -= 1;
    hi_y += 1;
  }
  const double pad_x = 0.04 * (hi_x - lo_x), pad_y = 0.06 * (hi_y - lo_y);
  f.lo_x = lo_x - pad_x;
  f.hi_x = hi_x + pad_x;
  f.lo_y = lo_y - pad_y;
  f.hi_y = hi_y + pad_y;

  std::ostringstream s;
  svg_open(s, title);
  svg_axes(s, f, xlabel, ylabel);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& sr = series[si];
    const char* color = series_color(si);
    std::ostringstream pts;
    bool open = false;
    auto flush = [&]() {
      const std::string p = pts.str();
      if (open && p.find(' ') != std::string::npos)
        s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
          << p << "\"/>\n";
      pts.str("");
      open = false;
    };
    for (std::size_t i = 0; i < sr.x.size(); ++i) {
      if (!f.usable(sr.x[i], sr.y[i])) {
        flush();
        continue;
      }
      pts << (open ? " " : "") << fmt2(f.px(sr.x[i])) << "," << fmt2(f.py(sr.y[i]));
      open = true;
    }
    flush();
    const double ly = 54 + 16 * static_cast<double>(si);
    s << "<line x1=\"520\" y1=\"" << fmt2(ly - 4) << "\" x2=\"544\" y2=\"" << fmt2(ly - 4)
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"548\" y=\"" << fmt2(ly) << "\">" << sr.name << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string heat_color(double t) {
  // five-stop dark-violet-to-yellow gradient
  static const double stops[5][3] = {{0.267, 0.005, 0.329},
                                     {0.229, 0.322, 0.545},
                                     {0.127, 0.566, 0.551},
                                     {0.369, 0.788, 0.382},
                                     {0.993, 0.906, 0.144}};
  t = std::clamp(t, 0.0, 1.0);
  const double u = t * 4.0;
  const int k = std::min(3, static_cast<int>(u));
  const double w = u - k;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(255 * (stops[k][0] + w * (stops[k + 1][0] - stops[k][0]))),
                static_cast<int>(255 * (stops[k][1] + w * (stops[k + 1][1] - stops[k][1]))),
                static_cast<int>(255 * (stops[k][2] + w * (stops[k + 1][2] - stops[k][2]))));
  return buf;
}

// vals(i, j) drawn at x = xs[i], y = ys[j]
std::string svg_heatmap(const std::string& title, const std::string& xlabel,
                        const std::string& ylabel, const std::vector<double>& xs,
                        const std::vector<double>& ys, const Eigen::MatrixXd& vals) {
  Frame f;
  f.lo_x = 0;
  f.hi_x = static_cast<double>(xs.size());
  f.lo_y = -0.5;
  f.hi_y = ys.size() - 0.5;
  double vmin = 0, vmax = 0;
  bool any = false;
  for (Eigen::Index i = 0; i < vals.rows(); ++i)
    for (Eigen::Index j = 0; j < vals.cols(); ++j)
      if (std::isfinite(vals(i, j))) {
        if (!any) {
          vmin = vmax = vals(i, j);
          any = true;
        } else {
          vmin = std::min(vmin, vals(i, j));
          vmax = std::max(vmax, vals(i, j));
        }
      }
  if (!any || vmax - vmin < 1e-300) vmax = vmin + 1;

  std::ostringstream s;
  svg_open(s, title);
  const double cw = (f.x1 - f.x0) / std::max<std::size_t>(1, xs.size());
  const double ch = (f.y0 - f.y1) / std::max<std::size_t>(1, ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) {
      const double v = vals(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (!std::isfinite(v)) continue;
      const double x = f.x0 + cw * static_cast<double>(i);
      const double y = f.y0 - ch * static_cast<double>(j + 1);
      s << "<rect x=\"" << fmt2(x) << "\" y=\"" << fmt2(y) << "\" width=\"" << fmt2(cw + 0.5)
        << "\" height=\"" << fmt2(ch + 0.5) << "\" fill=\""
        << heat_color((v - vmin) / (vmax - vmin)) << "\"/>\n";
    }
  s << "<rect x=\"" << fmt2(f.x0) << "\" y=\"" << fmt2(f.y1) << "\" width=\""
    << fmt2(f.x1 - f.x0) << "\" height=\"" << fmt2(f.y0 - f.y1)
    << "\" fill=\"none\" stroke=\"#444\"/>\n";
  // corner labels carry the axis ranges; cells are uniform in index
  s << "<text x=\"" << fmt2(f.x0) << "\" y=\"" << fmt2(f.y0 + 17) << "\">"
    << fmt_tick(xs.empty() ? 0 : xs.front()) << "</text>\n"
    << "<text x=\"" << fmt2(f.x1) << "\" y=\"" << fmt2(f.y0 + 17) << "\" text-anchor=\"end\">"
    << fmt_tick(xs.empty() ? 0 : xs.back()) << "</text>\n"
    << "<text x=\"" << fmt2(f.x0 - 7) << "\" y=\"" << fmt2(f.y0) << "\" text-anchor=\"end\">"
    << fmt_tick(ys.empty() ? 0 : ys.front()) << "</text>\n"
    << "<text x=\"" << fmt2(f.x0 - 7) << "\" y=\"" << fmt2(f.y1 + 8) << "\" text-anchor=\"end\">"
    << fmt_tick(ys.empty() ? 0 : ys.back()) << "</text>\n"
    << "<text x=\"" << fmt2((f.x0 + f.x1) / 2) << "\" y=\"410\" text-anchor=\"middle\">"
    << xlabel << "</text>\n"
    << "<text x=\"16\" y=\"" << fmt2((f.y0 + f.y1) / 2)
    << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << fmt2((f.y0 + f.y1) / 2)
    << ")\">" << ylabel << "</text>\n"
    << "<text x=\"520\" y=\"54\">range " << fmt_tick(vmin) << " .. " << fmt_tick(vmax)
    << "</text>\n</svg>\n";
  return s.str();
}

// --------------------------------------------------------------- emitter

struct Emitter {
  std::filesystem::path dir;
  std::vector<ManifestEntry> files;
  std::vector<std::string> warnings;

  std::filesystem::path path(const std::string& name) const { return dir / name; }

  // Checksums are filled in when the manifest is assembled: a noted file may
  // still be held open by a buffered writer in the caller's scope.
  void note(const std::string& name) {
    ManifestEntry e;
    e.name = name;
    files.push_back(std::move(e));
  }

  void finalize_entries() {
    for (auto& e : files) {
      e.checksum = io::hex64(io::checksum_file(path(e.name)));
      e.bytes = std::filesystem::file_size(path(e.name));
    }
  }

  void warn(const std::string& msg) {
    warnings.push_back(msg);
    std::cerr << "warning: " << msg << "\n";
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(path(name), std::ios::binary);
    out << text;
    out.close();
    note(name);
  }

  void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }
};

// Desk-scale chains can leave too few points for a fit; the run should then
// degrade to a warning plus a stub result, not abort the scenario.
analysis::FitResult try_fit(Emitter& em, const std::string& label,
                            const std::function<analysis::FitResult()>& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    em.warn("analysis: " + label + " skipped (" + e.what() + ")");
    analysis::FitResult stub;
    stub.message = e.what();
    return stub;
  }
}

json fit_json(const analysis::FitResult& fit) {
  json j;
  j["names"] = fit.names;
  std::vector<double> values, errors;
  for (Eigen::Index i = 0; i < fit.values.size(); ++i) {
    values.push_back(fit.values[i]);
    errors.push_back(std::sqrt(std::max(0.0, fit.covariance(i, i))));
  }
  j["values"] = values;
  j["errors"] = errors;
  std::vector<std::vector<double>> cov;
  for (Eigen::Index i = 0; i < fit.covariance.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index k = 0; k < fit.covariance.cols(); ++k) row.push_back(fit.covariance(i, k));
    cov.push_back(std::move(row));
  }
  j["covariance"] = cov;
  j["chi2"] = fit.chi2;
  j["chi2_reduced"] = fit.chi2_reduced;
  j["dof"] = fit.dof;
  j["r_c"] = fit.r_c;
  j["rescale"] = fit.rescale;
  j["weighted"] = fit.weighted;
  j["converged"] = fit.converged;
  j["message"] = fit.message;
  return j;
}

json scan_json(const analysis::CutoffScan& scan) {
  json j;
  j["r_c"] = scan.r_c;
  j["k"] = scan.k;
  j["converged"] = std::vector<bool>(scan.converged.begin(), scan.converged.end());
  j["selected_index"] = scan.selected_index;
  if (scan.has_selection()) j["selected_r_c"] = scan.selected_rc();
  return j;
}

void write_profile_csv(Emitter& em, const std::string& name,
                       const analysis::CorrelationProfile& p) {
  io::CsvWriter w(em.path(name));
  w.comment("basis " + p.basis + ", samples " + std::to_string(p.n_samples));
  w.header({"r_chord", "d_sites", "mean", "stderr", "n_pairs"});
  for (std::size_t i = 0; i < p.r.size(); ++i)
    w.row({p.r[i], static_cast<double>(p.d[i]), p.mean[i], p.err[i],
           static_cast<double>(p.n_pairs[i])});
  em.note(name);
}

// ---------------------------------------------------------------- parser

struct Parser {
  std::vector<std::string> errors;

  void fail(const std::string& where, const std::string& msg) {
    errors.push_back(where + ": " + msg);
  }

  void check_keys(const json& o, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    for (const auto& item : o.items()) {
      bool known = false;
      for (const char* k : allowed)
        if (item.key() == k) {
          known = true;
          break;
        }
      if (!known) fail(where, "unknown key '" + item.key() + "'");
    }
  }

  double number(const json& o, const std::string& where, const char* key,
                std::optional<double> dflt) {
    if (!o.contains(key)) {
      if (dflt) return *dflt;
      fail(where + "." + key, "required");
      return 0;
    }
    if (!o[key].is_number()) {
      fail(where + "." + key, "expected a number");
      return dflt.value_or(0);
    }
    return o[key].get<double>();
  }

  int integer(const json& o, const std::string& where, const char* key,
              std::optional<int> dflt) {
    if (!o.contains(key)) {
      if (dflt) return *dflt;
      fail(where + "." + key, "required");
      return 0;
    }
    if (!o[key].is_number_integer()) {
      fail(where + "." + key, "expected an integer");
      return dflt.value_or(0);
    }
    return o[key].get<int>();
  }

  bool boolean(const json& o, const std::string& where, const char* key, bool dflt) {
    if (!o.contains(key)) return dflt;
    if (!o[key].is_boolean()) {
      fail(where + "." + key, "expected true or false");
      return dflt;
    }
    return o[key].get<bool>();
  }

  std::string str(const json& o, const std::string& where, const char* key,
                  std::optional<std::string> dflt) {
    if (!o.contains(key)) {
      if (dflt) return *dflt;
      fail(where + "." + key, "required");
      return "";
    }
    if (!o[key].is_string()) {
      fail(where + "." + key, "expected a string");
      return dflt.value_or("");
    }
    return o[key].get<std::string>();
  }

  std::vector<double> numbers(const json& o, const std::string& where, const char* key) {
    std::vector<double> out;
    if (!o.contains(key)) return out;
    if (!o[key].is_array()) {
      fail(where + "." + key, "expected an array of numbers");
      return out;
    }
    for (const auto& v : o[key]) {
      if (!v.is_number()) {
        fail(where + "." + key, "expected an array of numbers");
        return {};
      }
      out.push_back(v.get<double>());
    }
    return out;
  }

  std::vector<int> integers(const json& o, const std::string& where, const char* key) {
    std::vector<int> out;
    if (!o.contains(key)) return out;
    if (!o[key].is_array()) {
      fail(where + "." + key, "expected an array of integers");
      return out;
    }
    for (const auto& v : o[key]) {
      if (!v.is_number_integer()) {
        fail(where + "." + key, "expected an array of integers");
        return {};
      }
      out.push_back(v.get<int>());
    }
    return out;
  }
};

bool block_applies(Scenario s, const std::string& name) {
  const bool ramp_like = s == Scenario::AdiabaticRamp || s == Scenario::BackAndForthRamp;
  if (name == "geometry") return true;
  if (name == "coupling") return s != Scenario::DisorderedChain;
  if (name == "ramp") return ramp_like || s == Scenario::Friedel;
  if (name == "noise") return ramp_like || s == Scenario::Friedel;
  if (name == "quench") return s == Scenario::Quench;
  if (name == "friedel") return s == Scenario::Friedel;
  if (name == "dsf") return s == Scenario::Dsf;
  if (name == "thermal") return s == Scenario::ThermalComparison;
  if (name == "disorder") return s == Scenario::DisorderedChain;
  return false;
}

void parse_geometry(Parser& P, const json& root, ExperimentConfig& cfg) {
  const std::size_t errors_before = P.errors.size();
  if (!root.contains("geometry")) {
    P.fail("geometry", "required");
    return;
  }
  const json& g = root["geometry"];
  if (!g.is_object()) {
    P.fail("geometry", "expected an object");
    return;
  }
  if (cfg.scenario == Scenario::DisorderedChain)
    P.check_keys(g, "geometry", {"n_sites"});
  else
    P.check_keys(g, "geometry", {"n_sites", "boundary", "removed_site", "holes"});

  auto& geom = cfg.geometry;
  geom.n_sites = P.integer(g, "geometry", "n_sites", std::nullopt);
  if (geom.n_sites < 2) P.fail("geometry.n_sites", "chain needs at least 2 sites");

  const std::string b = P.str(g, "geometry", "boundary", std::string("periodic"));
  if (b == "periodic") {
    geom.boundary = lattice::Boundary::PeriodicRing;
    if (g.contains("removed_site"))
      P.fail("geometry.removed_site", "only meaningful for an open boundary");
  } else if (b == "open") {
    geom.boundary = lattice::Boundary::OpenRing;
    geom.removed_site = P.integer(g, "geometry", "removed_site", geom.n_sites - 1);
  } else {
    P.fail("geometry.boundary", "expected 'periodic' or 'open'");
  }
  geom.holes = P.integers(g, "geometry", "holes");

  // Only this block's own parse failures should suppress the semantic check;
  // errors from unrelated blocks must not mask a bad geometry.
  if (P.errors.size() == errors_before) {
    try {
      geom.validate();
    } catch (const std::invalid_argument& e) {
      P.fail("geometry", e.what());
    }
  }
}

void parse_coupling(Parser& P, const json& root, ExperimentConfig& cfg) {
  const std::size_t errors_before = P.errors.size();
  std::string sign_name = "fm";
  const json* c = nullptr;
  if (root.contains("coupling")) {
    c = &root["coupling"];
    if (!c->is_object()) {
      P.fail("coupling", "expected an object");
      return;
    }
    P.check_keys(*c, "coupling",
                 {"sign", "preset", "j_rad_per_us", "exponent", "vdw_uu_rad_per_us",
                  "vdw_dd_rad_per_us", "vdw_ud_rad_per_us", "vdw_enabled", "bond_overrides"});
    sign_name = P.str(*c, "coupling", "sign", std::string("fm"));
  }
  lattice::Sign sign = lattice::Sign::FM;
  if (sign_name == "afm")
    sign = lattice::Sign::AFM;
  else if (sign_name != "fm")
    P.fail("coupling.sign", "expected 'fm' or 'afm'");

  std::string preset = cfg.scenario == Scenario::Quench ? "quench" : "adiabatic";
  if (c) preset = P.str(*c, "coupling", "preset", preset);
  if (preset == "adiabatic")
    cfg.coupling = lattice::CouplingModel::dipolar_adiabatic(sign);
  else if (preset == "quench")
    cfg.coupling = lattice::CouplingModel::dipolar_quench(sign);
  else
    P.fail("coupling.preset", "expected 'adiabatic' or 'quench'");

  if (c) {
    cfg.coupling.j_xy = P.number(*c, "coupling", "j_rad_per_us", cfg.coupling.j_xy);
    if (c->contains("exponent")) {
      const json& e = (*c)["exponent"];
      if (e.is_string() && e.get<std::string>() == "nn")
        cfg.coupling.exponent = std::numeric_limits<double>::infinity();
      else if (e.is_number())
        cfg.coupling.exponent = e.get<double>();
      else
        P.fail("coupling.exponent", "expected a number or 'nn'");
    }
    cfg.coupling.vdw_uu = P.number(*c, "coupling", "vdw_uu_rad_per_us", cfg.coupling.vdw_uu);
    cfg.coupling.vdw_dd = P.number(*c, "coupling", "vdw_dd_rad_per_us", cfg.coupling.vdw_dd);
    cfg.coupling.vdw_ud = P.number(*c, "coupling", "vdw_ud_rad_per_us", cfg.coupling.vdw_ud);
    if (!P.boolean(*c, "coupling", "vdw_enabled", true))
      cfg.coupling.vdw_uu = cfg.coupling.vdw_dd = cfg.coupling.vdw_ud = 0.0;
    if (c->contains("bond_overrides")) {
      const json& bo = (*c)["bond_overrides"];
      if (!bo.is_array()) {
        P.fail("coupling.bond_overrides", "expected an array of [i, j, factor]");
      } else {
        for (const auto& t : bo) {
          if (!t.is_array() || t.size() != 3 || !t[0].is_number_integer() ||
              !t[1].is_number_integer() || !t[2].is_number()) {
            P.fail("coupling.bond_overrides", "expected entries of the form [i, j, factor]");
            break;
          }
          int i = t[0].get<int>(), j = t[1].get<int>();
          if (i > j) std::swap(i, j);
          cfg.coupling.bond_overrides[{i, j}] = t[2].get<double>();
        }
      }
    }
  }
  // Same local guard as the geometry block: a seed or geometry error must not
  // hide a coupling that would fail its own semantic check.
  if (P.errors.size() == errors_before) {
    try {
      cfg.coupling.validate();
    } catch (const std::invalid_argument& e) {
      P.fail("coupling", e.what());
    }
  }
}

void parse_ramp(Parser& P, const json& root, ExperimentConfig& cfg) {
  const bool required = cfg.scenario == Scenario::AdiabaticRamp ||
                        cfg.scenario == Scenario::BackAndForthRamp ||
                        (cfg.scenario == Scenario::Friedel &&
                         cfg.friedel.mode == protocol::FriedelMode::AdiabaticRamp);
  if (!root.contains("ramp")) {
    if (required) P.fail("ramp", "required for this scenario");
    return;
  }
  const json& r = root["ramp"];
  if (!r.is_object()) {
    P.fail("ramp", "expected an object");
    return;
  }
  P.check_keys(r, "ramp",
               {"delta0_rad_per_us", "T_us", "alpha", "sign", "sublattice", "checkpoints_us",
                "reverse", "n_trajectories"});

  auto& sched = cfg.ramp.schedule;
  const double delta0 = P.number(r, "ramp", "delta0_rad_per_us", std::nullopt);
  if (!(delta0 > 0)) P.fail("ramp.delta0_rad_per_us", "must be a positive magnitude");
  const int implied = cfg.coupling.sign == lattice::Sign::AFM ? -1 : 1;
  const int sign = P.integer(r, "ramp", "sign", implied);
  if (sign != 1 && sign != -1) P.fail("ramp.sign", "expected +1 or -1");
  else if (sign != implied)
    P.fail("ramp.sign", "the light-shift sign follows the fm/afm branch of the coupling");
  sched.delta0 = implied * std::abs(delta0);

  sched.duration = P.number(r, "ramp", "T_us", std::nullopt);
  if (!(sched.duration > 0)) P.fail("ramp.T_us", "must be positive");
  sched.alpha = P.number(r, "ramp", "alpha", 20.0);
  if (sched.alpha < 1.0) P.fail("ramp.alpha", "must be at least 1");

  const bool implied_reverse = cfg.scenario == Scenario::BackAndForthRamp;
  sched.reverse = P.boolean(r, "ramp", "reverse", implied_reverse);
  if (sched.reverse != implied_reverse)
    P.fail("ramp.reverse", "fixed by the scenario (back_and_forth_ramp reverses, others do not)");

  if (r.contains("sublattice")) {
    const json& s = r["sublattice"];
    if (s.is_string() && s.get<std::string>() == "alternating") {
      cfg.ramp.alternating = true;
    } else if (s.is_array()) {
      cfg.ramp.alternating = false;
      cfg.ramp.explicit_sites = P.integers(r, "ramp", "sublattice");
      if (cfg.ramp.explicit_sites.empty())
        P.fail("ramp.sublattice", "explicit site list must be nonempty");
    } else {
      P.fail("ramp.sublattice", "expected 'alternating' or an array of site indices");
    }
  }

  sched.checkpoints = P.numbers(r, "ramp", "checkpoints_us");
  if (!std::is_sorted(sched.checkpoints.begin(), sched.checkpoints.end()))
    P.fail("ramp.checkpoints_us", "must be ascending");

  cfg.ramp.n_trajectories = P.integer(r, "ramp", "n_trajectories", 1);
  if (cfg.ramp.n_trajectories < 1) P.fail("ramp.n_trajectories", "must be at least 1");
}

void parse_noise(Parser& P, const json& root, ExperimentConfig& cfg) {
  if (!root.contains("noise")) return;
  const json& n = root["noise"];
  if (!n.is_object()) {
    P.fail("noise", "expected an object");
    return;
  }
  P.check_keys(n, "noise",
               {"p_init", "gamma_per_us", "eps_up", "eps_dn", "holes_enabled", "decay_enabled",
                "detection_enabled"});
  cfg.noise.p_init = P.number(n, "noise", "p_init", 0.0);
  cfg.noise.gamma = P.number(n, "noise", "gamma_per_us", 0.0);
  cfg.noise.eps_up = P.number(n, "noise", "eps_up", 0.0);
  cfg.noise.eps_dn = P.number(n, "noise", "eps_dn", 0.0);
  cfg.noise.holes_enabled = P.boolean(n, "noise", "holes_enabled", true);
  cfg.noise.decay_enabled = P.boolean(n, "noise", "decay_enabled", true);
  cfg.noise.detection_enabled = P.boolean(n, "noise", "detection_enabled", true);
  try {
    cfg.noise.validate();
  } catch (const std::invalid_argument& e) {
    P.fail("noise", e.what());
  }
}

void parse_quench(Parser& P, const json& root, ExperimentConfig& cfg) {
  if (!root.contains("quench")) {
    P.fail("quench", "required for this scenario");
    return;
  }
  const json& q = root["quench"];
  if (!q.is_object()) {
    P.fail("quench", "expected an object");
    return;
  }
  P.check_keys(q, "quench", {"initial", "times_us"});
  const std::string init = P.str(q, "quench", "initial", std::string("css_y"));
  if (init == "css_y")
    cfg.quench.initial = protocol::QuenchInitial::CssY;
  else if (init == "staggered_css_y")
    cfg.quench.initial = protocol::QuenchInitial::StaggeredCssY;
  else
    P.fail("quench.initial", "expected 'css_y' or 'staggered_css_y'");
  cfg.quench.times = P.numbers(q, "quench", "times_us");
  if (cfg.quench.times.empty()) P.fail("quench.times_us", "required and nonempty");
  if (!std::is_sorted(cfg.quench.times.begin(), cfg.quench.times.end()))
    P.fail("quench.times_us", "must be ascending");
  if (!cfg.quench.times.empty() && cfg.quench.times.front() < 0)
    P.fail("quench.times_us", "times must be nonnegative");
  if (cfg.geometry.n_active() > protocol::kQuenchMaxSpins)
    P.fail("geometry.n_sites", "quench evolution is capped at " +
                                   std::to_string(protocol::kQuenchMaxSpins) + " active spins");
}

void parse_friedel(Parser& P, const json& root, ExperimentConfig& cfg) {
  if (!root.contains("friedel")) {
    P.fail("friedel", "required for this scenario");
    return;
  }
  const json& f = root["friedel"];
  if (!f.is_object()) {
    P.fail("friedel", "expected an object");
    return;
  }
  P.check_keys(f, "friedel", {"Mz", "mode"});
  cfg.friedel.mz = P.integer(f, "friedel", "Mz", std::nullopt);
  const std::string mode = P.str(f, "friedel", "mode", std::string("direct"));
  if (mode == "direct")
    cfg.friedel.mode = protocol::FriedelMode::DirectGroundState;
  else if (mode == "adiabatic_ramp")
    cfg.friedel.mode = protocol::FriedelMode::AdiabaticRamp;
  else
    P.fail("friedel.mode", "expected 'direct' or 'adiabatic_ramp'");

  if (cfg.geometry.boundary != lattice::Boundary::OpenRing)
    P.fail("geometry.boundary", "the friedel scenario needs an open ring");
  const int n = cfg.geometry.n_active();
  if (n % 2 == 0) P.fail("geometry.n_sites", "friedel needs an odd number of atoms");
  if ((n + cfg.friedel.mz) % 2 != 0)
    P.fail("friedel.Mz", "parity mismatch: Mz must be odd when the atom number is odd");
  if (std::abs(cfg.friedel.mz) > n) P.fail("friedel.Mz", "magnitude exceeds the atom number");
}

void parse_dsf(Parser& P, const json& root, ExperimentConfig& cfg) {
  if (root.contains("dsf")) {
    const json& d = root["dsf"];
    if (!d.is_object()) {
      P.fail("dsf", "expected an object");
      return;
    }
    P.check_keys(d, "dsf", {"mz", "eta_rad_per_us", "n_bins", "omega_max_rad_per_us"});
    cfg.dsf.mz = P.integer(d, "dsf", "mz", 0);
    cfg.dsf.eta = P.number(d, "dsf", "eta_rad_per_us", 0.0);
    if (cfg.dsf.eta < 0) P.fail("dsf.eta_rad_per_us", "must be nonnegative");
    cfg.dsf.n_bins = P.integer(d, "dsf", "n_bins", 256);
    if (cfg.dsf.n_bins < 8) P.fail("dsf.n_bins", "must be at least 8");
    cfg.dsf.omega_max = P.number(d, "dsf", "omega_max_rad_per_us", -1.0);
  }
  const int n = cfg.geometry.n_active();
  if ((n + cfg.dsf.mz) % 2 != 0 || std::abs(cfg.dsf.mz) > n)
    P.fail("dsf.mz", "sector unreachable at this chain length");
}

void parse_thermal(Parser& P, const json& root, ExperimentConfig& cfg) {
  if (!root.contains("thermal")) {
    P.fail("thermal", "required for this scenario");
    return;
  }
  const json& t = root["thermal"];
  if (!t.is_object()) {
    P.fail("thermal", "expected an object");
    return;
  }
  P.check_keys(t, "thermal",
               {"temperatures_rad_per_us", "transverse_field_rad_per_us", "hole_density",
                "n_realizations"});
  cfg.thermal.temperatures = P.numbers(t, "thermal", "temperatures_rad_per_us");
  if (cfg.thermal.temperatures.empty())
    P.fail("thermal.temperatures_rad_per_us", "required and nonempty");
  for (double v : cfg.thermal.temperatures)
    if (!(v > 0)) {
      P.fail("thermal.temperatures_rad_per_us", "temperatures must be positive");
      break;
    }
  if (!std::is_sorted(cfg.thermal.temperatures.begin(), cfg.thermal.temperatures.end()))
    P.fail("thermal.temperatures_rad_per_us", "must be ascending");
  cfg.thermal.transverse_field = P.number(t, "thermal", "transverse_field_rad_per_us", 0.0);
  cfg.thermal.hole_density = P.number(t, "thermal", "hole_density", 0.0);
  if (cfg.thermal.hole_density < 0 || cfg.thermal.hole_density >= 1)
    P.fail("thermal.hole_density", "must lie in [0, 1)");
  cfg.thermal.n_realizations = P.integer(t, "thermal", "n_realizations", 1);
  if (cfg.thermal.n_realizations < 1) P.fail("thermal.n_realizations", "must be at least 1");

  if (cfg.geometry.boundary != lattice::Boundary::PeriodicRing || !cfg.geometry.holes.empty())
    P.fail("geometry", "thermal comparison expects a clean periodic ring");
  if (cfg.geometry.n_sites > 13)
    P.fail("geometry.n_sites", "thermal comparison works in the full space, capped at 13 sites");
  if (cfg.geometry.n_sites % 2 != 0)
    P.fail("geometry.n_sites", "even length needed for the zero-magnetization reference");
}

void parse_disorder(Parser& P, const json& root, ExperimentConfig& cfg) {
  auto& opt = cfg.disorder.options;
  opt.n_sites = cfg.geometry.n_sites;
  if (root.contains("disorder")) {
    const json& d = root["disorder"];
    if (!d.is_object()) {
      P.fail("disorder", "expected an object");
      return;
    }
    P.check_keys(d, "disorder",
                 {"weak_probability", "weak_factor", "n_realizations", "max_pairs_per_distance",
                  "dense_r_max", "n_log_points", "r_max_fraction", "tail_r_min", "tail_r_max"});
    opt.weak_probability = P.number(d, "disorder", "weak_probability", opt.weak_probability);
    opt.weak_factor = P.number(d, "disorder", "weak_factor", opt.weak_factor);
    opt.n_realizations = P.integer(d, "disorder", "n_realizations", opt.n_realizations);
    opt.max_pairs_per_distance =
        P.integer(d, "disorder", "max_pairs_per_distance", opt.max_pairs_per_distance);
    opt.dense_r_max = P.integer(d, "disorder", "dense_r_max", opt.dense_r_max);
    opt.n_log_points = P.integer(d, "disorder", "n_log_points", opt.n_log_points);
    opt.r_max_fraction = P.number(d, "disorder", "r_max_fraction", opt.r_max_fraction);
    cfg.disorder.tail_r_min = P.number(d, "disorder", "tail_r_min", cfg.disorder.tail_r_min);
    cfg.disorder.tail_r_max = P.number(d, "disorder", "tail_r_max", cfg.disorder.tail_r_max);
  }
  if (opt.weak_probability < 0 || opt.weak_probability > 1)
    P.fail("disorder.weak_probability", "must lie in [0, 1]");
  if (!(opt.weak_factor > 0) || opt.weak_factor > 1)
    P.fail("disorder.weak_factor", "must lie in (0, 1]");
  if (opt.n_realizations < 2)
    P.fail("disorder.n_realizations", "at least 2 needed for an error estimate");
  if (opt.max_pairs_per_distance < 1)
    P.fail("disorder.max_pairs_per_distance", "must be at least 1");
  if (opt.dense_r_max < 4) P.fail("disorder.dense_r_max", "must be at least 4");
  if (opt.n_log_points < 0) P.fail("disorder.n_log_points", "must be nonnegative");
  if (!(opt.r_max_fraction > 0) || opt.r_max_fraction > 1)
    P.fail("disorder.r_max_fraction", "must lie in (0, 1]");
  if (!(cfg.disorder.tail_r_min < cfg.disorder.tail_r_max))
    P.fail("disorder.tail_r_min", "tail window must have tail_r_min < tail_r_max");
  if (cfg.geometry.n_sites % 2 != 0 || cfg.geometry.n_sites < 8)
    P.fail("geometry.n_sites", "disorder ensemble needs an even chain of at least 8 sites");
}

}  // namespace

Scenario scenario_from_name(const std::string& name) {
  for (const auto& [n, s] : kScenarioNames)
    if (name == n) return s;
  throw std::invalid_argument("unknown scenario '" + name + "'");
}

std::string scenario_name(Scenario s) {
  for (const auto& [n, v] : kScenarioNames)
    if (v == s) return n;
  return "?";
}

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error([&] {
        std::string msg = "config invalid:";
        for (const auto& e : errors) msg += "\n  - " + e;
        return msg;
      }()),
      errors_(std::move(errors)) {}

ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("config: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"config: top level must be an object"});

  Parser P;
  ExperimentConfig cfg;

  const std::string sname = P.str(root, "config", "scenario", std::nullopt);
  if (!sname.empty()) {
    try {
      cfg.scenario = scenario_from_name(sname);
    } catch (const std::invalid_argument& e) {
      P.fail("scenario", e.what());
    }
  }
  if (!P.errors.empty()) throw ConfigError(std::move(P.errors));

  for (const auto& item : root.items()) {
    const std::string& k = item.key();
    if (k == "scenario" || k == "seed" || k == "out_dir" || k == "workers") continue;
    if (!block_applies(cfg.scenario, k))
      P.fail("config", "unknown or inapplicable key '" + k + "' for scenario " + sname);
  }

  const double seed_raw = P.number(root, "config", "seed", 1.0);
  if (seed_raw < 0 || seed_raw != std::floor(seed_raw))
    P.fail("seed", "expected a nonnegative integer");
  else
    cfg.seed = static_cast<std::uint64_t>(seed_raw);
  cfg.out_dir = P.str(root, "config", "out_dir", std::string("out"));
  cfg.workers = P.integer(root, "config", "workers", 1);
  if (cfg.workers < 1) P.fail("workers", "must be at least 1");

  parse_geometry(P, root, cfg);
  if (cfg.scenario != Scenario::DisorderedChain) parse_coupling(P, root, cfg);

  switch (cfg.scenario) {
    case Scenario::GroundStateCorrelations:
      if (cfg.geometry.n_active() % 2 != 0)
        P.fail("geometry.n_sites", "even atom number needed for the half-filled sector");
      break;
    case Scenario::AdiabaticRamp:
    case Scenario::BackAndForthRamp:
      parse_ramp(P, root, cfg);
      parse_noise(P, root, cfg);
      break;
    case Scenario::Friedel:
      parse_friedel(P, root, cfg);
      parse_ramp(P, root, cfg);
      parse_noise(P, root, cfg);
      break;
    case Scenario::Quench:
      parse_quench(P, root, cfg);
      break;
    case Scenario::Dsf:
      parse_dsf(P, root, cfg);
      break;
    case Scenario::ThermalComparison:
      parse_thermal(P, root, cfg);
      break;
    case Scenario::DisorderedChain:
      parse_disorder(P, root, cfg);
      break;
  }

  if (!P.errors.empty()) throw ConfigError(std::move(P.errors));
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError({"config: cannot open " + path.string()});
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// ----------------------------------------------------------------- digest

namespace {

json geometry_json(const lattice::ChainGeometry& g) {
  json j;
  j["n_sites"] = g.n_sites;
  j["boundary"] = g.boundary == lattice::Boundary::PeriodicRing ? "periodic" : "open";
  if (g.boundary == lattice::Boundary::OpenRing) j["removed_site"] = g.removed_site;
  if (!g.holes.empty()) j["holes"] = g.holes;
  return j;
}

json coupling_json(const lattice::CouplingModel& m) {
  json j;
  j["sign"] = m.sign == lattice::Sign::AFM ? "afm" : "fm";
  j["j_rad_per_us"] = m.j_xy;
  if (std::isinf(m.exponent))
    j["exponent"] = "nn";
  else
    j["exponent"] = m.exponent;
  j["vdw_uu_rad_per_us"] = m.vdw_uu;
  j["vdw_dd_rad_per_us"] = m.vdw_dd;
  j["vdw_ud_rad_per_us"] = m.vdw_ud;
  if (!m.bond_overrides.empty()) {
    json bo = json::array();
    for (const auto& [key, f] : m.bond_overrides) bo.push_back({key.first, key.second, f});
    j["bond_overrides"] = bo;
  }
  return j;
}

json ramp_json(const RampBlock& r) {
  json j;
  j["delta0_rad_per_us"] = r.schedule.delta0;
  j["T_us"] = r.schedule.duration;
  j["alpha"] = r.schedule.alpha;
  j["reverse"] = r.schedule.reverse;
  if (r.alternating)
    j["sublattice"] = "alternating";
  else
    j["sublattice"] = r.explicit_sites;
  j["checkpoints_us"] = r.schedule.checkpoints;
  j["n_trajectories"] = r.n_trajectories;
  return j;
}

json noise_json(const protocol::NoiseModel& n) {
  json j;
  j["p_init"] = n.p_init;
  j["gamma_per_us"] = n.gamma;
  j["eps_up"] = n.eps_up;
  j["eps_dn"] = n.eps_dn;
  j["holes_enabled"] = n.holes_enabled;
  j["decay_enabled"] = n.decay_enabled;
  j["detection_enabled"] = n.detection_enabled;
  return j;
}

}  // namespace

std::string config_digest(const ExperimentConfig& cfg) {
  json j;
  j["scenario"] = scenario_name(cfg.scenario);
  j["seed"] = cfg.seed;
  j["geometry"] = geometry_json(cfg.geometry);
  switch (cfg.scenario) {
    case Scenario::GroundStateCorrelations:
      j["coupling"] = coupling_json(cfg.coupling);
      break;
    case Scenario::AdiabaticRamp:
    case Scenario::BackAndForthRamp:
      j["coupling"] = coupling_json(cfg.coupling);
      j["ramp"] = ramp_json(cfg.ramp);
      j["noise"] = noise_json(cfg.noise);
      break;
    case Scenario::Friedel:
      j["coupling"] = coupling_json(cfg.coupling);
      j["friedel"] = {{"Mz", cfg.friedel.mz},
                      {"mode", cfg.friedel.mode == protocol::FriedelMode::DirectGroundState
                                   ? "direct"
                                   : "adiabatic_ramp"}};
      if (cfg.friedel.mode == protocol::FriedelMode::AdiabaticRamp) {
        j["ramp"] = ramp_json(cfg.ramp);
        j["noise"] = noise_json(cfg.noise);
      }
      break;
    case Scenario::Quench:
      j["coupling"] = coupling_json(cfg.coupling);
      j["quench"] = {{"initial", cfg.quench.initial == protocol::QuenchInitial::CssY
                                     ? "css_y"
                                     : "staggered_css_y"},
                     {"times_us", cfg.quench.times}};
      break;
    case Scenario::Dsf:
      j["coupling"] = coupling_json(cfg.coupling);
      j["dsf"] = {{"mz", cfg.dsf.mz},
                  {"eta_rad_per_us", cfg.dsf.eta},
                  {"n_bins", cfg.dsf.n_bins},
                  {"omega_max_rad_per_us", cfg.dsf.omega_max}};
      break;
    case Scenario::ThermalComparison:
      j["coupling"] = coupling_json(cfg.coupling);
      j["thermal"] = {{"temperatures_rad_per_us", cfg.thermal.temperatures},
                      {"transverse_field_rad_per_us", cfg.thermal.transverse_field},
                      {"hole_density", cfg.thermal.hole_density},
                      {"n_realizations", cfg.thermal.n_realizations}};
      break;
    case Scenario::DisorderedChain: {
      const auto& o = cfg.disorder.options;
      j["disorder"] = {{"weak_probability", o.weak_probability},
                       {"weak_factor", o.weak_factor},
                       {"n_realizations", o.n_realizations},
                       {"max_pairs_per_distance", o.max_pairs_per_distance},
                       {"dense_r_max", o.dense_r_max},
                       {"n_log_points", o.n_log_points},
                       {"r_max_fraction", o.r_max_fraction},
                       {"tail_r_min", cfg.disorder.tail_r_min},
                       {"tail_r_max", cfg.disorder.tail_r_max}};
      break;
    }
  }
  return io::hex64(io::fnv1a64(j.dump()));
}

// -------------------------------------------------------------- task pool

TaskPool::TaskPool(int workers) : workers_(std::max(1, workers)) {}

void TaskPool::run(int n_tasks, const std::function<void(int)>& task) {
  if (n_tasks <= 0) return;
  const int nw = std::min(workers_, n_tasks);
  if (nw <= 1) {
    for (int i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        task(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(nw);
  for (int w = 0; w < nw; ++w) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ------------------------------------------------------- scenario runners

namespace {

struct SectorSolve {
  std::shared_ptr<const hilbert::SectorBasis> basis;
  lattice::SqueezeResult squeezed;
  exact::LanczosResult extremal;
};

SectorSolve solve_sector(const ExperimentConfig& cfg, int mz, Emitter& em) {
  SectorSolve out;
  const auto mats = lattice::build_couplings(cfg.geometry, cfg.coupling);
  out.squeezed = lattice::squeeze_holes(cfg.geometry, mats);
  const int n = out.squeezed.geom.n_sites;
  out.basis = std::make_shared<const hilbert::SectorBasis>(n, (n + mz) / 2);
  hilbert::SectorHamiltonian ham(out.basis, out.squeezed.matrices.xy, out.squeezed.matrices.zz,
                                 out.squeezed.matrices.field_z);
  std::cerr << "[" << scenario_name(cfg.scenario) << "] sector n=" << n << " mz=" << mz
            << " dim=" << out.basis->size() << "\n";
  exact::LanczosOptions opts;
  opts.seed = cfg.seed;
  const auto which = cfg.coupling.sign == lattice::Sign::AFM ? exact::Which::Highest
                                                             : exact::Which::Lowest;
  out.extremal = exact::lanczos_extremal(ham, which, opts);
  if (!out.extremal.converged)
    em.warn("exact: extremal state not converged, residual " +
            std::to_string(out.extremal.residual));
  return out;
}

// NaN-filled matrices on the original ring positions
void scatter_observables(const SectorSolve& s, int n_pos, Eigen::MatrixXd& cx,
                         Eigen::MatrixXd& cz_conn, Eigen::VectorXd& sz_out) {
  const Eigen::VectorXd sz = hilbert::observable_sz(*s.basis, s.extremal.state);
  const Eigen::MatrixXd czz = hilbert::observable_czz(*s.basis, s.extremal.state);
  const Eigen::MatrixXd cxx = hilbert::observable_cxx(*s.basis, s.extremal.state);
  const Eigen::MatrixXd conn = czz - sz * sz.transpose();
  cx.setConstant(n_pos, n_pos, kNan);
  cz_conn.setConstant(n_pos, n_pos, kNan);
  sz_out.setConstant(n_pos, kNan);
  const int n = static_cast<int>(s.squeezed.old_index.size());
  for (int a = 0; a < n; ++a) {
    sz_out[s.squeezed.old_index[a]] = sz[a];
    for (int b = 0; b < n; ++b) {
      cx(s.squeezed.old_index[a], s.squeezed.old_index[b]) = cxx(a, b);
      cz_conn(s.squeezed.old_index[a], s.squeezed.old_index[b]) = conn(a, b);
    }
  }
}

std::vector<double> default_cutoffs(const analysis::CorrelationProfile& prof) {
  const int d_max = prof.d.empty() ? 0 : prof.d.back();
  std::vector<double> out;
  for (int rc = 0; rc <= 5 && rc + 6 <= d_max; ++rc) out.push_back(rc);
  if (out.size() < 2) out = {0.0, 1.0};
  return out;
}

void run_gs_scenario(const ExperimentConfig& cfg, Emitter& em) {
  auto solve = solve_sector(cfg, 0, em);
  const int n_pos = cfg.geometry.n_sites;
  Eigen::MatrixXd cx, cz;
  Eigen::VectorXd sz;
  scatter_observables(solve, n_pos, cx, cz, sz);

  const auto prof_x = analysis::bin_correlations(cx, cfg.geometry, "x");
  const auto prof_z = analysis::bin_correlations(cz, cfg.geometry, "z");
  write_profile_csv(em, "gs_cx.csv", prof_x);
  write_profile_csv(em, "gs_cz.csv", prof_z);

  const bool stagger = cfg.coupling.sign == lattice::Sign::AFM;
  const int n_ring = cfg.geometry.n_sites;
  const auto cutoffs = default_cutoffs(prof_x);

  const auto scan_x = analysis::cutoff_scan(
      prof_x,
      [&](const analysis::CorrelationProfile& p, double rc) {
        return analysis::fit_cx(p, n_ring, rc, stagger);
      },
      cutoffs);
  const double rc_x = scan_x.has_selection() ? scan_x.selected_rc() : cutoffs.front();
  if (!scan_x.has_selection()) em.warn("analysis: no stable cutoff for the x-correlation fit");
  const auto fx = try_fit(em, "x-correlation fit",
                          [&] { return analysis::fit_cx(prof_x, n_ring, rc_x, stagger); });
  if (!fx.converged && !fx.names.empty()) em.warn("analysis: x-correlation fit not converged");

  const auto scan_z = analysis::cutoff_scan(
      prof_z,
      [&](const analysis::CorrelationProfile& p, double rc) {
        return analysis::fit_cz(p, n_ring, rc);
      },
      cutoffs);
  const double rc_z = scan_z.has_selection() ? scan_z.selected_rc() : cutoffs.front();
  if (!scan_z.has_selection()) em.warn("analysis: no stable cutoff for the z-correlation fit");
  const auto fz = try_fit(em, "z-correlation fit",
                          [&] { return analysis::fit_cz(prof_z, n_ring, rc_z); });
  if (!fz.converged && !fz.names.empty()) em.warn("analysis: z-correlation fit not converged");

  json jx = fit_json(fx);
  jx["cutoff_scan"] = scan_json(scan_x);
  em.write_json("fit_cx.json", jx);
  json jz = fit_json(fz);
  jz["cutoff_scan"] = scan_json(scan_z);
  em.write_json("fit_cz.json", jz);

  json summary;
  summary["energy_rad_per_us"] = solve.extremal.energy;
  summary["residual"] = solve.extremal.residual;
  summary["matvecs"] = solve.extremal.iterations;
  summary["converged"] = solve.extremal.converged;
  summary["dim"] = solve.basis->size();
  summary["n_active"] = cfg.geometry.n_active();
  summary["which"] = cfg.coupling.sign == lattice::Sign::AFM ? "highest" : "lowest";
  em.write_json("gs_summary.json", summary);

  Series sx{"|C^x|", prof_x.r, {}};
  for (double v : prof_x.mean) sx.y.push_back(std::abs(v));
  Series szr{"|C^z|", prof_z.r, {}};
  for (double v : prof_z.mean) szr.y.push_back(std::abs(v));
  em.write_text("gs_correlations.svg",
                svg_line_plot("ground-state correlations", "r (sites)", "|C(r)|", {sx, szr},
                              true, true));
}

void write_checkpoints_csv(Emitter& em, const std::string& name,
                           const protocol::RampResult& res) {
  io::CsvWriter w(em.path(name));
  w.comment("contrast = (mag_rest - mag_addressed) / 2");
  w.header({"t_us", "delta_rad_per_us", "mag_addressed", "mag_addressed_err", "mag_rest",
            "mag_rest_err", "contrast", "energy_rad_per_us", "energy_err"});
  for (const auto& ck : res.checkpoints)
    w.row({ck.time, ck.delta, ck.mag_addressed, ck.mag_addressed_err, ck.mag_rest,
           ck.mag_rest_err, 0.5 * (ck.mag_rest - ck.mag_addressed), ck.energy, ck.energy_err});
  em.note(name);
}

void run_ramp_scenario(const ExperimentConfig& cfg, Emitter& em) {
  const bool backforth = cfg.scenario == Scenario::BackAndForthRamp;
  const std::string prefix = backforth ? "backforth" : "ramp";

  protocol::RampSchedule sched = cfg.ramp.schedule;
  sched.addressed = cfg.ramp.alternating ? protocol::alternating_sublattice(cfg.geometry)
                                         : cfg.ramp.explicit_sites;
  if (sched.checkpoints.empty()) {
    const int segments = backforth ? 24 : 12;
    for (int k = 0; k <= segments; ++k)
      sched.checkpoints.push_back(sched.total_duration() * k / segments);
  }

  std::cerr << "[" << prefix << "] n=" << cfg.geometry.n_active()
            << " trajectories=" << cfg.ramp.n_trajectories << "\n";
  const auto res = protocol::run_ramp(cfg.geometry, cfg.coupling, sched, cfg.noise,
                                      cfg.ramp.n_trajectories, cfg.seed);
  write_checkpoints_csv(em, prefix + "_checkpoints.csv", res);

  const auto& last = res.checkpoints.back();
  const auto prof_x = analysis::bin_correlations(last.cxx, cfg.geometry, "x");
  const auto prof_z = analysis::bin_correlations(last.czz_connected, cfg.geometry, "z");
  write_profile_csv(em, prefix + "_cx.csv", prof_x);
  write_profile_csv(em, prefix + "_cz.csv", prof_z);

  json summary;
  summary["n_trajectories"] = res.n_trajectories;
  double holes = 0, jumps = 0;
  for (const auto& tr : res.trajectories) {
    holes += static_cast<double>(tr.holes.size());
    jumps += static_cast<double>(tr.jump_times.size());
  }
  summary["mean_holes"] = holes / std::max(1, res.n_trajectories);
  summary["mean_jumps"] = jumps / std::max(1, res.n_trajectories);
  summary["final_energy_rad_per_us"] = last.energy;
  summary["final_contrast"] = 0.5 * (last.mag_rest - last.mag_addressed);
  const auto& first = res.checkpoints.front();
  summary["initial_contrast"] = 0.5 * (first.mag_rest - first.mag_addressed);

  // fit only when the chain offers enough independent distances
  if (!backforth && prof_x.d.size() >= 6) {
    const bool stagger = cfg.coupling.sign == lattice::Sign::AFM;
    const auto fit = try_fit(em, "final-state x-correlation fit", [&] {
      return analysis::fit_cx(prof_x, cfg.geometry.n_sites, 0.0, stagger);
    });
    if (!fit.converged && !fit.names.empty())
      em.warn("analysis: final-state x-correlation fit not converged");
    em.write_json(prefix + "_fit_cx.json", fit_json(fit));
  }
  em.write_json(prefix + "_summary.json", summary);

  Series ma{"addressed", {}, {}}, mr{"rest", {}, {}};
  for (const auto& ck : res.checkpoints) {
    ma.x.push_back(ck.time);
    ma.y.push_back(ck.mag_addressed);
    mr.x.push_back(ck.time);
    mr.y.push_back(ck.mag_rest);
  }
  em.write_text(prefix + "_magnetization.svg",
                svg_line_plot("sublattice magnetization", "t (us)", "<sz>", {ma, mr}));
}

void run_friedel_scenario(const ExperimentConfig& cfg, Emitter& em) {
  protocol::RampSchedule sched = cfg.ramp.schedule;
  const auto fr =
      protocol::run_friedel(cfg.geometry, cfg.coupling, cfg.friedel.mz, sched, cfg.friedel.mode,
                            cfg.noise, cfg.ramp.n_trajectories, cfg.seed);

  // walk the open chain in order, starting just past the removed position
  const int n_pos = cfg.geometry.n_sites;
  const int start = (cfg.geometry.removed_site + 1) % n_pos;
  std::vector<int> chain;
  for (int k = 0; k < n_pos; ++k) {
    const int site = (start + k) % n_pos;
    if (!cfg.geometry.is_vacant(site)) chain.push_back(site);
  }
  const int n = static_cast<int>(chain.size());

  Eigen::VectorXd signal(n);
  io::CsvWriter w(em.path("friedel_profile.csv"));
  w.comment("chain_pos runs along the open chain; signal = sz_obc - sz_pbc");
  w.header({"chain_pos", "ring_site", "sz_obc", "sz_pbc", "signal"});
  int n_missing = 0;
  for (int k = 0; k < n; ++k) {
    signal[k] = fr.signal[chain[k]];
    if (!std::isfinite(signal[k])) ++n_missing;
    w.row({static_cast<double>(k), static_cast<double>(chain[k]), fr.sz_obc[chain[k]],
           fr.sz_pbc[chain[k]], signal[k]});
  }
  em.note("friedel_profile.csv");
  if (n_missing > 0)
    em.warn("protocol: " + std::to_string(n_missing) +
            " sites lost in every trajectory; their signal enters the spectrum as 0");

  Eigen::VectorXd dense = signal;
  for (int k = 0; k < n; ++k)
    if (!std::isfinite(dense[k])) dense[k] = 0;
  const auto fft = analysis::friedel_fft(dense);
  {
    io::CsvWriter fw(em.path("friedel_fft.csv"));
    fw.header({"q", "amplitude"});
    for (Eigen::Index m = 0; m < fft.q.size(); ++m) fw.row({fft.q[m], fft.amplitude[m]});
    em.note("friedel_fft.csv");
  }
  if (fft.flat) em.warn("analysis: oscillation spectrum is flat");

  const auto fit_free = try_fit(em, "free-wavevector oscillation fit", [&] {
    return analysis::fit_friedel(signal, {}, n, cfg.friedel.mz, false);
  });
  const auto fit_pinned = try_fit(em, "pinned-wavevector oscillation fit", [&] {
    return analysis::fit_friedel(signal, {}, n, cfg.friedel.mz, true);
  });
  if (!fit_free.converged && !fit_free.names.empty())
    em.warn("analysis: free-wavevector oscillation fit not converged");

  const double kf2 = analysis::friedel_wavevector(cfg.friedel.mz, n);
  const int expected_index = (n - cfg.friedel.mz) / 2;
  json j;
  j["free"] = fit_json(fit_free);
  j["pinned"] = fit_json(fit_pinned);
  j["kf2_expected"] = kf2;
  j["fft_peak_q"] = fft.peak_q;
  j["fft_peak_index"] = fft.peak_index;
  j["fft_expected_index"] = expected_index;
  j["fft_within_one_bin"] = std::abs(fft.peak_index - expected_index) <= 1;
  j["fft_flat"] = fft.flat;
  j["n_atoms"] = n;
  j["Mz"] = cfg.friedel.mz;
  em.write_json("fit_friedel.json", j);

  Series sig{"signal", {}, {}}, model{"fit", {}, {}};
  for (int k = 0; k < n; ++k) {
    sig.x.push_back(k);
    sig.y.push_back(signal[k]);
  }
  if (fit_free.converged) {
    const double a = fit_free.value("A"), q = fit_free.value("kf2"), kk = fit_free.value("K");
    for (int k = 0; k < n; ++k) {
      const double x = k - (n - 1) / 2;
      model.x.push_back(k);
      model.y.push_back(a * std::cos(q * x) *
                        std::pow((n / M_PI) * std::cos(M_PI * x / n), -kk));
    }
  }
  em.write_text("friedel_signal.svg",
                svg_line_plot("boundary oscillations", "chain position", "signal",
                              fit_free.converged ? std::vector<Series>{sig, model}
                                                 : std::vector<Series>{sig}));
}

void run_quench_scenario(const ExperimentConfig& cfg, Emitter& em) {
  std::cerr << "[quench] n=" << cfg.geometry.n_active()
            << " times=" << cfg.quench.times.size() << "\n";
  const auto grid =
      protocol::run_quench(cfg.geometry, cfg.coupling, cfg.quench.initial, cfg.quench.times);

  {
    io::CsvWriter w(em.path("quench_grid.csv"));
    w.comment("connected C^z by ring separation; rows ordered by time then distance");
    w.header({"t_us", "d_sites", "czz", "stderr"});
    for (std::size_t ti = 0; ti < grid.times.size(); ++ti)
      for (std::size_t di = 0; di < grid.distances.size(); ++di)
        w.row({grid.times[ti], static_cast<double>(grid.distances[di]),
               grid.czz(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(di)),
               grid.czz_err(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(di))});
    em.note("quench_grid.csv");
  }
  {
    io::CsvWriter w(em.path("quench_varmz.csv"));
    w.comment("sum of the connected matrix; constant in time for a conserved magnetization");
    w.header({"t_us", "var_mz"});
    for (std::size_t ti = 0; ti < grid.times.size(); ++ti)
      w.row({grid.times[ti], grid.var_mz[static_cast<Eigen::Index>(ti)]});
    em.note("quench_varmz.csv");
  }

  const auto fit = try_fit(em, "light-cone fit", [&] { return analysis::fit_lightcone(grid); });
  if (!fit.converged && !fit.names.empty())
    em.warn("analysis: light-cone fit not converged (" + fit.message + ")");
  json j = fit_json(fit);
  j["vg_over_2aj"] = fit.converged ? fit.value("vg") / (2.0 * cfg.coupling.j_xy) : kNan;
  j["j_rad_per_us"] = cfg.coupling.j_xy;
  em.write_json("fit_vg.json", j);

  std::vector<double> ds;
  for (int d : grid.distances) ds.push_back(d);
  em.write_text("quench_lightcone.svg",
                svg_heatmap("connected C^z(d, t)", "t (us)", "d (sites)", grid.times, ds,
                            grid.czz.transpose()));
}

void run_dsf_scenario(const ExperimentConfig& cfg, Emitter& em) {
  const auto mats = lattice::build_couplings(cfg.geometry, cfg.coupling);
  auto sq = lattice::squeeze_holes(cfg.geometry, mats);
  const int n = sq.geom.n_sites;
  auto basis = std::make_shared<const hilbert::SectorBasis>(n, (n + cfg.dsf.mz) / 2);
  if (basis->size() > exact::kDenseDimCap)
    throw std::runtime_error("dsf: sector dimension " + std::to_string(basis->size()) +
                             " exceeds the dense solver cap");
  hilbert::SectorHamiltonian ham(basis, sq.matrices.xy, sq.matrices.zz, sq.matrices.field_z);
  std::cerr << "[dsf] dense sector dim=" << basis->size() << "\n";
  const auto spectrum = exact::full_spectrum(ham);

  hilbert::SiteMap map = hilbert::SiteMap::for_geometry(cfg.geometry);
  exact::DsfOptions opts;
  opts.eta = cfg.dsf.eta;
  opts.n_bins = cfg.dsf.n_bins;
  opts.omega_max = cfg.dsf.omega_max;
  opts.which = cfg.coupling.sign == lattice::Sign::AFM ? exact::Which::Highest
                                                       : exact::Which::Lowest;
  const auto grid =
      exact::dynamical_structure_factor(spectrum, *basis, map, cfg.geometry.n_sites, opts);

  {
    io::CsvWriter w(em.path("dsf.csv"));
    w.comment("intensity normalized to unit peak; peak_raw restores absolute units");
    w.header({"q_index", "q", "omega_rad_per_us", "intensity"});
    for (std::size_t qi = 0; qi < grid.q.size(); ++qi)
      for (Eigen::Index b = 0; b < grid.omega_centers.size(); ++b)
        w.row({static_cast<double>(grid.q_index[qi]), grid.q[qi], grid.omega_centers[b],
               grid.intensity(b, static_cast<Eigen::Index>(qi))});
    em.note("dsf.csv");
  }
  {
    io::CsvWriter w(em.path("dsf_static.csv"));
    w.header({"q_index", "q", "total_weight"});
    for (std::size_t qi = 0; qi < grid.q.size(); ++qi)
      w.row({static_cast<double>(grid.q_index[qi]), grid.q[qi], grid.static_structure[qi]});
    em.note("dsf_static.csv");
  }

  json summary;
  summary["dim"] = basis->size();
  summary["mz"] = cfg.dsf.mz;
  summary["which"] = opts.which == exact::Which::Highest ? "highest" : "lowest";
  summary["reference_energy_rad_per_us"] = opts.which == exact::Which::Highest
                                               ? spectrum.energies[spectrum.energies.size() - 1]
                                               : spectrum.energies[0];
  summary["peak_raw"] = grid.peak_raw;
  summary["eta_rad_per_us"] = grid.eta;
  em.write_json("dsf_summary.json", summary);

  std::vector<double> omegas(grid.omega_centers.data(),
                             grid.omega_centers.data() + grid.omega_centers.size());
  em.write_text("dsf_heatmap.svg", svg_heatmap("longitudinal structure factor", "q (index)",
                                               "omega (rad/us)",
                                               std::vector<double>(grid.q.begin(), grid.q.end()),
                                               omegas, grid.intensity.transpose()));
}

void run_disorder_scenario(const ExperimentConfig& cfg, Emitter& em) {
  const int n_real = cfg.disorder.options.n_realizations;
  std::cerr << "[disorder] n=" << cfg.disorder.options.n_sites << " realizations=" << n_real
            << "\n";

  // one realization per task slot; combined here so the pool stays in charge
  std::vector<freefermion::DisorderProfile> parts(n_real);
  TaskPool pool(cfg.workers);
  pool.run(n_real, [&](int slot) {
    freefermion::DisorderOptions o = cfg.disorder.options;
    o.n_realizations = 1;
    o.seed = rng::substream(cfg.seed, static_cast<std::uint64_t>(slot))();
    parts[static_cast<std::size_t>(slot)] = freefermion::disorder_ensemble(o);
  });

  const auto& grid = parts.front();
  const std::size_t nr = grid.r.size();
  analysis::CorrelationProfile prof;
  prof.basis = "x";
  prof.n_samples = n_real;
  std::vector<double> cz_mean(nr), cz_err(nr);
  double min_rcond = 1.0;
  for (std::size_t i = 0; i < nr; ++i) {
    stats::WelfordScalar wx, wz;
    for (const auto& part : parts) {
      wx.add(part.cx[i]);
      wz.add(part.cz[i]);
    }
    prof.r.push_back(grid.r[i]);
    prof.d.push_back(grid.r[i]);
    prof.mean.push_back(wx.mean());
    prof.err.push_back(wx.stderror());
    prof.n_pairs.push_back(grid.n_pairs[i]);
    cz_mean[i] = wz.mean();
    cz_err[i] = wz.stderror();
  }
  for (const auto& part : parts) min_rcond = std::min(min_rcond, part.min_rcond);

  {
    io::CsvWriter w(em.path("disorder_profile.csv"));
    w.comment("disorder-averaged correlations; stderr over realizations");
    w.header({"r", "cx", "cx_err", "cz", "cz_err", "n_pairs"});
    for (std::size_t i = 0; i < nr; ++i)
      w.row({prof.r[i], prof.mean[i], prof.err[i], cz_mean[i], cz_err[i],
             static_cast<double>(prof.n_pairs[i])});
    em.note("disorder_profile.csv");
  }

  const auto scan = analysis::cutoff_scan(
      prof,
      [&](const analysis::CorrelationProfile& p, double rc) {
        return analysis::fit_cx(p, 0, rc, false);
      },
      {2.0, 3.0, 4.0, 5.0});
  const double rc = scan.has_selection() ? scan.selected_rc() : 2.0;
  const auto fit_k =
      try_fit(em, "disorder x-correlation fit", [&] { return analysis::fit_cx(prof, 0, rc, false); });
  json jk = fit_json(fit_k);
  jk["cutoff_scan"] = scan_json(scan);
  jk["min_rcond"] = min_rcond;
  em.write_json("disorder_fit_cx.json", jk);

  const auto tail = try_fit(em, "tail power-law fit", [&] {
    return analysis::fit_power_law(prof, cfg.disorder.tail_r_min, cfg.disorder.tail_r_max);
  });
  const auto full = try_fit(em, "full-range power-law fit", [&] {
    return analysis::fit_power_law(prof, 2.0, cfg.disorder.options.dense_r_max);
  });
  if (!tail.converged && !tail.names.empty()) em.warn("analysis: tail power-law fit failed");
  json jt;
  jt["tail"] = fit_json(tail);
  jt["full_range"] = fit_json(full);
  if (full.dof > 0) jt["full_range"]["p_value"] = gsl_cdf_chisq_Q(full.chi2, full.dof);
  em.write_json("fit_tail.json", jt);

  Series sx{"cx", prof.r, prof.mean};
  em.write_text("disorder_profile.svg",
                svg_line_plot("disorder-averaged C^x", "r (sites)", "C^x(r)", {sx}, true, true));
}

void run_thermal_scenario(const ExperimentConfig& cfg, Emitter& em) {
  const auto mats = lattice::build_couplings(cfg.geometry, cfg.coupling);
  const auto& temps = cfg.thermal.temperatures;
  std::cerr << "[thermal] n=" << cfg.geometry.n_sites << " temperatures=" << temps.size()
            << "\n";

  exact::ThermalOptions topts;
  topts.transverse_field = cfg.thermal.transverse_field;
  topts.which = cfg.coupling.sign == lattice::Sign::AFM ? exact::Which::Highest
                                                        : exact::Which::Lowest;
  topts.hole_density = cfg.thermal.hole_density;
  topts.n_realizations = cfg.thermal.n_realizations;
  topts.seed = cfg.seed;  // same hole ensemble at every temperature

  std::vector<exact::ThermalResult> results(temps.size());
  TaskPool pool(cfg.workers);
  pool.run(static_cast<int>(temps.size()), [&](int slot) {
    results[static_cast<std::size_t>(slot)] = exact::thermal_observables(
        mats.xy, mats.zz, mats.field_z, temps[static_cast<std::size_t>(slot)], topts);
  });

  auto gs = solve_sector(cfg, 0, em);
  Eigen::MatrixXd gs_cx, gs_cz;
  Eigen::VectorXd gs_sz;
  scatter_observables(gs, cfg.geometry.n_sites, gs_cx, gs_cz, gs_sz);
  const auto gs_prof_x = analysis::bin_correlations(gs_cx, cfg.geometry, "x");
  const auto gs_prof_z = analysis::bin_correlations(gs_cz, cfg.geometry, "z");
  write_profile_csv(em, "thermal_gs_cx.csv", gs_prof_x);
  write_profile_csv(em, "thermal_gs_cz.csv", gs_prof_z);

  std::vector<Series> curves;
  Series gs_curve{"extremal state", gs_prof_x.r, {}};
  for (double v : gs_prof_x.mean) gs_curve.y.push_back(std::abs(v));
  curves.push_back(gs_curve);

  json summary;
  summary["energies_rad_per_us"] = json::array();
  {
    io::CsvWriter w(em.path("thermal_profiles.csv"));
    w.comment("connected correlations per temperature, binned by ring separation");
    w.header({"temperature_rad_per_us", "r_chord", "d_sites", "cx", "cz"});
    for (std::size_t ti = 0; ti < temps.size(); ++ti) {
      const auto px = analysis::bin_correlations(results[ti].cxx, cfg.geometry, "x");
      const auto pz = analysis::bin_correlations(results[ti].czz, cfg.geometry, "z");
      for (std::size_t i = 0; i < px.r.size(); ++i)
        w.row({temps[ti], px.r[i], static_cast<double>(px.d[i]), px.mean[i],
               i < pz.mean.size() ? pz.mean[i] : kNan});
      Series c{"T=" + io::CsvWriter::format(temps[ti]), px.r, {}};
      for (double v : px.mean) c.y.push_back(std::abs(v));
      curves.push_back(std::move(c));
      summary["energies_rad_per_us"].push_back(results[ti].energy);
    }
    em.note("thermal_profiles.csv");
  }
  summary["temperatures_rad_per_us"] = temps;
  summary["n_realizations"] = cfg.thermal.n_realizations;
  summary["gs_energy_rad_per_us"] = gs.extremal.energy;
  em.write_json("thermal_summary.json", summary);

  em.write_text("thermal_cx.svg", svg_line_plot("thermal vs extremal-state C^x", "r (sites)",
                                                "|C^x(r)|", curves, false, true));
}

}  // namespace

ResultManifest run_scenario(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  std::filesystem::create_directories(cfg.out_dir);
  Emitter em;
  em.dir = cfg.out_dir;

  switch (cfg.scenario) {
    case Scenario::GroundStateCorrelations:
      run_gs_scenario(cfg, em);
      break;
    case Scenario::AdiabaticRamp:
    case Scenario::BackAndForthRamp:
      run_ramp_scenario(cfg, em);
      break;
    case Scenario::Friedel:
      run_friedel_scenario(cfg, em);
      break;
    case Scenario::Quench:
      run_quench_scenario(cfg, em);
      break;
    case Scenario::Dsf:
      run_dsf_scenario(cfg, em);
      break;
    case Scenario::DisorderedChain:
      run_disorder_scenario(cfg, em);
      break;
    case Scenario::ThermalComparison:
      run_thermal_scenario(cfg, em);
      break;
  }

  ResultManifest man;
  man.tool_version = kToolVersion;
  man.scenario = scenario_name(cfg.scenario);
  man.config_digest = config_digest(cfg);
  man.seed = cfg.seed;
  man.workers = cfg.workers;
  man.warnings = em.warnings;
  man.exit_code = em.warnings.empty() ? 0 : 2;
  em.finalize_entries();
  std::sort(em.files.begin(), em.files.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.name < b.name; });
  man.files = em.files;
  man.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json j;
  j["tool_version"] = man.tool_version;
  j["scenario"] = man.scenario;
  j["config_digest"] = man.config_digest;
  j["seed"] = man.seed;
  j["workers"] = man.workers;
  j["wall_seconds"] = man.wall_seconds;
  j["exit_code"] = man.exit_code;
  j["warnings"] = man.warnings;
  j["files"] = json::array();
  for (const auto& f : man.files)
    j["files"].push_back({{"name", f.name}, {"fnv1a64", f.checksum}, {"bytes", f.bytes}});
  std::ofstream out(std::filesystem::path(cfg.out_dir) / "manifest.json", std::ios::binary);
  out << j.dump(2) << "\n";
  return man;
}

}  // namespace tll::harness
