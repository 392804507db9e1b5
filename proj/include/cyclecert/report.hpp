#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclecert/attraction.hpp"
#include "cyclecert/constants.hpp"
#include "cyclecert/errors.hpp"
#include "cyclecert/euler.hpp"
#include "cyclecert/existence.hpp"
#include "cyclecert/sync_error.hpp"
#include "cyclecert/tube.hpp"

namespace cyclecert {

using Json = nlohmann::json;

inline Json to_json(const Vector& v) {
  Json out = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) out.push_back(v[k]);
  return out;
}

inline Json to_json(const Params& p) {
  Json out = Json::object();
  for (const auto& [k, v] : p) out[k] = v;
  return out;
}

inline Json to_json(const GlobalConstants& k) {
  return {{"L", k.L},         {"M_f", k.M_f},   {"M_C", k.M_C},       {"m", k.m},
          {"max_M_tilde", k.max_M_tilde},      {"a", k.a},           {"b", k.b},
          {"eta", k.eta},     {"T_lo", k.T_lo}, {"T_hi", k.T_hi},     {"R_prime", k.R_prime},
          {"provenance", k.provenance}};
}

inline Json to_json(const PassSummary& p) {
  return {{"pass", p.pass},         {"delta_end", p.delta_end},   {"delta_min", p.delta_min},
          {"delta_max", p.delta_max}, {"a_min", p.a_min},         {"b_max", p.b_max},
          {"lambda_min", p.lambda_min}, {"lambda_max", p.lambda_max}};
}

inline Json tube_summary(const Tube& t) {
  double smin = std::numeric_limits<double>::infinity(), smax = -smin, ssum = 0.0;
  std::size_t contracting = 0;
  for (const auto& s : t.segments) {
    smin = std::min(smin, s.sigma);
    smax = std::max(smax, s.sigma);
    ssum += s.sigma;
    if (s.branch == SigmaBranch::kContracting) ++contracting;
  }
  Json passes = Json::array();
  for (const auto& p : t.passes) passes.push_back(to_json(p));
  return {{"N1", t.N1},
          {"R1", t.R1},
          {"delta_end", t.delta_end()},
          {"delta_min", t.delta_min()},
          {"delta_max", t.delta_max()},
          {"exponent", t.exponent(t.N1)},
          {"sigma_stats",
           {{"min", smin},
            {"max", smax},
            {"mean", ssum / static_cast<double>(t.segments.size())},
            {"contracting_steps", contracting},
            {"regularized_steps", t.segments.size() - contracting}}},
          {"min_alignment", t.min_alignment},
          {"passes", passes}};
}

inline Json to_json(const ExistenceCertificate& c) {
  Json out = {{"kind", "existence"},
              {"system", c.system},
              {"params", to_json(c.params)},
              {"x0", to_json(c.x0)},
              {"h", c.h},
              {"delta0", c.delta0},
              {"gamma", c.gamma},
              {"verdict", c.certified ? "certified" : "failed"},
              {"reason", c.reason},
              {"message", c.message}};
  Json cond = Json::object();
  if (c.step) {
    cond["eq_h"] = {{"min_margin", c.step->min_margin},
                    {"argmin_i", c.step->argmin},
                    {"max_rhs", c.step->max_rhs},
                    {"holds", c.step->holds}};
  }
  if (c.inclusion) {
    const auto& in = *c.inclusion;
    cond["eq_new"] = {{"distance", in.distance},
                      {"delta_R1", in.delta_R1},
                      {"lhs", in.lhs},
                      {"rhs", in.delta0},
                      {"holds", in.holds},
                      {"geometric_check",
                       {{"holds", in.geometric.holds},
                        {"points_checked", in.geometric.points_checked},
                        {"slices_empty", in.geometric.slices_empty},
                        {"max_distance", in.geometric.max_distance}}}};
  }
  if (c.eta) {
    cond["eta"] = {{"eta", c.eta->eta},
                   {"established", c.eta->established},
                   {"T_lo", c.eta->T_lo},
                   {"T_hi", c.eta->T_hi},
                   {"R_prime", c.eta->R_prime},
                   {"fine_step", c.eta->h_fine}};
  }
  out["conditions"] = cond;
  if (c.first_return)
    out["first_return"] = {{"R1", c.first_return->R}, {"N1", c.first_return->N},
                           {"point", to_json(c.first_return->point)}};
  if (c.constants) out["constants"] = to_json(*c.constants);
  if (c.tube) {
    out["tube_summary"] = tube_summary(*c.tube);
    out["mu_perp_range"] = {c.mu_perp_min, c.mu_perp_max};
    out["alignment_warning"] = c.alignment_warning;
  }
  return out;
}

inline Json to_json(const AttractionCertificate& a, const ExistenceCertificate& e) {
  Json samples = Json::array();
  for (const auto& s : a.samples)
    samples.push_back({{"z", to_json(s.z)}, {"K0", s.K0}, {"Kh", s.Kh}, {"N1", s.N1}, {"R1", s.R1}});
  Json out = {{"kind", "attraction"},
              {"system", e.system},
              {"params", to_json(e.params)},
              {"x0", to_json(e.x0)},
              {"h", e.h},
              {"delta0", e.delta0},
              {"gamma", e.gamma},
              {"verdict", a.certified ? "certified" : "failed"},
              {"reason", a.reason},
              {"message", a.message},
              {"existence_verdict", e.certified ? "certified" : "failed"},
              {"d", a.d},
              {"sample_count", a.samples.size()},
              {"samples", samples},
              {"D", a.D},
              {"Dh", a.Dh},
              {"return_time_bounds", {{"T_lo", a.T_lo}, {"T_hi", a.T_hi}, {"R_prime", a.R_prime}, {"eta", a.eta},
                                      {"established", a.bounds_established}}}};
  if (a.integral)
    out["integral"] = {{"value", a.integral->value}, {"four_d", 4.0 * a.d}, {"period", a.integral->period},
                       {"samples", a.integral->samples}};
  if (a.expected_d) out["reference_d"] = {{"value", *a.expected_d}, {"gap", *a.gap}};
  return out;
}

inline Json to_json(const ErrorCurveReport& r) {
  Json curves = Json::array();
  for (const auto& c : r.curves) {
    curves.push_back({{"h", c.h},
                      {"h_ref", c.series.h_ref},
                      {"tail_max", c.tail_max},
                      {"tail_over_h", c.tail_max / c.h},
                      {"D", c.D},
                      {"Dh", c.Dh},
                      {"pass", c.tail_below_Dh},
                      {"existence_verdict", c.existence_certified ? "certified" : "failed"},
                      {"existence_reason", c.existence_reason},
                      {"samples", c.series.size()}});
  }
  Json out = {{"kind", "error-curve"},
              {"horizon", r.horizon},
              {"tail_window", {r.tail_start, r.horizon}},
              {"curves", curves},
              {"ordered", r.ordered},
              {"ratio_spread", r.ratio_spread},
              {"ratio_ok", r.ratio_ok},
              {"all_below_Dh", r.all_below_Dh},
              {"pass", r.pass}};
  if (r.richardson_max_diff) out["richardson_reference_gap"] = *r.richardson_max_diff;
  return out;
}

inline Json error_json(const std::string& kind, const std::string& message) {
  return {{"kind", "error"}, {"error", {{"type", kind}, {"message", message}}}};
}

// ---------------------------------------------------------------------------
// Output files

/// Writes `content` to a temporary sibling and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::kInput, "cannot write " + tmp.string());
    out << content;
    if (!out) throw Error(ErrorKind::kInput, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_atomic(path, j.dump(2) + "\n"); }

/// Shortest-exact decimal text of a double (up to 17 significant digits).
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int p = 15; p <= 17; ++p) {
    std::snprintf(buf, sizeof buf, "%.*g", p, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string trajectory_csv(const EulerTrajectory& traj, std::size_t stride = 1) {
  std::string out = "t";
  for (int k = 1; k <= traj.field().dim(); ++k) out += ",x_" + std::to_string(k);
  out += "\n";
  stride = std::max<std::size_t>(stride, 1);
  for (std::size_t i = 0; i <= traj.steps(); ++i) {
    if (i % stride != 0 && i != traj.steps()) continue;
    out += fmt(static_cast<double>(i) * traj.h());
    for (Eigen::Index k = 0; k < traj.node(i).size(); ++k) out += "," + fmt(traj.node(i)[k]);
    out += "\n";
  }
  return out;
}

inline std::string crossings_csv(const std::vector<Crossing>& crossings, int dim, double h) {
  std::string out = "p,R_p,N_p";
  for (int k = 1; k <= dim; ++k) out += ",x_" + std::to_string(k);
  out += "\n";
  for (std::size_t p = 0; p < crossings.size(); ++p) {
    const auto r = to_return_time(crossings[p], h);
    out += std::to_string(p + 1) + "," + fmt(r.R) + "," + std::to_string(r.N);
    for (Eigen::Index k = 0; k < r.point.size(); ++k) out += "," + fmt(r.point[k]);
    out += "\n";
  }
  return out;
}

/// Per-step dump: i, Lambda_{i+1}, sigma_{i+1}, branch, mu_perp(x_i).
inline std::string steps_csv(const Tube& tube) {
  std::string out = "i,Lambda,sigma,branch,mu_perp,a,b,M_tilde\n";
  for (const auto& s : tube.segments) {
    out += std::to_string(s.index - 1) + "," + fmt(s.lambda) + "," + fmt(s.sigma) + "," + to_string(s.branch) + "," +
           fmt(s.mu_perp_node) + "," + fmt(s.a) + "," + fmt(s.b) + "," + fmt(s.M_tilde) + "\n";
  }
  return out;
}

/// Tube geometry at the nodes: i, t, center, alpha, delta, Lambda, sigma.
inline std::string tube_csv(const Tube& tube, const EulerTrajectory& traj, std::size_t stride = 1) {
  std::string out = "i,t";
  for (int k = 1; k <= traj.field().dim(); ++k) out += ",c_" + std::to_string(k);
  out += ",alpha,delta,Lambda,sigma\n";
  stride = std::max<std::size_t>(stride, 1);
  for (std::size_t i = 0; i <= tube.N1; ++i) {
    if (i % stride != 0 && i != tube.N1) continue;
    const bool last = i == tube.N1;
    const TubeSegment& s = tube.segments[last ? i - 1 : i];
    out += std::to_string(i) + "," + fmt(static_cast<double>(i) * tube.h);
    for (Eigen::Index k = 0; k < traj.node(i).size(); ++k) out += "," + fmt(traj.node(i)[k]);
    out += "," + fmt(last ? s.alpha(tube.h) : s.alpha_start) + "," + fmt(last ? s.delta_end : s.delta_start) + "," +
           fmt(s.lambda) + "," + fmt(s.sigma) + "\n";
  }
  return out;
}

inline std::string error_curve_csv(const ErrorCurve& c, std::size_t stride = 1) {
  std::string out = "t,theta,error,delta_bound,Dh\n";
  stride = std::max<std::size_t>(stride, 1);
  const auto& s = c.series;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j % stride != 0 && j + 1 != s.size()) continue;
    out += fmt(s.t[j]) + "," + fmt(s.theta[j]) + "," + fmt(s.error[j]) + "," +
           fmt(s.bound.empty() ? c.Dh : s.bound[j]) + "," + fmt(c.Dh) + "\n";
  }
  return out;
}

}  // namespace cyclecert
