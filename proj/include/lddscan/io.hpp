// Copyright 2026 The lddscan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// File formats: the decay-curve CSV and its JSON sidecar, classified-fit
// JSON, and schedule / grid JSON. Every JSON document carries
// "format_version": 1.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lddscan/corpus.hpp"
#include "lddscan/error.hpp"
#include "lddscan/estimator.hpp"
#include "lddscan/fit.hpp"
#include "lddscan/schedule.hpp"

namespace lddscan {

using json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kCurveHeader = "lag,mi_nats,pair_count";

// ---------------------------------------------------------------------------
// Curve CSV

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_curve_csv(std::ostream& out, const DecayCurve& curve) {
  out << kCurveHeader << '\n';
  for (const auto& p : curve.points) out << p.lag << ',' << format_double(p.mi) << ',' << p.pair_count << '\n';
}

namespace detail {

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw Error(errc::data, "line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'");
  return value;
}

}  // namespace detail

/// Reads a curve written by write_curve_csv. Bias floors are unknown (NaN)
/// until merged from the sidecar.
inline DecayCurve read_curve_csv(std::istream& in) {
  DecayCurve curve;
  std::string line;
  std::size_t line_no = 0;
  auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  if (!std::getline(in, line)) throw Error(errc::data, "curve CSV is empty");
  ++line_no;
  strip_cr(line);
  if (line != kCurveHeader)
    throw Error(errc::data, "curve CSV header must be '" + std::string(kCurveHeader) + "', got '" + line + "'");
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    std::string_view row(line);
    const auto c1 = row.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : row.find(',', c1 + 1);
    if (c2 == std::string_view::npos || row.find(',', c2 + 1) != std::string_view::npos)
      throw Error(errc::data, "line " + std::to_string(line_no) + ": expected 3 fields");
    CurvePoint p;
    p.lag = detail::parse_number<std::size_t>(row.substr(0, c1), line_no);
    p.mi = detail::parse_number<double>(row.substr(c1 + 1, c2 - c1 - 1), line_no);
    p.pair_count = detail::parse_number<std::uint64_t>(row.substr(c2 + 1), line_no);
    if (p.lag < 1) throw Error(errc::data, "line " + std::to_string(line_no) + ": lag must be positive");
    if (!std::isfinite(p.mi) || p.mi < 0.0)
      throw Error(errc::data, "line " + std::to_string(line_no) + ": MI must be finite and non-negative");
    if (!curve.points.empty() && p.lag <= curve.points.back().lag)
      throw Error(errc::data, "line " + std::to_string(line_no) + ": lags must be strictly increasing");
    curve.points.push_back(p);
  }
  if (curve.points.empty()) throw Error(errc::data, "curve CSV has no data rows");
  return curve;
}

// ---------------------------------------------------------------------------
// Curve sidecar

struct CurveProvenance {
  std::string input;
  std::string source_meta;
  TokenMode mode = TokenMode::byte;
  std::size_t alphabet_size = 0;
  std::size_t sequences = 0;
  std::size_t total_symbols = 0;
  std::size_t requested_max_lag = 0;
};

inline json estimator_json(const EstimatorConfig& config) {
  return json{{"estimator", "plug-in"},
              {"log_base", "e"},
              {"bias_correction", to_string(config.bias_correction)},
              {"min_pair_count", config.min_pair_count},
              {"pairs_cross_sequences", false}};
}

namespace detail {

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline double number_or_nan(const json& j) {
  return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

inline json curve_sidecar_json(const DecayCurve& curve, const CurveProvenance& prov) {
  json dropped = json::array();
  for (const auto& d : curve.dropped) dropped.push_back({{"lag", d.lag}, {"pair_count", d.pair_count}});
  json points = json::array();
  for (const auto& p : curve.points)
    points.push_back({{"lag", p.lag},
                      {"support_x", p.support_x},
                      {"support_y", p.support_y},
                      {"bias_floor", detail::nullable(p.bias_floor)}});
  return json{{"format_version", kFormatVersion},
              {"kind", "decay_curve_meta"},
              {"input", prov.input},
              {"mode", to_string(prov.mode)},
              {"source_meta", prov.source_meta},
              {"alphabet_size", prov.alphabet_size},
              {"sequences", prov.sequences},
              {"total_symbols", prov.total_symbols},
              {"lag_grid", {{"kind", "default"}, {"dense_limit", kDenseLagLimit},
                            {"per_decade", kLagsPerDecade}, {"max_lag", prov.requested_max_lag}}},
              {"estimator", estimator_json(curve.config)},
              {"dropped_lags", dropped},
              {"points", points}};
}

inline void check_format(const json& doc, std::string_view kind) {
  if (!doc.is_object() || doc.value("format_version", 0) != kFormatVersion)
    throw Error(errc::data, "unsupported or missing format_version");
  if (doc.value("kind", std::string{}) != kind)
    throw Error(errc::data, "expected a '" + std::string(kind) + "' document");
}

/// Copies per-lag bias floors and supports from a sidecar into `curve`, and
/// restores its estimator config.
inline void merge_sidecar(DecayCurve& curve, const json& sidecar) {
  check_format(sidecar, "decay_curve_meta");
  try {
    const auto& est = sidecar.at("estimator");
    curve.config.bias_correction = parse_bias_correction(est.at("bias_correction").get<std::string>());
    curve.config.min_pair_count = est.at("min_pair_count").get<std::uint64_t>();
    for (const auto& d : sidecar.at("dropped_lags"))
      curve.dropped.push_back({d.at("lag").get<std::size_t>(), d.at("pair_count").get<std::uint64_t>()});
    std::size_t i = 0;
    for (const auto& p : sidecar.at("points")) {
      const auto lag = p.at("lag").get<std::size_t>();
      while (i < curve.points.size() && curve.points[i].lag < lag) ++i;
      if (i == curve.points.size() || curve.points[i].lag != lag) continue;
      curve.points[i].bias_floor = detail::number_or_nan(p.at("bias_floor"));
      curve.points[i].support_x = p.at("support_x").get<std::size_t>();
      curve.points[i].support_y = p.at("support_y").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw Error(errc::data, std::string("malformed curve sidecar: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Classified fit

namespace detail {

inline json power_json(const PowerLawFit& f) {
  return {{"slope", f.slope},     {"log_intercept", f.log_intercept}, {"r2", f.r2},
          {"d_lo", f.d_lo},       {"d_hi", f.d_hi},                   {"n_points", f.n_points},
          {"excluded_zero", f.excluded_zero}, {"sse", f.sse}};
}

inline PowerLawFit power_from(const json& j) {
  PowerLawFit f;
  f.slope = j.at("slope").get<double>();
  f.log_intercept = j.at("log_intercept").get<double>();
  f.r2 = j.at("r2").get<double>();
  f.d_lo = j.at("d_lo").get<std::size_t>();
  f.d_hi = j.at("d_hi").get<std::size_t>();
  f.n_points = j.value("n_points", std::size_t{0});
  f.excluded_zero = j.value("excluded_zero", std::size_t{0});
  f.sse = j.value("sse", 0.0);
  return f;
}

}  // namespace detail

/// A classified fit plus the provenance echoed into its JSON document.
struct FitDocument {
  ClassifiedFit fit;
  std::string dataset_meta;
  json estimator;  // null when the curve had no sidecar
};

inline json fit_json(const FitDocument& doc) {
  const ClassifiedFit& f = doc.fit;
  json j{{"format_version", kFormatVersion},
         {"kind", "classified_fit"},
         {"decay_class", to_string(f.decay_class)},
         {"dataset_meta", doc.dataset_meta}};
  j["break_d"] = f.broken ? json(f.broken->break_d) : json(nullptr);
  j["period"] = f.periodicity ? json(f.periodicity->period) : json(nullptr);
  if (f.power) j["power"] = detail::power_json(*f.power);
  if (f.broken) {
    j["broken"] = {{"break_d", f.broken->break_d},
                   {"left", detail::power_json(f.broken->left)},
                   {"right", detail::power_json(f.broken->right)},
                   {"improvement", f.broken->improvement},
                   {"sse", f.broken->sse},
                   {"single_sse", f.broken->single_sse}};
  }
  if (f.expo)
    j["exponential"] = {{"rate", f.expo->rate},   {"log_intercept", f.expo->log_intercept},
                        {"r2", f.expo->r2},       {"d_lo", f.expo->d_lo},
                        {"d_hi", f.expo->d_hi},   {"n_points", f.expo->n_points},
                        {"excluded_zero", f.expo->excluded_zero}, {"sse", f.expo->sse}};
  if (f.periodicity) {
    j["periodicity"] = {{"period", f.periodicity->period},
                        {"peak_lags", f.periodicity->peak_lags},
                        {"prominence", f.periodicity->prominence}};
  }
  j["noise_crossing_d"] = f.noise_crossing_d ? json(*f.noise_crossing_d) : json(nullptr);
  j["noise_threshold"] = f.noise_threshold;
  j["low_confidence"] = f.low_confidence;
  j["max_sampled_lag"] = f.max_sampled_lag;
  j["decay_onset_d"] = f.decay_onset_d;
  const auto& c = f.config;
  j["classifier"] = {{"periodicity_prominence", c.periodicity.prominence},
                     {"peak_spacing_tolerance", c.periodicity.spacing_tolerance},
                     {"min_dense_prefix", c.periodicity.min_dense_prefix},
                     {"exponential_r2_margin", c.exponential_r2_margin},
                     {"broken_improvement", c.broken_improvement},
                     {"median_window", c.median_window},
                     {"plateau_tolerance", c.plateau_tolerance},
                     {"range_lo", c.range.lo},
                     {"range_hi", c.range.hi == std::numeric_limits<std::size_t>::max() ? json(nullptr)
                                                                                         : json(c.range.hi)}};
  j["estimator"] = doc.estimator;
  json curve = json::array();
  for (const auto& s : f.samples) curve.push_back(json::array({s.lag, s.mi, detail::nullable(s.bias_floor)}));
  j["curve"] = curve;
  return j;
}

inline FitDocument fit_from_json(const json& j) {
  check_format(j, "classified_fit");
  FitDocument doc;
  ClassifiedFit& f = doc.fit;
  try {
    f.decay_class = parse_decay_class(j.at("decay_class").get<std::string>());
    doc.dataset_meta = j.value("dataset_meta", std::string{});
    if (j.contains("power")) f.power = detail::power_from(j.at("power"));
    if (j.contains("broken")) {
      const auto& b = j.at("broken");
      BrokenPowerLawFit bf;
      bf.break_d = b.at("break_d").get<std::size_t>();
      bf.left = detail::power_from(b.at("left"));
      bf.right = detail::power_from(b.at("right"));
      bf.improvement = b.at("improvement").get<double>();
      bf.sse = b.value("sse", 0.0);
      bf.single_sse = b.value("single_sse", 0.0);
      f.broken = bf;
    }
    if (j.contains("exponential")) {
      const auto& e = j.at("exponential");
      ExponentialFit ef;
      ef.rate = e.at("rate").get<double>();
      ef.log_intercept = e.at("log_intercept").get<double>();
      ef.r2 = e.at("r2").get<double>();
      ef.d_lo = e.at("d_lo").get<std::size_t>();
      ef.d_hi = e.at("d_hi").get<std::size_t>();
      ef.n_points = e.value("n_points", std::size_t{0});
      ef.excluded_zero = e.value("excluded_zero", std::size_t{0});
      ef.sse = e.value("sse", 0.0);
      f.expo = ef;
    }
    if (j.contains("periodicity")) {
      const auto& p = j.at("periodicity");
      f.periodicity = PeriodicitySignature{p.at("period").get<std::size_t>(),
                                           p.at("peak_lags").get<std::vector<std::size_t>>(),
                                           p.value("prominence", 0.2)};
    }
    if (j.contains("noise_crossing_d") && !j.at("noise_crossing_d").is_null())
      f.noise_crossing_d = j.at("noise_crossing_d").get<std::size_t>();
    f.noise_threshold = j.value("noise_threshold", kNoiseThreshold);
    f.low_confidence = j.value("low_confidence", false);
    f.max_sampled_lag = j.value("max_sampled_lag", std::size_t{0});
    f.decay_onset_d = j.value("decay_onset_d", std::size_t{0});
    if (j.contains("classifier")) {
      const auto& c = j.at("classifier");
      f.config.periodicity.prominence = c.value("periodicity_prominence", 0.2);
      f.config.periodicity.spacing_tolerance = c.value("peak_spacing_tolerance", std::size_t{1});
      f.config.periodicity.min_dense_prefix = c.value("min_dense_prefix", std::size_t{8});
      f.config.exponential_r2_margin = c.value("exponential_r2_margin", 0.05);
      f.config.broken_improvement = c.value("broken_improvement", 0.15);
      f.config.median_window = c.value("median_window", std::size_t{5});
      f.config.plateau_tolerance = c.value("plateau_tolerance", 0.1);
      f.config.range.lo = c.value("range_lo", std::size_t{1});
      if (c.contains("range_hi") && !c.at("range_hi").is_null()) f.config.range.hi = c.at("range_hi").get<std::size_t>();
    }
    f.config.noise_threshold = f.noise_threshold;
    doc.estimator = j.value("estimator", json(nullptr));
    if (j.contains("curve"))
      for (const auto& s : j.at("curve"))
        f.samples.push_back({s.at(0).get<std::size_t>(), s.at(1).get<double>(), detail::number_or_nan(s.at(2))});
  } catch (const json::exception& e) {
    throw Error(errc::data, std::string("malformed fit document: ") + e.what());
  }
  const bool consistent =
      (f.decay_class == DecayClass::power_law && f.power) ||
      (f.decay_class == DecayClass::broken_power_law && f.broken) ||
      (f.decay_class == DecayClass::power_law_periodic && f.power && f.periodicity) ||
      (f.decay_class == DecayClass::exponential && f.expo);
  if (!consistent)
    throw Error(errc::data, "fit document lacks the parameters of its decay class");
  return doc;
}

// ---------------------------------------------------------------------------
// Schedules and grids

inline json schedule_json(const DilationSchedule& s) {
  return {{"dilations", s.dilations}, {"origin", to_string(s.origin)}, {"rationale", s.rationale}};
}

inline DilationSchedule schedule_from_json(const json& j) {
  DilationSchedule s;
  try {
    s.dilations = j.at("dilations").get<std::vector<std::size_t>>();
    s.origin = parse_schedule_origin(j.at("origin").get<std::string>());
    s.rationale = j.value("rationale", std::string{});
  } catch (const json::exception& e) {
    throw Error(errc::data, std::string("malformed schedule: ") + e.what());
  }
  if (!is_valid_schedule(s.dilations))
    throw Error(errc::data, "schedule must start at 1 and increase strictly");
  return s;
}

inline json schedule_document_json(const DilationSchedule& s, const FitDocument& fit, const MaxDilation& md) {
  json j{{"format_version", kFormatVersion},
         {"kind", "dilation_schedule"},
         {"dataset_meta", fit.dataset_meta},
         {"decay_class", to_string(fit.fit.decay_class)},
         {"max_dilation", md.value},
         {"max_dilation_lower_bound", md.lower_bound},
         {"max_dilation_source", md.source},
         {"n_layers", s.dilations.size()}};
  j.update(schedule_json(s));
  return j;
}

inline json grid_json(const GridSearchSpec& grid, const FitDocument& fit) {
  json schedules = json::array();
  for (const auto& s : grid.schedules) schedules.push_back(schedule_json(s));
  return json{{"format_version", kFormatVersion},
              {"kind", "grid_search"},
              {"dataset_meta", grid.dataset_meta},
              {"decay_class", to_string(grid.evidence.decay_class)},
              {"max_dilation", grid.max_dilation.value},
              {"max_dilation_lower_bound", grid.max_dilation.lower_bound},
              {"max_dilation_source", grid.max_dilation.source},
              {"warnings", grid.warnings},
              {"schedules", schedules},
              {"evidence", fit_json(fit)}};
}

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_text_file(const std::filesystem::path& path) { return detail::read_file(path); }

inline json read_json_file(const std::filesystem::path& path) {
  const std::string text = detail::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(errc::data, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::data, "cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(errc::data, "error writing '" + path.string() + "'");
}

inline void write_json_file(const std::filesystem::path& path, const json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

/// Sidecar path for a curve CSV: "<csv>.json".
inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
  return std::filesystem::path(csv.string() + ".json");
}

}  // namespace lddscan
