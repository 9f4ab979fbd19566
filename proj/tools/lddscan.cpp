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

// lddscan: dependency decay curves and dilation schedules from the command line.
//
//   lddscan analyze  --input PATH --mode byte|char|word|pixel --max-lag N --out curve.csv
//   lddscan fit      --curve curve.csv --out fit.json
//   lddscan schedule --fit fit.json --layers N --out schedule.json
//   lddscan grid     --fit fit.json --layers LO..HI --out grid.json
//   lddscan permute  --input images.idx --seed N --out permuted.idx
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lddscan/lddscan.hpp"

namespace fs = std::filesystem;
using namespace lddscan;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct AnalyzeArgs {
  std::string input, mode = "byte", bias = "none", out;
  std::size_t max_lag = 0;
  std::uint64_t min_pairs = 1000;
  unsigned threads = 0;
};

struct FitArgs {
  std::string curve, out;
  double threshold = kNoiseThreshold;
};

struct ScheduleArgs {
  std::string fit, out;
  std::size_t layers = 0;
  double threshold = 0.0;  // 0: use the threshold recorded in the fit
};

struct GridArgs {
  std::string fit, layers, out;
  double threshold = 0.0;
};

struct PermuteArgs {
  std::string input, out;
  std::uint64_t seed = 0;
  bool inverse = false;
};

std::vector<std::size_t> parse_layer_sweep(const std::string& text) {
  auto to_count = [&](const std::string& s) -> std::size_t {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(s, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || pos != s.size()) throw Error(errc::usage, "bad layer count '" + s + "' in '" + text + "'");
    return static_cast<std::size_t>(v);
  };
  std::vector<std::size_t> sweep;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const std::size_t lo = to_count(text.substr(0, dots));
    const std::size_t hi = to_count(text.substr(dots + 2));
    if (lo > hi) throw Error(errc::usage, "layer range '" + text + "' is empty");
    for (std::size_t n = lo; n <= hi; ++n) sweep.push_back(n);
  } else {
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) sweep.push_back(to_count(item));
  }
  if (sweep.empty()) throw Error(errc::usage, "layer sweep is empty");
  for (std::size_t n : sweep)
    if (n == 0) throw Error(errc::usage, "layer counts must be positive");
  return sweep;
}

void run_analyze(const AnalyzeArgs& a) {
  const TokenMode mode = parse_token_mode(a.mode);
  const Corpus corpus = mode == TokenMode::pixel ? load_idx_images(a.input) : load_text(a.input, mode);
  if (a.max_lag < 1 || a.max_lag >= corpus.longest_sequence())
    throw Error(errc::usage, "--max-lag must be in [1, " + std::to_string(corpus.longest_sequence()) +
                                 ") for this input");
  EstimatorConfig config;
  config.bias_correction = parse_bias_correction(a.bias);
  config.min_pair_count = a.min_pairs;
  config.threads = a.threads;
  const DecayCurve curve = decay_curve(corpus, default_lag_grid(a.max_lag), config);

  std::ostringstream csv;
  write_curve_csv(csv, curve);
  write_text_file(a.out, csv.str());

  CurveProvenance prov;
  prov.input = a.input;
  prov.source_meta = corpus.source_meta();
  prov.mode = mode;
  prov.alphabet_size = corpus.alphabet_size();
  prov.sequences = corpus.sequences().size();
  prov.total_symbols = corpus.total_symbols();
  prov.requested_max_lag = a.max_lag;
  write_json_file(sidecar_path(a.out), curve_sidecar_json(curve, prov));

  std::cerr << "analyze: " << curve.points.size() << " lags written to " << a.out;
  if (!curve.dropped.empty())
    std::cerr << ", " << curve.dropped.size() << " lags dropped (fewer than " << config.min_pair_count << " pairs)";
  std::cerr << '\n';
}

void run_fit(const FitArgs& a) {
  std::ifstream in(a.curve, std::ios::binary);
  if (!in) throw Error(errc::data, "cannot open '" + a.curve + "'");
  DecayCurve curve = read_curve_csv(in);

  FitDocument doc;
  doc.dataset_meta = "curve=" + a.curve;
  doc.estimator = nullptr;
  if (const fs::path side = sidecar_path(a.curve); fs::exists(side)) {
    const json meta = read_json_file(side);
    merge_sidecar(curve, meta);
    doc.dataset_meta = meta.value("source_meta", doc.dataset_meta);
    doc.estimator = meta.at("estimator");
  }
  ClassifierConfig config;
  config.noise_threshold = a.threshold;
  doc.fit = classify(curve, config);
  write_json_file(a.out, fit_json(doc));
  std::cerr << "fit: " << to_string(doc.fit.decay_class);
  if (doc.fit.broken) std::cerr << ", break at d=" << doc.fit.broken->break_d;
  if (doc.fit.periodicity) std::cerr << ", period " << doc.fit.periodicity->period;
  if (doc.fit.noise_crossing_d) std::cerr << ", MI < " << a.threshold << " from d=" << *doc.fit.noise_crossing_d;
  if (doc.fit.low_confidence) std::cerr << " (low confidence: estimator bias floor above threshold)";
  std::cerr << '\n';
}

ScheduleConfig schedule_config(const FitDocument& doc, double threshold) {
  ScheduleConfig config;
  config.mi_threshold = threshold > 0.0 ? threshold : doc.fit.noise_threshold;
  return config;
}

void warn_lower_bound(const MaxDilation& md) {
  if (md.lower_bound)
    std::cerr << "warning: MI never stays below the threshold; using the largest sampled lag " << md.value
              << " as max dilation (lower bound)\n";
}

void run_schedule(const ScheduleArgs& a) {
  const FitDocument doc = fit_from_json(read_json_file(a.fit));
  ScheduleConfig config = schedule_config(doc, a.threshold);
  config.n_layers = a.layers;
  const MaxDilation md = max_dilation(doc.fit, config);
  warn_lower_bound(md);
  const DilationSchedule s = fitted_schedule(doc.fit, config);
  write_json_file(a.out, schedule_document_json(s, doc, md));
}

void run_grid(const GridArgs& a) {
  const FitDocument doc = fit_from_json(read_json_file(a.fit));
  ScheduleConfig config = schedule_config(doc, a.threshold);
  config.layer_sweep = parse_layer_sweep(a.layers);
  const GridSearchSpec grid = build_grid(doc.fit, config, doc.dataset_meta);
  warn_lower_bound(grid.max_dilation);
  write_json_file(a.out, grid_json(grid, doc));
  std::cerr << "grid: " << grid.schedules.size() << " schedules, max dilation " << grid.max_dilation.value << '\n';
}

void run_permute(const PermuteArgs& a) {
  const Corpus corpus = load_idx_images(a.input);
  const PermutationSpec spec{a.seed, corpus.image_shape()->pixels()};
  const auto perm = make_permutation(spec);
  const Corpus out = a.inverse ? apply_permutation(corpus, invert_permutation(perm),
                                                   "inverse_permutation;seed=" + std::to_string(a.seed))
                               : permute(corpus, spec);
  write_idx_images(out, a.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mutual-information decay curves and dilation schedules for dilated RNNs", "lddscan"};
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto* cmd_analyze = app.add_subcommand("analyze", "Compute the MI decay curve of a corpus");
  cmd_analyze->add_option("--input", analyze.input, "Text file or IDX image file")->required();
  cmd_analyze->add_option("--mode", analyze.mode, "Tokenization")
      ->check(CLI::IsMember({"byte", "char", "word", "pixel"}));
  cmd_analyze->add_option("--max-lag", analyze.max_lag, "Largest lag to evaluate")->required();
  cmd_analyze->add_option("--min-pairs", analyze.min_pairs, "Drop lags with fewer pairs")->capture_default_str();
  cmd_analyze->add_option("--bias-correction", analyze.bias, "Entropy bias correction")
      ->check(CLI::IsMember({"none", "miller-madow"}));
  cmd_analyze->add_option("--threads", analyze.threads, "Worker threads (0 = all cores)");
  cmd_analyze->add_option("--out", analyze.out, "Output CSV; metadata goes to <out>.json")->required();

  FitArgs fit;
  auto* cmd_fit = app.add_subcommand("fit", "Classify a decay curve and fit its decay law");
  cmd_fit->add_option("--curve", fit.curve, "Curve CSV from analyze")->required();
  cmd_fit->add_option("--threshold", fit.threshold, "MI noise threshold in nats")->capture_default_str();
  cmd_fit->add_option("--out", fit.out, "Output fit JSON")->required();

  ScheduleArgs schedule;
  auto* cmd_schedule = app.add_subcommand("schedule", "Derive one dilation schedule from a fit");
  cmd_schedule->add_option("--fit", schedule.fit, "Fit JSON")->required();
  cmd_schedule->add_option("--layers", schedule.layers, "Number of layers")->required();
  cmd_schedule->add_option("--threshold", schedule.threshold, "Override the fit's MI threshold");
  cmd_schedule->add_option("--out", schedule.out, "Output schedule JSON")->required();

  GridArgs grid;
  auto* cmd_grid = app.add_subcommand("grid", "Build a grid search over dilation schedules");
  cmd_grid->add_option("--fit", grid.fit, "Fit JSON")->required();
  cmd_grid->add_option("--layers", grid.layers, "Layer counts: LO..HI or a comma list")->required();
  cmd_grid->add_option("--threshold", grid.threshold, "Override the fit's MI threshold");
  cmd_grid->add_option("--out", grid.out, "Output grid JSON")->required();

  PermuteArgs permute_args;
  auto* cmd_permute = app.add_subcommand("permute", "Apply one seeded pixel permutation to every image");
  cmd_permute->add_option("--input", permute_args.input, "IDX image file")->required();
  cmd_permute->add_option("--seed", permute_args.seed, "Permutation seed")->required();
  cmd_permute->add_flag("--inverse", permute_args.inverse, "Apply the inverse permutation");
  cmd_permute->add_option("--out", permute_args.out, "Output IDX file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (cmd_analyze->parsed()) run_analyze(analyze);
    else if (cmd_fit->parsed()) run_fit(fit);
    else if (cmd_schedule->parsed()) run_schedule(schedule);
    else if (cmd_grid->parsed()) run_grid(grid);
    else if (cmd_permute->parsed()) run_permute(permute_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code() == errc::usage ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
