#pragma once

// Batch commands behind the csps executable. Each command takes a resolved
// RunConfig and writes its artifacts under output.directory.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <Eigen/Dense>

#include "csps/csv.hpp"
#include "csps/data.hpp"
#include "csps/dataset.hpp"
#include "csps/diagnostics.hpp"
#include "csps/error.hpp"
#include "csps/estimators.hpp"
#include "csps/model.hpp"
#include "csps/parallel.hpp"
#include "csps/sampler.hpp"

namespace csps {

using json = nlohmann::json;

struct ModelOptions {
  std::optional<int> c;  // checked against the data when given
  double rho = 0.0;
  double tau2 = 4.0;
  double gamma1 = 5.0;
  double gamma2 = 15.0;
  std::optional<double> intercept_mean;
  std::vector<double> mu;  // full prior-mean vector, length p+1
};

struct SamplerOptions {
  long iterations = 11000;
  long burn_in = 1000;
  long thin = 10;
  std::vector<std::uint64_t> seeds{1};
  std::vector<ChainStart> starts{ChainStart::empty};
  double q_proposal_scale = 0.5;
  int workers = 0;  // 0: available hardware threads
};

struct RbfOptions {
  int knots = 0;  // 0 disables the expansion
  double bandwidth = 4.0;
  std::uint64_t seed = 1;
};

struct DataOptions {
  std::string input;
  int scenario = 0;
  std::uint64_t seed = 1;
  int n = 250;
  std::string label_column = "label";
  std::optional<std::string> reference_class;
  bool standardize = true;
  RbfOptions rbf;
};

struct OutputOptions {
  std::string directory = "csps_out";
};

struct CvOptions {
  std::string mode = "kfold";  // kfold | loocv | repeated-split
  int k = 10;
  int count = 25;
  double fraction = 0.5;
  std::uint64_t seed = 1;
};

struct PredictOptions {
  std::string fit_dir;
  std::string input;
};

struct ScreenOptions {
  double threshold = 0.5;
};

struct RunConfig {
  ModelOptions model;
  SamplerOptions sampler;
  DataOptions data;
  OutputOptions output;
  CvOptions cv;
  PredictOptions predict;
  ScreenOptions screen;

  int workers() const { return sampler.workers > 0 ? sampler.workers : default_workers(); }
};

namespace detail {

inline void check_keys(const json& block, const std::string& name,
                       const std::set<std::string>& allowed) {
  if (!block.is_object()) throw ValidationError("config block '" + name + "' must be an object");
  for (const auto& [key, value] : block.items())
    if (!allowed.count(key)) throw ValidationError("unknown config key '" + name + "." + key + "'");
}

template <typename T>
void read_key(const json& block, const char* key, T& out) {
  if (block.contains(key)) out = block.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  try {
    detail::check_keys(j, "<root>", {"model", "sampler", "data", "output", "cv", "predict", "screen"});
    if (j.contains("model")) {
      const json& b = j.at("model");
      detail::check_keys(b, "model", {"c", "rho", "tau2", "gamma1", "gamma2", "intercept_mean", "mu"});
      if (b.contains("c")) cfg.model.c = b.at("c").get<int>();
      detail::read_key(b, "rho", cfg.model.rho);
      detail::read_key(b, "tau2", cfg.model.tau2);
      detail::read_key(b, "gamma1", cfg.model.gamma1);
      detail::read_key(b, "gamma2", cfg.model.gamma2);
      if (b.contains("intercept_mean")) cfg.model.intercept_mean = b.at("intercept_mean").get<double>();
      detail::read_key(b, "mu", cfg.model.mu);
    }
    if (j.contains("sampler")) {
      const json& b = j.at("sampler");
      detail::check_keys(b, "sampler", {"iterations", "burn_in", "thin", "seeds", "chains", "starts",
                                        "q_proposal_scale", "workers"});
      detail::read_key(b, "iterations", cfg.sampler.iterations);
      detail::read_key(b, "burn_in", cfg.sampler.burn_in);
      detail::read_key(b, "thin", cfg.sampler.thin);
      detail::read_key(b, "seeds", cfg.sampler.seeds);
      detail::read_key(b, "q_proposal_scale", cfg.sampler.q_proposal_scale);
      detail::read_key(b, "workers", cfg.sampler.workers);
      if (b.contains("starts")) {
        cfg.sampler.starts.clear();
        for (const auto& s : b.at("starts")) cfg.sampler.starts.push_back(parse_chain_start(s.get<std::string>()));
      }
      if (cfg.sampler.seeds.empty()) throw ValidationError("sampler.seeds must list at least one seed");
      if (b.contains("chains") && b.at("chains").get<std::size_t>() != cfg.sampler.seeds.size())
        throw ValidationError("sampler.chains must equal the number of sampler.seeds");
      if (cfg.sampler.starts.size() == 1)
        cfg.sampler.starts.resize(cfg.sampler.seeds.size(), cfg.sampler.starts.front());
      if (cfg.sampler.starts.size() != cfg.sampler.seeds.size())
        throw ValidationError("sampler.starts must have one entry or one per seed");
    }
    if (j.contains("data")) {
      const json& b = j.at("data");
      detail::check_keys(b, "data", {"input", "scenario", "seed", "n", "label_column",
                                     "reference_class", "standardize", "rbf"});
      detail::read_key(b, "input", cfg.data.input);
      detail::read_key(b, "scenario", cfg.data.scenario);
      detail::read_key(b, "seed", cfg.data.seed);
      detail::read_key(b, "n", cfg.data.n);
      detail::read_key(b, "label_column", cfg.data.label_column);
      if (b.contains("reference_class")) {
        const json& r = b.at("reference_class");
        cfg.data.reference_class = r.is_string() ? r.get<std::string>() : r.dump();
      }
      detail::read_key(b, "standardize", cfg.data.standardize);
      if (b.contains("rbf")) {
        const json& r = b.at("rbf");
        detail::check_keys(r, "data.rbf", {"knots", "bandwidth", "seed"});
        detail::read_key(r, "knots", cfg.data.rbf.knots);
        detail::read_key(r, "bandwidth", cfg.data.rbf.bandwidth);
        detail::read_key(r, "seed", cfg.data.rbf.seed);
      }
    }
    if (j.contains("output")) {
      const json& b = j.at("output");
      detail::check_keys(b, "output", {"directory"});
      detail::read_key(b, "directory", cfg.output.directory);
    }
    if (j.contains("cv")) {
      const json& b = j.at("cv");
      detail::check_keys(b, "cv", {"mode", "k", "count", "fraction", "seed"});
      detail::read_key(b, "mode", cfg.cv.mode);
      detail::read_key(b, "k", cfg.cv.k);
      detail::read_key(b, "count", cfg.cv.count);
      detail::read_key(b, "fraction", cfg.cv.fraction);
      detail::read_key(b, "seed", cfg.cv.seed);
    }
    if (j.contains("predict")) {
      const json& b = j.at("predict");
      detail::check_keys(b, "predict", {"fit_dir", "input"});
      detail::read_key(b, "fit_dir", cfg.predict.fit_dir);
      detail::read_key(b, "input", cfg.predict.input);
    }
    if (j.contains("screen")) {
      const json& b = j.at("screen");
      detail::check_keys(b, "screen", {"threshold"});
      detail::read_key(b, "threshold", cfg.screen.threshold);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (cfg.sampler.starts.size() != cfg.sampler.seeds.size())
    throw ValidationError("sampler.starts must have one entry or one per seed");
  if (cfg.data.rbf.knots < 0) throw ValidationError("data.rbf.knots must be non-negative");
  return cfg;
}

inline json to_json(const RunConfig& cfg) {
  json starts = json::array();
  for (auto s : cfg.sampler.starts) starts.push_back(to_string(s));
  json model = {{"rho", cfg.model.rho},
                {"tau2", cfg.model.tau2},
                {"gamma1", cfg.model.gamma1},
                {"gamma2", cfg.model.gamma2}};
  if (cfg.model.c) model["c"] = *cfg.model.c;
  if (cfg.model.intercept_mean) model["intercept_mean"] = *cfg.model.intercept_mean;
  if (!cfg.model.mu.empty()) model["mu"] = cfg.model.mu;
  json data = {{"input", cfg.data.input},
               {"scenario", cfg.data.scenario},
               {"seed", cfg.data.seed},
               {"n", cfg.data.n},
               {"label_column", cfg.data.label_column},
               {"standardize", cfg.data.standardize},
               {"rbf",
                {{"knots", cfg.data.rbf.knots},
                 {"bandwidth", cfg.data.rbf.bandwidth},
                 {"seed", cfg.data.rbf.seed}}}};
  if (cfg.data.reference_class) data["reference_class"] = *cfg.data.reference_class;
  return {{"model", model},
          {"sampler",
           {{"iterations", cfg.sampler.iterations},
            {"burn_in", cfg.sampler.burn_in},
            {"thin", cfg.sampler.thin},
            {"seeds", cfg.sampler.seeds},
            {"starts", starts},
            {"q_proposal_scale", cfg.sampler.q_proposal_scale},
            {"workers", cfg.sampler.workers}}},
          {"data", data},
          {"output", {{"directory", cfg.output.directory}}},
          {"cv",
           {{"mode", cfg.cv.mode},
            {"k", cfg.cv.k},
            {"count", cfg.cv.count},
            {"fraction", cfg.cv.fraction},
            {"seed", cfg.cv.seed}}},
          {"predict", {{"fit_dir", cfg.predict.fit_dir}, {"input", cfg.predict.input}}},
          {"screen", {{"threshold", cfg.screen.threshold}}}};
}

// Applies "block.key=value" to a config document. The value is read as JSON
// when it parses, as a plain string otherwise.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ValidationError("override '" + assignment + "' is not of the form key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ValidationError("override '" + assignment + "' has an empty key");
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError(path + ": malformed JSON");
  return j;
}

inline void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Preprocessing: optional standardization of the raw predictors, then an
// optional radial-basis expansion fitted on the same (training) rows.

struct Preprocessor {
  std::vector<std::string> input_names;
  std::vector<std::string> feature_names;
  std::optional<Standardization> standardization;
  std::optional<RbfConfig> rbf;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& raw) const {
    if (raw.cols() != static_cast<Eigen::Index>(input_names.size()))
      throw ValidationError("predictor count " + std::to_string(raw.cols()) +
                            " does not match the fitted " + std::to_string(input_names.size()));
    Eigen::MatrixXd x = raw;
    if (standardization)
      for (Eigen::Index k = 0; k < x.cols(); ++k)
        x.col(k) = (x.col(k).array() - standardization->shift(k)) / standardization->scale(k);
    if (rbf) return rbf_features(x, *rbf);
    return x;
  }

  Dataset transform(const Dataset& raw) const {
    Dataset out;
    const Eigen::MatrixXd x = apply(raw.design.rightCols(raw.p()));
    out.design.resize(x.rows(), x.cols() + 1);
    out.design.col(0).setOnes();
    out.design.rightCols(x.cols()) = x;
    out.labels = raw.labels;
    out.class_names = raw.class_names;
    out.predictor_names = feature_names;
    return out;
  }
};

inline Preprocessor fit_preprocessor(const Dataset& raw, const DataOptions& opts) {
  Preprocessor prep;
  prep.input_names = raw.predictor_names;
  prep.feature_names = raw.predictor_names;
  if (opts.standardize) prep.standardization = standardize(raw).second;
  if (opts.rbf.knots > 0) {
    Preprocessor base = prep;
    const Eigen::MatrixXd v = base.apply(raw.design.rightCols(raw.p()));
    Rng rng(opts.rbf.seed);
    const Eigen::MatrixXd knots = select_knots(v, opts.rbf.knots, rng);
    prep.rbf = fit_rbf(v, knots, opts.rbf.bandwidth);
    prep.feature_names.clear();
    for (int k = 1; k <= opts.rbf.knots; ++k) prep.feature_names.push_back("rbf" + std::to_string(k));
  }
  return prep;
}

inline json to_json(const Preprocessor& prep) {
  json j = {{"input_names", prep.input_names}, {"feature_names", prep.feature_names}};
  if (prep.standardization) {
    j["standardization"] = {
        {"shift", std::vector<double>(prep.standardization->shift.data(),
                                      prep.standardization->shift.data() + prep.standardization->shift.size())},
        {"scale", std::vector<double>(prep.standardization->scale.data(),
                                      prep.standardization->scale.data() + prep.standardization->scale.size())}};
  }
  if (prep.rbf) {
    json knots = json::array();
    for (Eigen::Index k = 0; k < prep.rbf->knots.rows(); ++k) {
      const Eigen::VectorXd row = prep.rbf->knots.row(k).transpose();
      knots.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    j["rbf"] = {{"bandwidth", prep.rbf->bandwidth},
                {"knots", knots},
                {"a", std::vector<double>(prep.rbf->a.data(), prep.rbf->a.data() + prep.rbf->a.size())},
                {"b", std::vector<double>(prep.rbf->b.data(), prep.rbf->b.data() + prep.rbf->b.size())}};
  }
  return j;
}

inline Preprocessor preprocessor_from_json(const json& j) {
  auto vec = [](const json& a) {
    const auto v = a.get<std::vector<double>>();
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  Preprocessor prep;
  try {
    prep.input_names = j.at("input_names").get<std::vector<std::string>>();
    prep.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (j.contains("standardization"))
      prep.standardization =
          Standardization{vec(j["standardization"]["shift"]), vec(j["standardization"]["scale"])};
    if (j.contains("rbf")) {
      const json& r = j["rbf"];
      const auto rows = r["knots"].get<std::vector<std::vector<double>>>();
      Eigen::MatrixXd knots(static_cast<Eigen::Index>(rows.size()),
                            rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
      for (std::size_t k = 0; k < rows.size(); ++k)
        for (std::size_t d = 0; d < rows[k].size(); ++d)
          knots(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d)) = rows[k][d];
      prep.rbf = RbfConfig{knots, r["bandwidth"].get<double>(), vec(r["a"]), vec(r["b"])};
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("preprocessing record: ") + e.what());
  }
  return prep;
}

// ---------------------------------------------------------------------------

inline Dataset load_raw_data(const DataOptions& opts) {
  if (!opts.input.empty()) {
    if (!std::filesystem::exists(opts.input)) throw ValidationError("data file not found: " + opts.input);
    return load_csv(opts.input, opts.label_column, opts.reference_class);
  }
  if (opts.scenario != 0) return simulate_scenario(opts.scenario, opts.seed, opts.n).data;
  throw ValidationError("data block needs either 'input' or 'scenario'");
}

inline Hyperparameters make_hyperparameters(const ModelOptions& m, int c, int p) {
  if (m.c && *m.c != c)
    throw ValidationError("model.c = " + std::to_string(*m.c) + " but the data have " +
                          std::to_string(c) + " non-reference classes");
  Hyperparameters hp = Hyperparameters::defaults(c, p);
  hp.rho = m.rho;
  hp.tau2 = m.tau2;
  hp.gamma1 = m.gamma1;
  hp.gamma2 = m.gamma2;
  if (!m.mu.empty()) {
    if (static_cast<int>(m.mu.size()) != p + 1)
      throw ValidationError("model.mu needs " + std::to_string(p + 1) + " entries");
    hp.mu = Eigen::Map<const Eigen::VectorXd>(m.mu.data(), p + 1);
  }
  if (m.intercept_mean) hp.mu(0) = *m.intercept_mean;
  hp.validate(p);
  return hp;
}

inline ChainConfig make_chain_config(const SamplerOptions& s, const Hyperparameters& hp) {
  ChainConfig cc;
  cc.iterations = s.iterations;
  cc.burn_in = s.burn_in;
  cc.thin = s.thin;
  cc.seed = s.seeds.front();
  cc.start = s.starts.front();
  cc.q_proposal_scale = s.q_proposal_scale;
  cc.hp = hp;
  return cc;
}

inline std::vector<ChainSpec> chain_specs(const SamplerOptions& s) {
  std::vector<ChainSpec> specs;
  for (std::size_t i = 0; i < s.seeds.size(); ++i) specs.push_back({s.seeds[i], s.starts[i]});
  return specs;
}

struct FitResult {
  Dataset data;  // transformed features
  Hyperparameters hp;
  std::vector<ChainOutput> chains;
  ChainOutput pooled;
  InclusionMatrix inclusion;
  CoefficientMatrix beta_mean;
  IndicatorMatrix mpm{1, 1};
  CoefficientMatrix beta_conditional;
  double seconds = 0.0;
};

inline FitResult fit_features(const Dataset& features, const RunConfig& cfg, int workers,
                              bool conditional = true) {
  const auto t0 = std::chrono::steady_clock::now();
  FitResult r;
  r.data = features;
  r.hp = make_hyperparameters(cfg.model, features.c(), features.p());
  const ChainConfig base = make_chain_config(cfg.sampler, r.hp);
  const auto specs = chain_specs(cfg.sampler);
  r.chains = run_chains(features, base, specs, workers);
  r.pooled = pool_chains(r.chains);
  r.inclusion = inclusion_probabilities(r.pooled);
  r.beta_mean = posterior_mean_beta(r.pooled);
  r.mpm = median_probability_model(r.inclusion);
  if (conditional) r.beta_conditional = conditional_beta_estimate(features, r.mpm, base);
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

// ---------------------------------------------------------------------------
// Artifact writers and readers.

inline std::vector<std::string> coefficient_header(const std::vector<std::string>& features,
                                                   const std::string& first = "class") {
  std::vector<std::string> h{first, "intercept"};
  h.insert(h.end(), features.begin(), features.end());
  return h;
}

inline std::vector<std::string> class_rows(const Dataset& ds) {
  return {ds.class_names.begin() + 1, ds.class_names.end()};
}

inline void write_draws_csv(const std::string& path, const std::vector<Eigen::MatrixXd>& draws,
                            const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  const auto header = coefficient_header(ds.predictor_names);
  out << "draw";
  for (const auto& h : header) out << ',' << h;
  out << '\n';
  for (std::size_t t = 0; t < draws.size(); ++t)
    for (Eigen::Index j = 0; j < draws[t].rows(); ++j) {
      out << t << ',' << ds.class_names[static_cast<std::size_t>(j) + 1];
      for (Eigen::Index k = 0; k < draws[t].cols(); ++k) out << ',' << format_number(draws[t](j, k));
      out << '\n';
    }
}

// Reads a draws file written by write_draws_csv into per-draw c x cols blocks.
inline std::vector<Eigen::MatrixXd> read_draws_csv(const std::string& path, int c) {
  const CsvTable t = read_csv_file(path);
  const int cols = static_cast<int>(t.header.size()) - 2;
  if (cols < 1 || t.rows.size() % static_cast<std::size_t>(c) != 0)
    throw ValidationError(path + ": unexpected draws layout");
  std::vector<Eigen::MatrixXd> draws(t.rows.size() / static_cast<std::size_t>(c),
                                     Eigen::MatrixXd(c, cols));
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (int k = 0; k < cols; ++k) {
      const auto v = parse_number(t.rows[r][static_cast<std::size_t>(k) + 2]);
      if (!v) throw ValidationError(path + ": non-numeric entry at row " + std::to_string(r + 1));
      draws[r / c](static_cast<Eigen::Index>(r % c), k) = *v;
    }
  return draws;
}

inline void write_q_trace(const std::string& path, const std::vector<ChainOutput>& chains) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << "chain,draw,q\n";
  for (std::size_t ch = 0; ch < chains.size(); ++ch)
    for (std::size_t t = 0; t < chains[ch].q_draws.size(); ++t)
      out << ch << ',' << t << ',' << format_number(chains[ch].q_draws[t]) << '\n';
}

inline json acceptance_summary(const ChainOutput& ch, const Dataset& ds) {
  json rows = json::array();
  for (std::size_t j = 0; j < ch.accept_counts.size(); ++j) {
    const double rate = ch.proposal_counts[j] > 0
                            ? static_cast<double>(ch.accept_counts[j]) / ch.proposal_counts[j]
                            : 0.0;
    const std::string name = ch.accept_counts.size() == 1 && ds.c() > 1
                                 ? std::string("columns")
                                 : ds.class_names[j + 1];
    rows.push_back({{"move", name}, {"accepted", ch.accept_counts[j]},
                    {"proposed", ch.proposal_counts[j]}, {"rate", rate}});
  }
  const double q_rate = ch.q_proposals > 0 ? static_cast<double>(ch.q_accept) / ch.q_proposals : 0.0;
  return {{"seed", ch.seed},
          {"start", to_string(ch.start)},
          {"draws", ch.size()},
          {"indicator_moves", rows},
          {"q_accepted", ch.q_accept},
          {"q_proposed", ch.q_proposals},
          {"q_rate", q_rate},
          {"variance_floor_hits", ch.variance_floor_hits}};
}

inline void write_agreement(const std::string& dir, const std::vector<ChainOutput>& chains) {
  const AgreementReport rep =
      chain_agreement(inclusion_probabilities(chains[0]), inclusion_probabilities(chains[1]));
  std::ofstream out(dir + "/agreement.csv");
  if (!out) throw ValidationError("cannot write " + dir + "/agreement.csv");
  write_scatter_csv(out, rep.pairs);
  write_json_file(dir + "/agreement.json",
                  {{"max_abs_diff", rep.max_abs_diff}, {"rms_diff", rep.rms_diff}});
}

inline void ensure_directory(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Commands.

inline void cmd_simulate(const RunConfig& cfg) {
  const SimulatedData sim = simulate_scenario(cfg.data.scenario, cfg.data.seed, cfg.data.n);
  ensure_directory(cfg.output.directory);
  std::ofstream out(cfg.output.directory + "/data.csv");
  if (!out) throw ValidationError("cannot write " + cfg.output.directory + "/data.csv");
  write_dataset_csv(out, sim.data, cfg.data.label_column);
  write_matrix_csv_file(cfg.output.directory + "/true_beta.csv",
                        coefficient_header(sim.data.predictor_names), class_rows(sim.data),
                        sim.true_beta);
}

inline FitResult cmd_fit(const RunConfig& cfg) {
  const Dataset raw = load_raw_data(cfg.data);
  const Preprocessor prep = fit_preprocessor(raw, cfg.data);
  const Dataset features = prep.transform(raw);
  FitResult r = fit_features(features, cfg, cfg.workers());

  const std::string& dir = cfg.output.directory;
  ensure_directory(dir);
  const auto header = coefficient_header(features.predictor_names);
  const auto rows = class_rows(features);
  write_matrix_csv_file(dir + "/inclusion.csv", header, rows, r.inclusion);
  write_matrix_csv_file(dir + "/beta_mean.csv", header, rows, r.beta_mean);
  write_matrix_csv_file(dir + "/mpm.csv", header, rows, r.mpm.as_double());
  write_matrix_csv_file(dir + "/beta_conditional.csv", header, rows, r.beta_conditional);
  write_q_trace(dir + "/q_trace.csv", r.chains);
  for (std::size_t ch = 0; ch < r.chains.size(); ++ch) {
    std::vector<Eigen::MatrixXd> m;
    m.reserve(r.chains[ch].m_draws.size());
    for (const auto& d : r.chains[ch].m_draws) m.push_back(d.as_double());
    write_draws_csv(dir + "/chain" + std::to_string(ch) + "_m_draws.csv", m, features);
    write_draws_csv(dir + "/chain" + std::to_string(ch) + "_beta_draws.csv", r.chains[ch].beta_draws,
                    features);
  }
  for (std::size_t ch = r.chains.size();; ++ch) {
    const std::string stale = dir + "/chain" + std::to_string(ch);
    if (!std::filesystem::exists(stale + "_beta_draws.csv")) break;
    std::filesystem::remove(stale + "_beta_draws.csv");
    std::filesystem::remove(stale + "_m_draws.csv");
  }
  if (r.chains.size() >= 2) {
    write_agreement(dir, r.chains);
  } else {
    std::filesystem::remove(dir + "/agreement.csv");
    std::filesystem::remove(dir + "/agreement.json");
  }
  write_json_file(dir + "/preprocessing.json", to_json(prep));

  json chains = json::array();
  for (const auto& ch : r.chains) chains.push_back(acceptance_summary(ch, features));
  write_json_file(dir + "/metadata.json",
                  {{"config", to_json(cfg)},
                   {"class_names", features.class_names},
                   {"feature_names", features.predictor_names},
                   {"n", features.n()},
                   {"c", features.c()},
                   {"p", features.p()},
                   {"chains", chains},
                   {"wall_seconds", r.seconds}});
  return r;
}

// Reads every chain's coefficient draws from a fit directory.
struct FittedArtifacts {
  json metadata;
  Preprocessor prep;
  std::vector<std::string> class_names;
  std::vector<CoefficientMatrix> beta_draws;
  std::vector<std::vector<IndicatorMatrix>> m_draws;  // per chain
};

inline FittedArtifacts load_fit(const std::string& dir, bool indicators = false) {
  FittedArtifacts a;
  a.metadata = read_json_file(dir + "/metadata.json");
  a.prep = preprocessor_from_json(read_json_file(dir + "/preprocessing.json"));
  try {
    a.class_names = a.metadata.at("class_names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ValidationError(dir + "/metadata.json: " + e.what());
  }
  const int c = static_cast<int>(a.class_names.size()) - 1;
  const int p = static_cast<int>(a.prep.feature_names.size());
  for (int ch = 0;; ++ch) {
    const std::string base = dir + "/chain" + std::to_string(ch);
    if (!std::filesystem::exists(base + "_beta_draws.csv")) break;
    auto b = read_draws_csv(base + "_beta_draws.csv", c);
    for (auto& m : b) {
      if (m.cols() != p + 1) throw ValidationError(base + "_beta_draws.csv: wrong column count");
      a.beta_draws.push_back(std::move(m));
    }
    if (indicators) {
      std::vector<IndicatorMatrix> ms;
      for (const auto& m : read_draws_csv(base + "_m_draws.csv", c)) {
        IndicatorMatrix im(c, p);
        for (int j = 0; j < c; ++j)
          for (int k = 1; k <= p; ++k) im.set(j, k, m(j, k) != 0.0);
        ms.push_back(im);
      }
      a.m_draws.push_back(std::move(ms));
    }
  }
  if (a.beta_draws.empty()) throw ValidationError(dir + ": no chain draws found");
  return a;
}

// Predictor matrix from a CSV with the fitted input columns (matched by name);
// the label column is optional.
inline Eigen::MatrixXd read_predictors_for(const std::string& path,
                                           const std::vector<std::string>& names,
                                           const std::string& label_column,
                                           std::vector<std::string>* labels) {
  const CsvTable t = read_csv_file(path);
  const int label_col = t.column(label_column);
  const std::size_t given = t.header.size() - (label_col >= 0 ? 1 : 0);
  if (given != names.size())
    throw ValidationError(path + ": " + std::to_string(given) + " predictor columns, fitted model has " +
                          std::to_string(names.size()));
  std::vector<int> cols;
  for (const auto& name : names) {
    const int k = t.column(name);
    if (k < 0) throw ValidationError(path + ": missing predictor column '" + name + "'");
    cols.push_back(k);
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t a = 0; a < cols.size(); ++a) {
      const auto v = parse_number(t.rows[r][static_cast<std::size_t>(cols[a])]);
      if (!v)
        throw ValidationError(path + ": missing or non-numeric value at data row " + std::to_string(r + 1) +
                              ", column '" + names[a] + "'");
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(a)) = *v;
    }
    if (labels && label_col >= 0) labels->push_back(t.rows[r][static_cast<std::size_t>(label_col)]);
  }
  return x;
}

inline Eigen::MatrixXd predict_rows(std::span<const CoefficientMatrix> draws, const Eigen::MatrixXd& x) {
  const Eigen::Index c = draws.front().rows();
  Eigen::MatrixXd probs(x.rows(), c + 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::VectorXd row(x.cols() + 1);
    row(0) = 1.0;
    row.tail(x.cols()) = x.row(i).transpose();
    probs.row(i) = predictive_distribution(draws, row).transpose();
  }
  return probs;
}

inline Eigen::MatrixXd cmd_predict(const RunConfig& cfg) {
  if (cfg.predict.fit_dir.empty() || cfg.predict.input.empty())
    throw ValidationError("predict needs predict.fit_dir and predict.input");
  const FittedArtifacts fit = load_fit(cfg.predict.fit_dir);
  std::vector<std::string> labels;
  const Eigen::MatrixXd raw =
      read_predictors_for(cfg.predict.input, fit.prep.input_names, cfg.data.label_column, &labels);
  const Eigen::MatrixXd probs = predict_rows(fit.beta_draws, fit.prep.apply(raw));

  ensure_directory(cfg.output.directory);
  const std::string path = cfg.output.directory + "/predictions.csv";
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << "row";
  for (const auto& name : fit.class_names) out << ",p_" << name;
  out << ",predicted";
  if (!labels.empty()) out << ',' << cfg.data.label_column;
  out << '\n';
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    out << i;
    for (Eigen::Index y = 0; y < probs.cols(); ++y) out << ',' << format_number(probs(i, y));
    out << ',' << fit.class_names[static_cast<std::size_t>(modal_class(probs.row(i).transpose()))];
    if (!labels.empty()) out << ',' << labels[static_cast<std::size_t>(i)];
    out << '\n';
  }
  return probs;
}

struct CvUnit {
  int unit = 0;
  int split = 0;
  int truth = 0;
  int predicted = 0;
  double p_true = 0.0;
};

struct CvReport {
  std::vector<int> tested;
  std::vector<int> errors;
  std::vector<CvUnit> units;
  double overall_rate = 0.0;
};

inline std::vector<Split> cv_splits(const CvOptions& o, int n) {
  if (o.mode == "kfold") return kfold_splits(n, o.k, o.seed);
  if (o.mode == "loocv") return loocv_splits(n);
  if (o.mode == "repeated-split") {
    if (o.count < 1) throw ValidationError("cv.count must be positive");
    std::vector<Split> out;
    for (int s = 0; s < o.count; ++s)
      out.push_back(train_test_split(n, o.fraction, o.seed + static_cast<std::uint64_t>(s)));
    return out;
  }
  throw ValidationError("unknown cv.mode '" + o.mode + "' (expected kfold, loocv or repeated-split)");
}

inline CvReport cmd_cv(const RunConfig& cfg) {
  const Dataset raw = load_raw_data(cfg.data);
  const auto splits = cv_splits(cfg.cv, raw.n());
  std::vector<std::vector<CvUnit>> per_split(splits.size());
  parallel_for(static_cast<int>(splits.size()), cfg.workers(), [&](int s) {
    const Dataset train_raw = raw.subset(splits[s].train);
    const Dataset test_raw = raw.subset(splits[s].test);
    const Preprocessor prep = fit_preprocessor(train_raw, cfg.data);
    const FitResult fit = fit_features(prep.transform(train_raw), cfg, 1, false);
    const Eigen::MatrixXd probs =
        predict_rows(fit.pooled.beta_draws, prep.apply(test_raw.design.rightCols(test_raw.p())));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
      const int truth = test_raw.labels[static_cast<std::size_t>(i)];
      per_split[s].push_back({splits[s].test[static_cast<std::size_t>(i)], s, truth,
                              modal_class(probs.row(i).transpose()), probs(i, truth)});
    }
  });

  CvReport rep;
  long wrong = 0, total = 0;
  for (const auto& units : per_split) {
    int errs = 0;
    for (const auto& u : units) {
      errs += u.predicted != u.truth ? 1 : 0;
      rep.units.push_back(u);
    }
    rep.tested.push_back(static_cast<int>(units.size()));
    rep.errors.push_back(errs);
    wrong += errs;
    total += static_cast<long>(units.size());
  }
  rep.overall_rate = total > 0 ? static_cast<double>(wrong) / total : 0.0;

  const std::string& dir = cfg.output.directory;
  ensure_directory(dir);
  {
    std::ofstream out(dir + "/cv_splits.csv");
    if (!out) throw ValidationError("cannot write " + dir + "/cv_splits.csv");
    out << "split,tested,correct,errors,rate\n";
    for (std::size_t s = 0; s < rep.tested.size(); ++s)
      out << s << ',' << rep.tested[s] << ',' << rep.tested[s] - rep.errors[s] << ',' << rep.errors[s]
          << ',' << format_number(rep.tested[s] ? static_cast<double>(rep.errors[s]) / rep.tested[s] : 0.0)
          << '\n';
  }
  {
    std::ofstream out(dir + "/cv_units.csv");
    if (!out) throw ValidationError("cannot write " + dir + "/cv_units.csv");
    out << "unit,split,truth,predicted,p_true\n";
    for (const auto& u : rep.units)
      out << u.unit << ',' << u.split << ',' << raw.class_names[u.truth] << ','
          << raw.class_names[u.predicted] << ',' << format_number(u.p_true) << '\n';
  }
  write_json_file(dir + "/cv_summary.json", {{"config", to_json(cfg)},
                                             {"splits", rep.tested.size()},
                                             {"tested", total},
                                             {"errors", wrong},
                                             {"misclassification_rate", rep.overall_rate}});
  return rep;
}

inline void cmd_diagnose(const RunConfig& cfg) {
  if (cfg.predict.fit_dir.empty()) throw ValidationError("diagnose needs predict.fit_dir");
  const FittedArtifacts fit = load_fit(cfg.predict.fit_dir, true);
  const std::string& dir = cfg.output.directory;
  ensure_directory(dir);
  std::ofstream out(dir + "/switch_rates.csv");
  if (!out) throw ValidationError("cannot write " + dir + "/switch_rates.csv");
  out.precision(17);
  out << "chain,row,col,x,y\n";
  for (std::size_t ch = 0; ch < fit.m_draws.size(); ++ch) {
    const SwitchMatrix s = switch_rates(fit.m_draws[ch]);
    const Eigen::MatrixXd ref = iid_switch_reference(inclusion_probabilities(fit.m_draws[ch]));
    for (const auto& pt : scatter_pairs(ref, s))
      out << ch << ',' << pt.row << ',' << pt.col << ',' << pt.x << ',' << pt.y << '\n';
  }
  if (fit.m_draws.size() < 2) {
    std::clog << "warning: single chain; skipping chain agreement\n";
    return;
  }
  const AgreementReport rep = chain_agreement(inclusion_probabilities(fit.m_draws[0]),
                                              inclusion_probabilities(fit.m_draws[1]));
  std::ofstream agree(dir + "/agreement.csv");
  write_scatter_csv(agree, rep.pairs);
  write_json_file(dir + "/agreement.json",
                  {{"max_abs_diff", rep.max_abs_diff}, {"rms_diff", rep.rms_diff}});
}

struct ScreenRow {
  std::string predictor;
  Eigen::VectorXd inclusion;  // per non-reference class
  bool retained = false;
};

inline std::vector<ScreenRow> cmd_screen(const RunConfig& cfg) {
  const Dataset raw = load_raw_data(cfg.data);
  if (cfg.data.rbf.knots > 0) throw ValidationError("screen works on raw predictors; disable data.rbf");
  std::vector<ScreenRow> rows(static_cast<std::size_t>(raw.p()));
  parallel_for(raw.p(), cfg.workers(), [&](int k) {
    Dataset single;
    single.design.resize(raw.n(), 2);
    single.design.col(0).setOnes();
    single.design.col(1) = raw.design.col(k + 1);
    single.labels = raw.labels;
    single.class_names = raw.class_names;
    single.predictor_names = {raw.predictor_names[static_cast<std::size_t>(k)]};
    RunConfig one = cfg;
    one.model.mu.clear();
    const Preprocessor prep = fit_preprocessor(single, cfg.data);
    const FitResult fit = fit_features(prep.transform(single), one, 1, false);
    ScreenRow& row = rows[static_cast<std::size_t>(k)];
    row.predictor = single.predictor_names[0];
    row.inclusion = fit.inclusion.col(1);
    row.retained = (row.inclusion.array() > cfg.screen.threshold).any();
  });

  const std::string& dir = cfg.output.directory;
  ensure_directory(dir);
  std::ofstream out(dir + "/screen.csv");
  if (!out) throw ValidationError("cannot write " + dir + "/screen.csv");
  out << "predictor";
  for (int j = 1; j <= raw.c(); ++j) out << ",inclusion_" << raw.class_names[j];
  if (raw.c() >= 2) out << ",difference";
  out << ",retained\n";
  for (const auto& r : rows) {
    out << r.predictor;
    for (Eigen::Index j = 0; j < r.inclusion.size(); ++j) out << ',' << format_number(r.inclusion(j));
    if (raw.c() >= 2) out << ',' << format_number(r.inclusion(0) - r.inclusion(1));
    out << ',' << (r.retained ? 1 : 0) << '\n';
  }
  return rows;
}

}  // namespace csps
