#include "spheremap/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "spheremap/io.hpp"
#include "spheremap/parallel.hpp"
#include "spheremap/pipeline.hpp"
#include "spheremap/sim.hpp"

namespace spheremap::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kFormatVersion = 1;

void apply_thread_cap(int threads) {
  if (threads > 0) {
    set_thread_budget(threads);
    return;
  }
  if (const char* env = std::getenv("SPHEREMAP_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) set_thread_budget(v);
  }
}

std::string out_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InvalidInputError("cannot create output directory " + dir);
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot open for writing: " + path);
  out << doc.dump(2) << '\n';
  if (!out) throw InvalidInputError("write failed: " + path);
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open for reading: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw InvalidInputError(path + ": " + e.what());
  }
  return doc;
}

sim::Scenario parse_scenario(const std::string& s) {
  if (s == "standard") return sim::Scenario::Standard;
  if (s == "permutation-only") return sim::Scenario::PermutationOnly;
  if (s == "low-noise") return sim::Scenario::LowNoise;
  throw InvalidInputError("unknown scenario '" + s +
                          "' (expected standard|permutation-only|low-noise)");
}

ThresholdConfig::Mode parse_threshold_mode(const std::string& s) {
  if (s == "fixed") return ThresholdConfig::Mode::Fixed;
  if (s == "group-size") return ThresholdConfig::Mode::GroupSize;
  if (s == "prior-fraction") return ThresholdConfig::Mode::PriorFraction;
  if (s == "flatness") return ThresholdConfig::Mode::Flatness;
  throw InvalidInputError("unknown threshold mode '" + s +
                          "' (expected fixed|group-size|prior-fraction|flatness)");
}

RefineMode parse_refine_mode(const std::string& s) {
  if (s == "matched") return RefineMode::MatchedOnly;
  if (s == "corrected") return RefineMode::CorrectedOneToOne;
  throw InvalidInputError("unknown refine mode '" + s + "' (expected matched|corrected)");
}

std::vector<double> parse_grid_spec(const std::string& spec) {
  // "lo:hi:count" or a comma-separated list.
  if (spec.find(':') != std::string::npos) {
    double lo, hi;
    int count;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%d", &lo, &hi, &count) != 3 || count < 1)
      throw InvalidInputError("bad --lambda-grid spec '" + spec + "' (want lo:hi:count)");
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
      grid[static_cast<std::size_t>(i)] =
          count == 1 ? lo : lo + i * (hi - lo) / static_cast<double>(count - 1);
    return grid;
  }
  std::vector<double> grid;
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t comma = spec.find(',', start);
    const std::string tok =
        spec.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!tok.empty()) grid.push_back(io::parse_double(tok, "--lambda-grid"));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (grid.empty()) throw InvalidInputError("empty --lambda-grid");
  return grid;
}

std::vector<double> read_priors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open for reading: " + path);
  std::vector<double> priors;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    priors.push_back(io::parse_double(line, path));
  }
  if (priors.empty()) throw InvalidInputError(path + ": no priors");
  return priors;
}

json sim_config_json(const sim::SimConfig& config) {
  const char* scenario = config.scenario == sim::Scenario::Standard ? "standard"
                         : config.scenario == sim::Scenario::PermutationOnly
                             ? "permutation-only"
                             : "low-noise";
  return {{"n", config.n},
          {"p", config.p},
          {"kappa", config.kappa},
          {"K", config.groups},
          {"alpha", config.alpha},
          {"mixture_weight_ratio", config.mixture_weight_ratio},
          {"group_size_log_sigma", config.group_size_log_sigma},
          {"min_beta", config.min_beta},
          {"seed", config.seed},
          {"scenario", scenario}};
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  sim::SimConfig config;
  std::string scenario = "standard";
  std::string out_dir;
  bool binary = false;
};

void run_simulate(const SimulateArgs& args) {
  sim::SimConfig config = args.config;
  config.scenario = parse_scenario(args.scenario);
  if (config.scenario == sim::Scenario::LowNoise && config.kappa == 150.0) config.kappa = 3000.0;
  config.validate();

  const sim::GroundTruth truth = sim::generate(config);
  ensure_out_dir(args.out_dir);
  const char* ext = args.binary ? ".bin" : ".tsv";
  if (args.binary) {
    io::write_matrix_binary(out_path(args.out_dir, std::string("x") + ext), truth.x.matrix());
    io::write_matrix_binary(out_path(args.out_dir, std::string("y") + ext), truth.y.matrix());
    io::write_matrix_binary(out_path(args.out_dir, std::string("w_true") + ext),
                            truth.w.matrix());
  } else {
    io::write_matrix(out_path(args.out_dir, std::string("x") + ext), truth.x.matrix());
    io::write_matrix(out_path(args.out_dir, std::string("y") + ext), truth.y.matrix());
    io::write_matrix(out_path(args.out_dir, std::string("w_true") + ext), truth.w.matrix());
  }
  io::write_mapping(out_path(args.out_dir, "pi_true.tsv"), truth.pi);
  io::write_groups(out_path(args.out_dir, "groups.tsv"), truth.partition);

  json manifest = {{"format_version", kFormatVersion},
                   {"config", sim_config_json(config)},
                   {"n_mismatch_quota", config.n_mismatch()},
                   {"n_permuted", truth.n_permuted},
                   {"n_weighted", truth.n_weighted},
                   {"group_sizes", truth.partition.sizes()},
                   {"log", truth.log}};
  write_json(out_path(args.out_dir, "manifest.json"), manifest);
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  std::string x_path, y_path, groups_path, out_dir;
  bool normalize = false;
  bool binary = false;
  double lambda = 0.0;  // 0 = cross-validate
  std::string grid_spec;
  int folds = 5;
  std::string threshold_mode = "fixed";
  std::string priors_path;
  std::string refine = "matched";
  int iterations = 1;
  std::uint64_t seed = 0;
};

void run_fit(const FitArgs& args) {
  Matrix x_raw = io::read_matrix(args.x_path);
  Matrix y_raw = io::read_matrix(args.y_path);
  const GroupPartition partition = io::read_groups(args.groups_path);
  if (x_raw.rows() != y_raw.rows() || x_raw.cols() != y_raw.cols())
    throw InvalidInputError("fit: x and y shapes differ");
  if (partition.rows() != x_raw.rows())
    throw InvalidInputError("fit: groups file covers " + std::to_string(partition.rows()) +
                            " rows, matrices have " + std::to_string(x_raw.rows()));

  auto to_spherical = [&](Matrix m, const std::string& name) {
    if (args.normalize) return SphericalMatrix::normalizing(m);
    try {
      return SphericalMatrix(std::move(m), 1e-6);
    } catch (const InvalidInputError& e) {
      throw InvalidInputError(name + ": " + e.what() + " (pass --normalize to renormalize)");
    }
  };
  const SphericalMatrix x = to_spherical(std::move(x_raw), args.x_path);
  const SphericalMatrix y = to_spherical(std::move(y_raw), args.y_path);

  FitConfig config;
  config.threshold.mode = parse_threshold_mode(args.threshold_mode);
  if (config.threshold.mode == ThresholdConfig::Mode::PriorFraction) {
    if (args.priors_path.empty())
      throw InvalidInputError("fit: prior-fraction mode needs --priors");
    config.threshold.group_priors = read_priors(args.priors_path);
  }
  if (args.lambda > 0.0) config.fixed_lambda = args.lambda;
  if (!args.grid_spec.empty()) config.lambda_grid = parse_grid_spec(args.grid_spec);
  config.cv_folds = args.folds;
  config.max_iterations = args.iterations;
  config.refine = parse_refine_mode(args.refine);
  config.seed = args.seed;

  const FitReport report = fit(x, y, partition, config);

  ensure_out_dir(args.out_dir);
  const char* ext = args.binary ? ".bin" : ".tsv";
  if (args.binary) {
    io::write_matrix_binary(out_path(args.out_dir, std::string("w1") + ext),
                            report.w1.matrix());
    io::write_matrix_binary(out_path(args.out_dir, std::string("w2") + ext),
                            report.w2.matrix());
  } else {
    io::write_matrix(out_path(args.out_dir, std::string("w1") + ext), report.w1.matrix());
    io::write_matrix(out_path(args.out_dir, std::string("w2") + ext), report.w2.matrix());
  }
  io::write_mapping(out_path(args.out_dir, "pi_hat.tsv"), report.pi_hat);

  json cv = json::array();
  for (const auto& e : report.cv_table) cv.push_back({{"lambda", e.lambda}, {"loss", e.loss}});
  json iters = json::array();
  for (const auto& it : report.iterations)
    iters.push_back({{"lambda", it.lambda},
                     {"matched", it.matched},
                     {"permuted", it.permuted},
                     {"weighted", it.weighted},
                     {"unmapped", it.unmapped},
                     {"model_loss", it.model_loss},
                     {"converged", it.converged},
                     {"max_weight_delta", it.max_weight_delta}});
  json doc = {{"format_version", kFormatVersion},
              {"lambda", report.lambda},
              {"cv_table", cv},
              {"counts",
               {{"matched", report.matched_count},
                {"permuted", report.permuted_count},
                {"weighted", report.weighted_count},
                {"unmapped", report.unmapped_count}}},
              {"losses",
               {{"w1", report.loss_w1},
                {"w2_matched", report.loss_w2_matched},
                {"model", report.loss_model}}},
              {"sigma_p_x", report.sigma_p_x},
              {"gamma_hat_initial", report.gamma_hat_initial},
              {"gamma_hat_refined", report.gamma_hat_refined},
              {"iterations", iters},
              {"runtime_seconds", report.runtime_seconds}};
  write_json(out_path(args.out_dir, "report.json"), doc);
}

// ---------------------------------------------------------------------------
// embed

struct EmbedArgs {
  std::string input_path, vocab_path, out_dir;
  int k = 10;
  double alpha = 0.75;
  Index dim = 300;
  bool binary = false;
};

void run_embed(const EmbedArgs& args) {
  const auto table = io::read_cooccurrence(args.input_path, args.vocab_path);
  const auto sppmi = embedding::build_sppmi(table, args.k, args.alpha);
  const auto result = embedding::embed(sppmi, args.dim);

  ensure_out_dir(args.out_dir);
  if (args.binary) {
    io::write_matrix_binary(out_path(args.out_dir, "embedding.bin"),
                            result.vectors.matrix());
  } else {
    io::write_matrix(out_path(args.out_dir, "embedding.tsv"), result.vectors.matrix());
  }
  json kept = json::array();
  for (Index i : result.kept) kept.push_back(table.vocabulary[static_cast<std::size_t>(i)]);
  json excluded = json::array();
  for (Index i : result.excluded)
    excluded.push_back(table.vocabulary[static_cast<std::size_t>(i)]);
  json zero_marginal = json::array();
  for (Index i : sppmi.zero_marginal)
    zero_marginal.push_back(table.vocabulary[static_cast<std::size_t>(i)]);
  write_json(out_path(args.out_dir, "exclusions.json"),
             {{"format_version", kFormatVersion},
              {"k", args.k},
              {"alpha", args.alpha},
              {"dim", args.dim},
              {"kept", kept},
              {"excluded", excluded},
              {"zero_marginal_items", zero_marginal}});
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string w1_path, w2_path, pi_hat_path, groups_path, w_true_path, pi_true_path;
  std::string sweep_config;
  std::string out_dir;
};

FitConfig fit_config_from_json(const json& doc) {
  FitConfig config;
  if (doc.contains("folds")) config.cv_folds = doc["folds"].get<int>();
  if (doc.contains("iterations")) config.max_iterations = doc["iterations"].get<int>();
  if (doc.contains("refine")) config.refine = parse_refine_mode(doc["refine"].get<std::string>());
  if (doc.contains("threshold_mode"))
    config.threshold.mode = parse_threshold_mode(doc["threshold_mode"].get<std::string>());
  if (doc.contains("lambda") && !doc["lambda"].is_null())
    config.fixed_lambda = doc["lambda"].get<double>();
  if (doc.contains("grid")) config.lambda_grid = doc["grid"].get<std::vector<double>>();
  return config;
}

sim::SimConfig sim_config_from_json(const json& doc) {
  sim::SimConfig config;
  if (doc.contains("n")) config.n = doc["n"].get<Index>();
  if (doc.contains("p")) config.p = doc["p"].get<Index>();
  if (doc.contains("kappa")) config.kappa = doc["kappa"].get<double>();
  if (doc.contains("K")) config.groups = doc["K"].get<Index>();
  if (doc.contains("alpha")) config.alpha = doc["alpha"].get<double>();
  if (doc.contains("mixture_weight_ratio"))
    config.mixture_weight_ratio = doc["mixture_weight_ratio"].get<double>();
  if (doc.contains("group_size_log_sigma"))
    config.group_size_log_sigma = doc["group_size_log_sigma"].get<double>();
  if (doc.contains("min_beta")) config.min_beta = doc["min_beta"].get<double>();
  if (doc.contains("seed")) config.seed = doc["seed"].get<std::uint64_t>();
  if (doc.contains("scenario")) config.scenario = parse_scenario(doc["scenario"].get<std::string>());
  return config;
}

void run_eval(const EvalArgs& args) {
  ensure_out_dir(args.out_dir);
  if (!args.sweep_config.empty()) {
    const json doc = read_json(args.sweep_config);
    if (!doc.contains("axis") || !doc["axis"].contains("param") ||
        !doc["axis"].contains("values"))
      throw InvalidInputError(args.sweep_config + ": needs axis.param and axis.values");
    sim::SweepAxis axis;
    const std::string param = doc["axis"]["param"].get<std::string>();
    if (param == "alpha") axis.param = sim::SweepAxis::Param::Alpha;
    else if (param == "n") axis.param = sim::SweepAxis::Param::N;
    else if (param == "K") axis.param = sim::SweepAxis::Param::K;
    else if (param == "kappa") axis.param = sim::SweepAxis::Param::Kappa;
    else throw InvalidInputError("unknown sweep axis '" + param + "'");
    axis.values = doc["axis"]["values"].get<std::vector<double>>();
    const sim::SimConfig base =
        doc.contains("base") ? sim_config_from_json(doc["base"]) : sim::SimConfig{};
    const int replicates = doc.contains("replicates") ? doc["replicates"].get<int>() : 10;
    const FitConfig fc = doc.contains("fit") ? fit_config_from_json(doc["fit"]) : FitConfig{};

    const sim::SweepTable table = sim::run_sweep(base, axis, replicates, fc);
    io::write_sweep_tsv(out_path(args.out_dir, "sweep.tsv"), table);
    io::write_sweep_json(out_path(args.out_dir, "sweep.json"), table);
    return;
  }

  if (args.w1_path.empty() || args.w2_path.empty() || args.pi_hat_path.empty() ||
      args.groups_path.empty() || args.w_true_path.empty() || args.pi_true_path.empty())
    throw InvalidInputError(
        "eval: need --w1 --w2 --pi-hat --groups --w-true --pi-true (or --sweep)");

  const GroupPartition partition = io::read_groups(args.groups_path);
  const OrthogonalMatrix w1(io::read_matrix(args.w1_path));
  const OrthogonalMatrix w2(io::read_matrix(args.w2_path));
  const OrthogonalMatrix w_true(io::read_matrix(args.w_true_path));
  const BlockMappingMatrix pi_hat = io::read_mapping(args.pi_hat_path, partition);
  const BlockMappingMatrix pi_true = io::read_mapping(args.pi_true_path, partition);

  const MetricSet m = evaluate_estimates(w1, w2, pi_hat, w_true, pi_true);
  write_json(out_path(args.out_dir, "metrics.json"),
             {{"format_version", kFormatVersion},
              {"w1_mse", m.w1_mse},
              {"w1_mse_per_p", m.w1_mse_per_p},
              {"w2_mse", m.w2_mse},
              {"w2_mse_per_p", m.w2_mse_per_p},
              {"match_rate", m.match_rate},
              {"one_to_many_weight_mse", m.one_to_many_weight_mse},
              {"detection_rate", m.detection_rate}});
  std::ofstream tsv(out_path(args.out_dir, "metrics.tsv"));
  tsv << "w1_mse\tw1_mse_per_p\tw2_mse\tw2_mse_per_p\tmatch_rate\tone_to_many_weight_mse"
         "\tdetection_rate\n"
      << io::format_double(m.w1_mse) << '\t' << io::format_double(m.w1_mse_per_p) << '\t'
      << io::format_double(m.w2_mse) << '\t' << io::format_double(m.w2_mse_per_p) << '\t'
      << io::format_double(m.match_rate) << '\t'
      << io::format_double(m.one_to_many_weight_mse) << '\t'
      << io::format_double(m.detection_rate) << '\n';
  if (!tsv) throw InvalidInputError("write failed: metrics.tsv");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("spheremap");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Spherical regression under mismatch: simulate, fit, embed, eval"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (or SPHEREMAP_THREADS)");

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim_cmd->add_option("--n", sim_args.config.n, "Number of rows");
  sim_cmd->add_option("--p", sim_args.config.p, "Embedding dimension");
  sim_cmd->add_option("--kappa", sim_args.config.kappa, "vMF concentration");
  sim_cmd->add_option("--alpha", sim_args.config.alpha, "Mismatch exponent (n_mis = n^alpha)");
  sim_cmd->add_option("--K", sim_args.config.groups, "Number of groups");
  sim_cmd->add_option("--seed", sim_args.config.seed, "Random seed");
  sim_cmd->add_option("--mixture-ratio", sim_args.config.mixture_weight_ratio,
                      "Own-group mixture weight vs the others");
  sim_cmd->add_option("--size-spread", sim_args.config.group_size_log_sigma,
                      "Log-normal spread of group sizes");
  sim_cmd->add_option("--min-beta", sim_args.config.min_beta,
                      "Minimum beta of planted weighted rows");
  sim_cmd->add_option("--scenario", sim_args.scenario,
                      "standard|permutation-only|low-noise");
  sim_cmd->add_flag("--binary", sim_args.binary, "Binary matrix files");
  sim_cmd->add_option("--out", sim_args.out_dir, "Output directory")->required();

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Run the three-step estimator");
  fit_cmd->add_option("--x", fit_args.x_path, "Predictor matrix file")->required();
  fit_cmd->add_option("--y", fit_args.y_path, "Response matrix file")->required();
  fit_cmd->add_option("--groups", fit_args.groups_path, "Group file")->required();
  fit_cmd->add_flag("--normalize", fit_args.normalize, "Renormalize rows to unit length");
  fit_cmd->add_option("--lambda", fit_args.lambda, "Fixed threshold (skips cross-validation)");
  fit_cmd->add_option("--lambda-grid", fit_args.grid_spec, "lo:hi:count or comma list");
  fit_cmd->add_option("--folds", fit_args.folds, "Cross-validation folds");
  fit_cmd->add_option("--threshold-mode", fit_args.threshold_mode,
                      "fixed|group-size|prior-fraction|flatness");
  fit_cmd->add_option("--priors", fit_args.priors_path, "eta_k per line, group order");
  fit_cmd->add_option("--refine", fit_args.refine, "matched|corrected");
  fit_cmd->add_option("--iterations", fit_args.iterations, "Max iterations of steps 2-3");
  fit_cmd->add_option("--seed", fit_args.seed, "Seed for fold assignment");
  fit_cmd->add_flag("--binary", fit_args.binary, "Binary matrix outputs");
  fit_cmd->add_option("--out", fit_args.out_dir, "Output directory")->required();

  EmbedArgs embed_args;
  auto* embed_cmd = app.add_subcommand("embed", "Build embeddings from co-occurrence counts");
  embed_cmd->add_option("--input", embed_args.input_path, "Triplet file")->required();
  embed_cmd->add_option("--vocab", embed_args.vocab_path, "Vocabulary manifest (optional)");
  embed_cmd->add_option("--k", embed_args.k, "SPPMI shift (negative samples)");
  embed_cmd->add_option("--alpha", embed_args.alpha, "Context smoothing exponent");
  embed_cmd->add_option("--dim", embed_args.dim, "Embedding dimension");
  embed_cmd->add_flag("--binary", embed_args.binary, "Binary matrix output");
  embed_cmd->add_option("--out", embed_args.out_dir, "Output directory")->required();

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate fits against ground truth, or sweep");
  eval_cmd->add_option("--w1", eval_args.w1_path, "Estimated initial translation");
  eval_cmd->add_option("--w2", eval_args.w2_path, "Estimated refined translation");
  eval_cmd->add_option("--pi-hat", eval_args.pi_hat_path, "Estimated mapping file");
  eval_cmd->add_option("--groups", eval_args.groups_path, "Group file");
  eval_cmd->add_option("--w-true", eval_args.w_true_path, "True translation");
  eval_cmd->add_option("--pi-true", eval_args.pi_true_path, "True mapping file");
  eval_cmd->add_option("--sweep", eval_args.sweep_config, "Sweep configuration JSON");
  eval_cmd->add_option("--out", eval_args.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    apply_thread_cap(threads);
    if (sim_cmd->parsed()) run_simulate(sim_args);
    if (fit_cmd->parsed()) run_fit(fit_args);
    if (embed_cmd->parsed()) run_embed(embed_args);
    if (eval_cmd->parsed()) run_eval(eval_args);
  } catch (const InvalidInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ModelError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace spheremap::cli
