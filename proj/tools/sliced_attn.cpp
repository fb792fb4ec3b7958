// Command-line front end: forward evaluation on user data, scaling
// benchmarks, gradient checks, kernel diagnostics, constructive matching
// demos, and heatmap fields.
//
// Exit codes: 0 ok, 1 property failure, 2 parse failure, 3 shape/config
// mismatch, 4 numeric failure.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slicedattn/attention.hpp"
#include "slicedattn/bench.hpp"
#include "slicedattn/core.hpp"
#include "slicedattn/diagnostics.hpp"
#include "slicedattn/expressivity.hpp"
#include "slicedattn/gradients.hpp"
#include "slicedattn/io.hpp"
#include "slicedattn/model.hpp"
#include "slicedattn/reference.hpp"

namespace sa = slicedattn;

namespace {

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("SLICED_ATTN_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw sa::ParseError("SLICED_ATTN_SEED is not an integer");
    }
  }
  return 0;
}

sa::Variant parse_variant(const std::string& name) {
  if (name == "relu") return sa::Variant::Relu;
  if (name == "bump") return sa::Variant::Bump;
  throw sa::ParseError("unknown variant '" + name + "'");
}

std::vector<std::size_t> parse_n_grid(const std::string& spec) {
  std::vector<std::size_t> grid;
  std::istringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto caret = item.find('^');
      if (caret != std::string::npos) {
        const unsigned long base = std::stoul(item.substr(0, caret));
        const unsigned long exp = std::stoul(item.substr(caret + 1));
        std::size_t v = 1;
        for (unsigned long i = 0; i < exp; ++i) v *= base;
        grid.push_back(v);
      } else {
        grid.push_back(std::stoul(item));
      }
    } catch (const std::exception&) {
      throw sa::ParseError("bad n-grid entry '" + item + "'");
    }
  }
  if (grid.empty()) throw sa::ParseError("empty n-grid");
  return grid;
}

void emit_report(const sa::json& report, const std::string& output) {
  const std::string text = report.dump(2) + "\n";
  if (output.empty())
    std::cout << text;
  else
    sa::write_file(output, text);
}

// ---------------------------------------------------------------------------
// forward

struct ForwardArgs {
  std::string input, params, output;
  std::string variant = "relu";
  double bandwidth = 1.0;
  std::optional<double> epsilon;
  bool no_centering = false;
  bool residual = false;
  std::string dtype = "f64";
  int threads = 1;
};

template <class T>
void run_forward(const ForwardArgs& args) {
  const auto seq = sa::read_tokens<T>(args.input);
  const auto heads = sa::read_params<T>(args.params);
  sa::KernelConfig cfg;
  cfg.epsilon = args.epsilon;
  cfg.centering = !args.no_centering;
  cfg.bandwidth = args.bandwidth;
  cfg.threads = args.threads;
  const sa::Variant variant = parse_variant(args.variant);

  sa::Matrix<T> out(seq.rows, seq.cols);
  std::vector<T> mixed(seq.cols);
  for (const auto& head : heads) {
    const sa::Matrix<T> a = sa::attention_forward(seq, head, cfg, variant);
    for (std::size_t i = 0; i < seq.rows; ++i) {
      if (head.mixer.empty()) {
        sa::axpy(T(1), a.row(i), out.row(i), seq.cols);
      } else {
        sa::matvec(head.mixer, a.row(i), mixed.data());
        sa::axpy(T(1), mixed.data(), out.row(i), seq.cols);
      }
    }
  }
  if (args.residual)
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += seq.data[i];
  sa::write_matrix(args.output, out);
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
  std::size_t n = 16, d = 4;
  double h = 1e-5;
  int directions = 60;
  double min_gap = 1e-3;
  double tolerance = 1e-5;
  std::optional<std::uint64_t> seed;
  std::string output;
  std::string variant = "both";
};

// Random instance with a guaranteed score gap; regenerates until the
// piecewise-linear regions are comfortably wide for the step size.
void make_gradcheck_instance(std::size_t n, std::size_t d, sa::Variant variant, const sa::KernelConfig& cfg,
                             double min_gap, sa::Rng& rng, sa::TokenSequence<double>& seq,
                             sa::HeadParams<double>& head, sa::Matrix<double>& upstream) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    seq = sa::random_normal_matrix<double>(rng, n, d);
    head.q = {sa::random_normal_matrix<double>(rng, d, d, scale), sa::random_normal_vector<double>(rng, d, 0.1)};
    head.k = {sa::random_normal_matrix<double>(rng, d, d, scale), sa::random_normal_vector<double>(rng, d, 0.1)};
    head.v = {sa::random_normal_matrix<double>(rng, d, d, scale), sa::random_normal_vector<double>(rng, d, 0.1)};
    if (variant == sa::Variant::Bump) {
      head.projection = sa::Projection<double>::linear(sa::random_normal_matrix<double>(rng, 1, d),
                                                       sa::random_normal_vector<double>(rng, 1, 0.1));
    } else {
      head.projection = sa::Projection<double>::mlp1(
          sa::random_normal_matrix<double>(rng, d, d, scale), sa::random_normal_vector<double>(rng, d, 0.1),
          sa::random_normal_matrix<double>(rng, 1, d), sa::random_normal_vector<double>(rng, 1, 0.1));
    }
    upstream = sa::random_normal_matrix<double>(rng, n, d);
    if (sa::gradcheck::min_score_gap(seq, head, cfg, variant) >= min_gap) return;
  }
  throw sa::InternalError("gradcheck: could not find a tie-free instance");
}

int run_gradcheck(const GradcheckArgs& args) {
  sa::Rng rng(resolve_seed(args.seed));
  sa::json results = sa::json::array();
  bool pass = true;
  std::vector<sa::Variant> variants;
  if (args.variant == "both")
    variants = {sa::Variant::Relu, sa::Variant::Bump};
  else
    variants = {parse_variant(args.variant)};
  for (const sa::Variant variant : variants) {
    sa::KernelConfig cfg;
    cfg.bandwidth = 0.5;
    sa::TokenSequence<double> seq;
    sa::HeadParams<double> head;
    sa::Matrix<double> upstream;
    make_gradcheck_instance(args.n, args.d, variant, cfg, args.min_gap, rng, seq, head, upstream);
    const sa::GradCheckReport report = sa::gradcheck::check_attention_instance(
        seq, head, cfg, variant, upstream, args.h, args.directions, rng, args.min_gap / 2);
    const bool ok = report.max_rel_error <= args.tolerance && report.checked > 0;
    pass = pass && ok;
    results.push_back({{"variant", sa::variant_name(variant)},
                       {"pass", ok},
                       {"max_rel_error", report.max_rel_error},
                       {"worst_coordinate", report.worst_coordinate},
                       {"h", report.step},
                       {"min_score_gap", report.min_score_gap},
                       {"checked", report.checked},
                       {"skipped", report.skipped}});
  }
  emit_report({{"pass", pass}, {"tolerance", args.tolerance}, {"results", results}}, args.output);
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// cpd

int run_cpd(std::size_t trials, std::size_t n, const std::optional<std::uint64_t>& seed,
            const std::string& output) {
  sa::Rng rng(resolve_seed(seed));
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  double min_form = std::numeric_limits<double>::infinity();
  double max_mismatch = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::vector<double> x(n), g(n);
    for (double& v : x) v = uni(rng);
    double mean = 0.0;
    for (double& v : g) {
      v = uni(rng);
      mean += v;
    }
    mean /= n;
    for (double& v : g) v -= mean;
    const sa::CpdForm form = sa::cpd_quadratic_form(x, g);
    min_form = std::min(min_form, form.relu_form);
    max_mismatch = std::max(max_mismatch, std::abs(form.relu_form - form.energy_form));
  }
  std::vector<std::pair<double, double>> pairs(1000000);
  std::uniform_real_distribution<double> wide(-1e6, 1e6);
  for (auto& [a, b] : pairs) {
    a = wide(rng);
    b = wide(rng);
  }
  const double identity_dev = sa::relu_energy_identity_check(pairs);
  const bool pass = min_form >= -1e-12 && max_mismatch <= 1e-12 && identity_dev == 0.0;
  emit_report({{"pass", pass},
               {"trials", trials},
               {"min_form", min_form},
               {"max_form_mismatch", max_mismatch},
               {"identity_pairs", pairs.size()},
               {"identity_max_deviation", identity_dev}},
              output);
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// expressivity

int run_expressivity(std::size_t p, std::size_t n, std::size_t d, const std::optional<std::uint64_t>& seed,
                     const std::string& output) {
  sa::Rng rng(resolve_seed(seed));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto random_group = [&] {
    sa::SequenceGroup<double> g;
    for (std::size_t i = 0; i < p; ++i) {
      sa::TokenSequence<double> seq(n, d);
      for (double& v : seq.data) v = uni(rng);
      g.sequences.push_back(std::move(seq));
    }
    return g;
  };
  const auto sources = random_group();
  const auto targets = random_group();
  sa::MatchOptions options;
  options.seed = rng();
  const auto plan = sa::match_sequences(sources, targets, options);
  const bool pass = plan.total_layers() <= plan.layer_bound && plan.achieved_error <= 1e-6;
  emit_report({{"pass", pass},
               {"p", p},
               {"n", n},
               {"d", d},
               {"layers", plan.total_layers()},
               {"bound", plan.layer_bound},
               {"phase_counts",
                {{"disentangle", plan.disentangle_layers},
                 {"orthogonal", plan.orthogonal_layers},
                 {"axial", plan.axial_layers}}},
               {"max_error", plan.achieved_error},
               {"score_gap", plan.score_gap}},
              output);
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------
// heatmap

struct HeatmapArgs {
  std::string output;
  std::string params;
  std::string variant = "bump";
  double bandwidth = 0.5;
  double epsilon = 1e-12;
  std::string grid = "-1:1:64,-1:1:64";
  std::vector<double> query = {0.0, 0.0};
};

int run_heatmap(const HeatmapArgs& args) {
  sa::HeatmapGrid grid;
  {
    std::istringstream ss(args.grid);
    std::string axis;
    int which = 0;
    while (std::getline(ss, axis, ',')) {
      double lo, hi;
      std::size_t count;
      char c1, c2;
      std::istringstream as(axis);
      if (!(as >> lo >> c1 >> hi >> c2 >> count) || c1 != ':' || c2 != ':')
        throw sa::ParseError("bad grid axis '" + axis + "' (want lo:hi:count)");
      if (which == 0) {
        grid.x_min = lo;
        grid.x_max = hi;
        grid.nx = count;
      } else {
        grid.y_min = lo;
        grid.y_max = hi;
        grid.ny = count;
      }
      ++which;
    }
    if (which != 2) throw sa::ParseError("grid must have two axes");
  }
  sa::Projection<double> proj;
  if (args.params.empty()) {
    proj = sa::Projection<double>::linear(sa::Matrix<double>(1, 2), {});
    proj.weight(0, 0) = 1.0;  // default slicing direction (1, 0)
  } else {
    proj = sa::read_params<double>(args.params).at(0).projection;
  }
  const auto field =
      sa::kernel_heatmap(proj, grid, parse_variant(args.variant), args.bandwidth, args.query, args.epsilon);
  sa::write_file(args.output, sa::heatmap_to_csv(field));
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string n_grid = "2^10,2^11,2^12,2^13";
  std::size_t d = 16;
  std::size_t heads = 1;
  std::string impls = "sliced_relu,naive_relu,naive_softmax";
  int reps = 5;
  std::optional<std::uint64_t> seed;
  std::string dtype = "f64";
  int threads = 1;
  double bandwidth = 0.5;
  bool force_naive = false;
  std::string output;
};

int run_bench_cmd(const BenchArgs& args) {
  sa::BenchOptions opt;
  opt.n_grid = parse_n_grid(args.n_grid);
  opt.d = args.d;
  opt.heads = args.heads;
  opt.impls.clear();
  {
    std::istringstream ss(args.impls);
    std::string name;
    while (std::getline(ss, name, ','))
      if (!name.empty()) opt.impls.push_back(sa::bench_impl_from_name(name));
  }
  if (opt.impls.empty()) throw sa::ParseError("no benchmark impls selected");
  opt.reps = args.reps;
  opt.seed = resolve_seed(args.seed);
  if (args.dtype != "f32" && args.dtype != "f64") throw sa::ParseError("dtype must be f32 or f64");
  opt.dtype = args.dtype;
  opt.threads = args.threads;
  opt.bandwidth = args.bandwidth;
  opt.force_naive = args.force_naive;

  std::vector<std::string> refused;
  const auto records = sa::run_bench(opt, &refused);
  for (const auto& r : refused) std::cerr << "refusing " << r << "\n";
  sa::write_file(args.output, sa::bench_records_to_csv(records));
  std::cout << "wrote " << records.size() << " records to " << args.output << " (threads=" << opt.threads
            << ")\n";
  for (const auto& r : records)
    std::cout << sa::bench_impl_name(r.impl) << " n=" << r.n << ": mean " << r.mean_ms << " ms, median "
              << r.median_ms << " ms, std " << r.std_ms << " ms\n";
  for (const sa::BenchImpl impl : opt.impls) {
    std::size_t count = 0;
    for (const auto& r : records) count += r.impl == impl;
    if (count >= 2)
      std::cout << "log-log slope " << sa::bench_impl_name(impl) << ": " << sa::fit_loglog_slope(records, impl)
                << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sliced ReLU / ReLU-bump attention toolkit"};
  app.require_subcommand(1);

  ForwardArgs fwd;
  std::optional<std::uint64_t> fwd_seed;
  auto* cmd_forward = app.add_subcommand("forward", "evaluate attention on a token file");
  cmd_forward->add_option("--input", fwd.input, "token file (.json or .csv)")->required();
  cmd_forward->add_option("--params", fwd.params, "head parameter file (.json)")->required();
  cmd_forward->add_option("--output", fwd.output, "output matrix file (.json or .csv)")->required();
  cmd_forward->add_option("--variant", fwd.variant, "relu|bump");
  cmd_forward->add_option("--bandwidth", fwd.bandwidth, "bump bandwidth b");
  cmd_forward->add_option("--epsilon", fwd.epsilon, "denominator floor");
  cmd_forward->add_flag("--no-centering", fwd.no_centering, "disable value centering (relu variant)");
  cmd_forward->add_flag("--residual", fwd.residual, "add the input tokens to the output");
  cmd_forward->add_option("--dtype", fwd.dtype, "f32|f64");
  cmd_forward->add_option("--threads", fwd.threads, "worker threads");
  cmd_forward->add_option("--seed", fwd_seed, "unused by forward; accepted for uniformity");

  BenchArgs bench;
  auto* cmd_bench = app.add_subcommand("bench", "wall-clock scaling benchmark");
  cmd_bench->add_option("--n-grid", bench.n_grid, "comma list of sequence lengths (1024 or 2^10)");
  cmd_bench->add_option("--d", bench.d, "embedding dimension");
  cmd_bench->add_option("--heads", bench.heads, "heads per timed layer");
  cmd_bench->add_option("--impls", bench.impls, "sliced_relu,naive_relu,naive_softmax,sliced_bump");
  cmd_bench->add_option("--reps", bench.reps, "timed repetitions per point");
  cmd_bench->add_option("--seed", bench.seed, "instance seed");
  cmd_bench->add_option("--dtype", bench.dtype, "f32|f64");
  cmd_bench->add_option("--threads", bench.threads, "worker threads");
  cmd_bench->add_option("--bandwidth", bench.bandwidth, "bump bandwidth");
  cmd_bench->add_flag("--force-naive", bench.force_naive, "run naive impls past the size cap");
  cmd_bench->add_option("--output", bench.output, "CSV output path")->required();

  GradcheckArgs gc;
  auto* cmd_gradcheck = app.add_subcommand("gradcheck", "analytic vs finite-difference gradients");
  cmd_gradcheck->add_option("--n", gc.n, "tokens");
  cmd_gradcheck->add_option("--d", gc.d, "dimension");
  cmd_gradcheck->add_option("--step", gc.h, "central difference step");
  cmd_gradcheck->add_option("--directions", gc.directions, "sampled coordinates per variant");
  cmd_gradcheck->add_option("--variant", gc.variant, "relu|bump|both");
  cmd_gradcheck->add_option("--seed", gc.seed, "instance seed");
  cmd_gradcheck->add_option("--output", gc.output, "report path (stdout if omitted)");

  std::size_t cpd_trials = 1000, cpd_n = 32;
  std::optional<std::uint64_t> cpd_seed;
  std::string cpd_output;
  auto* cmd_cpd = app.add_subcommand("cpd", "zero-sum quadratic form and kernel identity checks");
  cmd_cpd->add_option("--trials", cpd_trials, "random trials");
  cmd_cpd->add_option("--n", cpd_n, "points per trial");
  cmd_cpd->add_option("--seed", cpd_seed, "seed");
  cmd_cpd->add_option("--output", cpd_output, "report path (stdout if omitted)");

  std::size_t ex_p = 2, ex_n = 3, ex_d = 2;
  std::optional<std::uint64_t> ex_seed;
  std::string ex_output;
  auto* cmd_expr = app.add_subcommand("expressivity", "constructive sequence-matching demo");
  cmd_expr->add_option("--p", ex_p, "sequences per group");
  cmd_expr->add_option("--n", ex_n, "tokens per sequence");
  cmd_expr->add_option("--d", ex_d, "dimension (>= 2)");
  cmd_expr->add_option("--seed", ex_seed, "seed");
  cmd_expr->add_option("--output", ex_output, "report path (stdout if omitted)");

  HeatmapArgs hm;
  auto* cmd_heatmap = app.add_subcommand("heatmap", "attention weight field on a 2D lattice");
  cmd_heatmap->add_option("--output", hm.output, "CSV output path")->required();
  cmd_heatmap->add_option("--params", hm.params, "optional params file; head 0 projection is used");
  cmd_heatmap->add_option("--variant", hm.variant, "relu|bump");
  cmd_heatmap->add_option("--bandwidth", hm.bandwidth, "bump bandwidth");
  cmd_heatmap->add_option("--epsilon", hm.epsilon, "relu normalizer floor");
  cmd_heatmap->add_option("--grid", hm.grid, "xmin:xmax:nx,ymin:ymax:ny");
  cmd_heatmap->add_option("--query", hm.query, "query point coordinates")->expected(2);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (cmd_forward->parsed()) {
      if (fwd.dtype == "f32")
        run_forward<float>(fwd);
      else if (fwd.dtype == "f64")
        run_forward<double>(fwd);
      else
        throw sa::ParseError("dtype must be f32 or f64");
      return 0;
    }
    if (cmd_bench->parsed()) return run_bench_cmd(bench);
    if (cmd_gradcheck->parsed()) return run_gradcheck(gc);
    if (cmd_cpd->parsed()) return run_cpd(cpd_trials, cpd_n, cpd_seed, cpd_output);
    if (cmd_expr->parsed()) return run_expressivity(ex_p, ex_n, ex_d, ex_seed, ex_output);
    if (cmd_heatmap->parsed()) return run_heatmap(hm);
  } catch (const sa::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const sa::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const sa::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const sa::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const sa::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
