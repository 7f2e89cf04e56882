// Operator surface over the flow solver, the unrolled layer, and the toy
// training stack. Exit codes: 0 success, 2 usage or configuration error,
// 3 input/output file error, 4 numerical failure, 5 gradient check failure.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "repflow/checkpoint.hpp"
#include "repflow/errors.hpp"
#include "repflow/feature_layer.hpp"
#include "repflow/flo.hpp"
#include "repflow/flow_layer.hpp"
#include "repflow/flow_viz.hpp"
#include "repflow/pnm.hpp"
#include "repflow/rng.hpp"
#include "repflow/toy/dataset.hpp"
#include "repflow/toy/model.hpp"
#include "repflow/toy/train.hpp"
#include "repflow/tvl1.hpp"

namespace {

using namespace repflow;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitGradcheck = 5;

// ---- flow -------------------------------------------------------------------

struct FlowOptions {
  std::string image1, image2;
  std::string out = "out.flo";
  std::string viz;
  double tau = 0.25, lambda = 0.15, theta = 0.3;
  int iterations = 100;
  bool per_channel = false;
  bool float32 = false;
};

template <class T>
FloData solve_flow(const ImageU8& a, const ImageU8& b, const FlowOptions& opt) {
  TvParams<T> params;
  params.tau = static_cast<T>(opt.tau);
  params.lambda = static_cast<T>(opt.lambda);
  params.theta = static_cast<T>(opt.theta);

  if (!opt.per_channel || a.channels == 1)
    return to_flo(tvl1_flow(to_grey_tensor<T>(a), to_grey_tensor<T>(b), params, opt.iterations));

  FlowField<T> mean(a.height, a.width);
  for (int c = 0; c < a.channels; ++c) {
    const FlowField<T> f =
        tvl1_flow(channel_tensor<T>(a, c), channel_tensor<T>(b, c), params, opt.iterations);
    for (std::size_t i = 0; i < mean.u_x.size(); ++i) {
      mean.u_x[i] += f.u_x[i];
      mean.u_y[i] += f.u_y[i];
    }
  }
  const T inv = T(1) / static_cast<T>(a.channels);
  for (std::size_t i = 0; i < mean.u_x.size(); ++i) {
    mean.u_x[i] *= inv;
    mean.u_y[i] *= inv;
  }
  return to_flo(mean);
}

int run_flow(const FlowOptions& opt) {
  const ImageU8 a = read_pnm(opt.image1);
  const ImageU8 b = read_pnm(opt.image2);
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw IoError(opt.image2 + ": shape does not match " + opt.image1);

  const FloData flow = opt.float32 ? solve_flow<float>(a, b, opt) : solve_flow<double>(a, b, opt);
  write_flo(opt.out, flow);
  std::printf("wrote %s (%dx%d)\n", opt.out.c_str(), flow.width, flow.height);
  if (!opt.viz.empty()) {
    write_pnm(opt.viz, flow_to_color(flow));
    std::printf("wrote %s\n", opt.viz.c_str());
  }
  return kExitOk;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckOptions {
  std::uint64_t seed = 1;
  int iterations = 5;
  int height = 16, width = 16;
  std::vector<std::string> groups;  // subset of sobel/divergence/scalars; empty = all
};

struct LeafReport {
  std::string name;
  double max_rel = 0.0;
  bool pass = true;

  // relative agreement with an absolute floor for genuinely zero gradients
  void record(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    if (diff <= 1e-8) return;
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = diff / scale;
    max_rel = std::max(max_rel, rel);
    if (rel > 1e-4) pass = false;
  }
};

int run_gradcheck(const GradcheckOptions& opt) {
  bool want_sobel = opt.groups.empty(), want_div = want_sobel, want_scalars = want_sobel;
  for (const auto& g : opt.groups) {
    if (g == "all") want_sobel = want_div = want_scalars = true;
    if (g == "sobel") want_sobel = true;
    if (g == "divergence") want_div = true;
    if (g == "scalars") want_scalars = true;
  }

  Rng rng(opt.seed);
  Tensor<double> f1(1, opt.height, opt.width), f2(1, opt.height, opt.width);
  for (std::size_t i = 0; i < f1.size(); ++i) f1[i] = rng.uniform(0.0, 255.0);
  for (std::size_t i = 0; i < f2.size(); ++i) f2[i] = rng.uniform(0.0, 255.0);
  FlowField<double> upstream(opt.height, opt.width);
  for (std::size_t i = 0; i < upstream.u_x.size(); ++i) {
    upstream.u_x[i] = rng.uniform(-1.0, 1.0);
    upstream.u_y[i] = rng.uniform(-1.0, 1.0);
  }

  const FlowParams<double> params;
  const FlowResult<double> base = rep_flow_forward(f1, f2, params, opt.iterations);
  const FlowGradients<double> grads = rep_flow_backward(base.tape, upstream);

  const auto loss = [&](const FlowParams<double>& p) {
    const FlowResult<double> r = rep_flow_forward(f1, f2, p, opt.iterations);
    double acc = 0.0;
    for (std::size_t i = 0; i < upstream.u_x.size(); ++i)
      acc += upstream.u_x[i] * r.flow.u_x[i] + upstream.u_y[i] * r.flow.u_y[i];
    return acc;
  };
  const double h = 1e-6;
  const auto central = [&](const std::function<void(FlowParams<double>&, double)>& set,
                           double v0) {
    FlowParams<double> p = params;
    set(p, v0 + h);
    const double fp = loss(p);
    set(p, v0 - h);
    const double fm = loss(p);
    return (fp - fm) / (2.0 * h);
  };

  std::vector<LeafReport> rows;
  if (want_scalars) {
    LeafReport t{"d_tau"};
    t.record(grads.params.d_tau,
             central([](FlowParams<double>& p, double v) { p.set_tau(v); }, params.tau()));
    rows.push_back(t);
    LeafReport l{"d_lambda"};
    l.record(grads.params.d_lambda,
             central([](FlowParams<double>& p, double v) { p.set_lambda(v); }, params.lambda()));
    rows.push_back(l);
    LeafReport th{"d_theta"};
    th.record(grads.params.d_theta,
              central([](FlowParams<double>& p, double v) { p.set_theta(v); }, params.theta()));
    rows.push_back(th);
  }
  const auto kernel_row = [&](const std::string& name, const Kernel2D<double>& analytic,
                              const std::function<Kernel2D<double>&(FlowParams<double>&)>& pick) {
    LeafReport r{name};
    FlowParams<double> probe = params;
    Kernel2D<double>& k = pick(probe);
    for (std::size_t i = 0; i < k.size(); ++i) {
      const double v0 = k[i];
      k[i] = v0 + h;
      const double fp = loss(probe);
      k[i] = v0 - h;
      const double fm = loss(probe);
      k[i] = v0;
      r.record(analytic[i], (fp - fm) / (2.0 * h));
    }
    rows.push_back(r);
  };
  if (want_div) {
    kernel_row("d_w_x", grads.params.d_w_x,
               [](FlowParams<double>& p) -> Kernel2D<double>& { return p.w_x; });
    kernel_row("d_w_y", grads.params.d_w_y,
               [](FlowParams<double>& p) -> Kernel2D<double>& { return p.w_y; });
  }
  if (want_sobel) {
    kernel_row("d_sobel_x", grads.params.d_sobel_x,
               [](FlowParams<double>& p) -> Kernel2D<double>& { return p.sobel_x; });
    kernel_row("d_sobel_y", grads.params.d_sobel_y,
               [](FlowParams<double>& p) -> Kernel2D<double>& { return p.sobel_y; });
  }

  std::string failing;
  std::printf("%-10s %12s  result\n", "leaf", "max_rel_err");
  for (const auto& r : rows) {
    std::printf("%-10s %12.3e  %s\n", r.name.c_str(), r.max_rel, r.pass ? "ok" : "FAIL");
    if (!r.pass) failing += (failing.empty() ? "" : ", ") + r.name;
  }
  if (!failing.empty()) {
    std::fprintf(stderr, "gradient check failed: %s\n", failing.c_str());
    return kExitGradcheck;
  }
  std::printf("gradient check passed (%zu leaves, tolerance 1e-4)\n", rows.size());
  return kExitOk;
}

// ---- bench ------------------------------------------------------------------

struct BenchOptions {
  std::vector<int> iterations{10, 100};
  int height = 32, width = 32;
  int channels = 4;
  int c_prime = 0;  // 0: match channels
  int runs = 10;
  int warmup = 2;
  int threads = 1;
  std::uint64_t seed = 99;
  std::string out;
};

double percentile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

int run_bench(const BenchOptions& opt) {
  const int cp = opt.c_prime > 0 ? opt.c_prime : opt.channels;
  std::ostringstream csv;
  csv << "iterations,height,width,channels,median_ms,iqr_ms,pairs_per_sec\n";
  csv << std::setprecision(6) << std::fixed;

  double sink = 0.0;
  for (const int iters : opt.iterations) {
    Rng rng(opt.seed);
    const auto weights = make_layer_weights<double>(opt.channels, cp, iters, rng);
    Tensor<double> ft(opt.channels, opt.height, opt.width);
    Tensor<double> ft1(opt.channels, opt.height, opt.width);
    for (std::size_t i = 0; i < ft.size(); ++i) ft[i] = rng.uniform(0.0, 255.0);
    for (std::size_t i = 0; i < ft1.size(); ++i) ft1[i] = rng.uniform(0.0, 255.0);

    for (int i = 0; i < opt.warmup; ++i)
      sink += layer_forward(ft, ft1, weights, opt.threads).value[0];

    std::vector<double> ms(static_cast<std::size_t>(opt.runs));
    for (auto& sample : ms) {
      const auto t0 = std::chrono::steady_clock::now();
      sink += layer_forward(ft, ft1, weights, opt.threads).value[0];
      const auto t1 = std::chrono::steady_clock::now();
      sample = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    std::sort(ms.begin(), ms.end());
    const double median = percentile_sorted(ms, 0.5);
    const double iqr = percentile_sorted(ms, 0.75) - percentile_sorted(ms, 0.25);
    csv << iters << ',' << opt.height << ',' << opt.width << ',' << opt.channels << ','
        << median << ',' << iqr << ',' << 1000.0 / median << '\n';
  }
  if (!std::isfinite(sink)) throw NumericalError("bench: non-finite layer output");

  const std::string text = csv.str();
  std::fputs(text.c_str(), stdout);
  if (!opt.out.empty()) {
    write_file_atomic(opt.out, text.data(), text.size());
    std::printf("wrote %s\n", opt.out.c_str());
  }
  return kExitOk;
}

// ---- train / ablate ---------------------------------------------------------

struct TrainOptions {
  std::string out_dir = ".";
  double lr = 0.02;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 8;
  int threads = 1;
  std::uint64_t seed = 7;
  int iterations = 10;
  int c_prime = 8;
  int feature_channels = 16;
  std::string mode = "flow";
  std::vector<std::string> learn;  // subset of sobel/divergence/scalars, or all/none
  std::string axis = "learn_flags";
  int classes = 4, per_class = 8, frames = 8, size = 32;
  int speed_min = 1, speed_max = 2;
  bool distractors = false;
};

LearnFlags parse_learn(const std::vector<std::string>& groups) {
  if (groups.empty()) return {true, true, true};
  LearnFlags f{false, false, false};
  for (const auto& g : groups) {
    if (g == "all") f = {true, true, true};
    if (g == "sobel") f.sobel = true;
    if (g == "divergence") f.divergence = true;
    if (g == "scalars") f.scalars = true;
  }
  return f;
}

toy::ToyDataset build_dataset(const TrainOptions& o) {
  toy::ToyDatasetConfig dcfg;
  dcfg.num_classes = o.classes;
  dcfg.samples_per_class = o.per_class;
  dcfg.frame_count = o.frames;
  dcfg.height = o.size;
  dcfg.width = o.size;
  dcfg.speed_min = o.speed_min;
  dcfg.speed_max = o.speed_max;
  dcfg.distractor_appearance = o.distractors;
  return toy::gen_motion_dataset(dcfg, o.seed);
}

toy::TrainConfig build_train_config(const TrainOptions& o) {
  toy::TrainConfig cfg;
  cfg.lr = o.lr;
  cfg.momentum = o.momentum;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learn = parse_learn(o.learn);
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  return cfg;
}

int run_train(const TrainOptions& o) {
  const toy::ToyDataset ds = build_dataset(o);
  const toy::ModelMode mode = o.mode == "flow"  ? toy::ModelMode::kFlow
                              : o.mode == "fcf" ? toy::ModelMode::kFcf
                                                : toy::ModelMode::kAppearance;
  Rng rng(o.seed);
  toy::TinyModel m =
      toy::make_tiny_model(1, o.classes, o.c_prime, o.iterations, mode, rng, o.feature_channels);
  const auto history = toy::train(m, ds.train, ds.test, build_train_config(o));

  namespace fs = std::filesystem;
  fs::create_directories(o.out_dir);
  const std::string hist_path = (fs::path(o.out_dir) / "history.csv").string();
  const std::string ckpt_path = (fs::path(o.out_dir) / "model.rfw").string();
  toy::write_history_csv(hist_path, history);
  save_checkpoint(ckpt_path, toy::model_to_tensors(m));

  if (history.empty()) {
    std::printf("0 epochs trained: checkpoint equals initialization\n");
  } else {
    const auto& last = history.back();
    std::printf("epoch %d: train acc %.3f, test acc %.3f\n", last.epoch, last.train_accuracy,
                last.test_accuracy);
  }
  std::printf("wrote %s\nwrote %s\n", hist_path.c_str(), ckpt_path.c_str());
  return kExitOk;
}

int run_ablate(const TrainOptions& o) {
  const toy::ToyDataset ds = build_dataset(o);
  const toy::AblationAxis axis = o.axis == "learn_flags" ? toy::AblationAxis::kLearnFlags
                                 : o.axis == "iterations" ? toy::AblationAxis::kIterations
                                                          : toy::AblationAxis::kFcf;
  const auto rows = toy::run_ablation(axis, ds, build_train_config(o), o.c_prime, o.iterations);

  std::ostringstream csv;
  csv << std::setprecision(17);
  csv << "label,final_train_accuracy,final_test_accuracy\n";
  for (const auto& r : rows)
    csv << r.label << ',' << r.final_train_accuracy << ',' << r.final_test_accuracy << '\n';

  namespace fs = std::filesystem;
  fs::create_directories(o.out_dir);
  const std::string path = (fs::path(o.out_dir) / "ablation.csv").string();
  const std::string text = csv.str();
  write_file_atomic(path, text.data(), text.size());

  for (const auto& r : rows)
    std::printf("%-16s train %.3f  test %.3f\n", r.label.c_str(), r.final_train_accuracy,
                r.final_test_accuracy);
  std::printf("wrote %s\n", path.c_str());
  return kExitOk;
}

// ---- inspect-checkpoint -----------------------------------------------------

int run_inspect(const std::string& path) {
  const auto tensors = load_checkpoint(path);
  std::printf("%-24s %-14s %9s %13s %13s %13s\n", "name", "shape", "elements", "min", "max",
              "mean");
  std::uint64_t total = 0;
  for (const auto& t : tensors) {
    std::string shape;
    for (std::size_t d = 0; d < t.dims.size(); ++d)
      shape += (d ? "x" : "") + std::to_string(t.dims[d]);
    if (shape.empty()) shape = "scalar";

    double mn = t.data[0], mx = t.data[0], sum = 0.0;
    for (const double v : t.data) {
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      sum += v;
    }
    total += t.element_count();
    std::printf("%-24s %-14s %9llu %13.5g %13.5g %13.5g\n", t.name.c_str(), shape.c_str(),
                static_cast<unsigned long long>(t.element_count()), mn, mx,
                sum / static_cast<double>(t.data.size()));
  }
  std::printf("%zu tensors, %llu values\n", tensors.size(),
              static_cast<unsigned long long>(total));
  return kExitOk;
}

// ---- wiring -----------------------------------------------------------------

void add_train_options(CLI::App* cmd, TrainOptions& o, bool with_mode) {
  cmd->add_option("-o,--out", o.out_dir, "output directory")->capture_default_str();
  cmd->add_option("--lr", o.lr, "learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--momentum", o.momentum, "SGD momentum")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd->add_option("--epochs", o.epochs, "training epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size, "minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--threads", o.threads, "worker threads (any fixed count is deterministic)")
      ->check(CLI::Range(1, 512))->capture_default_str();
  cmd->add_option("--seed", o.seed, "dataset/model/shuffle seed")->capture_default_str();
  cmd->add_option("--iterations", o.iterations, "flow solver iterations")
      ->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--c-prime", o.c_prime, "flow channels inside the layer")
      ->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--feature-channels", o.feature_channels, "trunk feature channels")
      ->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--learn", o.learn,
                  "learnable flow groups (repeatable): all, none, sobel, divergence, scalars")
      ->check(CLI::IsMember({"all", "none", "sobel", "divergence", "scalars"}));
  if (with_mode)
    cmd->add_option("--mode", o.mode, "feature mode")
        ->check(CLI::IsMember({"flow", "fcf", "appearance"}))->capture_default_str();
  cmd->add_option("--classes", o.classes, "motion direction classes")
      ->check(CLI::Range(2, 8))->capture_default_str();
  cmd->add_option("--samples-per-class", o.per_class, "clips per class per split")
      ->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--frames", o.frames, "frames per clip")->check(CLI::Range(2, 1024))->capture_default_str();
  cmd->add_option("--size", o.size, "clip height and width")->check(CLI::Range(8, 4096))->capture_default_str();
  cmd->add_option("--speed-min", o.speed_min, "slowest shift, pixels per frame")
      ->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--speed-max", o.speed_max, "fastest shift, pixels per frame")
      ->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_flag("--distractors", o.distractors, "apply label-independent gain/offset per clip");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"representation-flow toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "read option defaults from an INI file; flags win on conflict");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.footer(
      "Exit codes: 0 success, 2 usage/configuration, 3 input or output files,\n"
      "4 numerical failure, 5 gradient check failure.\n"
      "Every command is deterministic given its seed, inputs, and a fixed thread count.");

  int rc = kExitOk;

  FlowOptions fo;
  CLI::App* flow = app.add_subcommand("flow", "compute optical flow between two images");
  flow->add_option("image1", fo.image1, "first frame (binary PGM/PPM)")->required();
  flow->add_option("image2", fo.image2, "second frame, same shape")->required();
  flow->add_option("-o,--out", fo.out, "output flow file")->capture_default_str();
  flow->add_option("--viz", fo.viz, "also write a colour-wheel rendering (PPM)");
  flow->add_option("--tau", fo.tau, "solver time step")->check(CLI::PositiveNumber)->capture_default_str();
  flow->add_option("--lambda", fo.lambda, "data term weight")->check(CLI::PositiveNumber)->capture_default_str();
  flow->add_option("--theta", fo.theta, "coupling weight")->check(CLI::PositiveNumber)->capture_default_str();
  flow->add_option("-i,--iterations", fo.iterations, "solver iterations")
      ->check(CLI::PositiveNumber)->capture_default_str();
  flow->add_flag("--per-channel", fo.per_channel,
                 "run flow per colour channel and average the fields (default: luma first)");
  flow->add_flag("--float32", fo.float32, "solve in 32-bit reals (default: 64-bit)");
  flow->callback([&] { rc = run_flow(fo); });

  GradcheckOptions go;
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference check of solver gradients");
  grad->add_option("--seed", go.seed, "fixture seed")->capture_default_str();
  grad->add_option("-i,--iterations", go.iterations, "solver iterations")
      ->check(CLI::PositiveNumber)->capture_default_str();
  grad->add_option("--height", go.height, "fixture height")->check(CLI::Range(4, 256))->capture_default_str();
  grad->add_option("--width", go.width, "fixture width")->check(CLI::Range(4, 256))->capture_default_str();
  grad->add_option("--learn", go.groups,
                   "parameter groups to check (repeatable): all, sobel, divergence, scalars")
      ->check(CLI::IsMember({"all", "sobel", "divergence", "scalars"}));
  grad->callback([&] { rc = run_gradcheck(go); });

  BenchOptions bo;
  CLI::App* bench = app.add_subcommand("bench", "time layer forward passes");
  bench->add_option("-i,--iterations", bo.iterations, "iteration counts to time (repeatable)")
      ->check(CLI::PositiveNumber)->delimiter(',')->capture_default_str();
  bench->add_option("--height", bo.height, "frame height")->check(CLI::Range(8, 4096))->capture_default_str();
  bench->add_option("--width", bo.width, "frame width")->check(CLI::Range(8, 4096))->capture_default_str();
  bench->add_option("--channels", bo.channels, "input feature channels")
      ->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--c-prime", bo.c_prime, "flow channels (default: match --channels)")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--runs", bo.runs, "timed runs per setting (minimum 10)")
      ->check(CLI::Range(10, 1000000))->capture_default_str();
  bench->add_option("--warmup", bo.warmup, "untimed warmup runs")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  bench->add_option("--threads", bo.threads, "worker threads")->check(CLI::Range(1, 512))->capture_default_str();
  bench->add_option("--seed", bo.seed, "fixture seed")->capture_default_str();
  bench->add_option("-o,--out", bo.out, "also write the CSV here");
  bench->callback([&] { rc = run_bench(bo); });

  TrainOptions to;
  CLI::App* train = app.add_subcommand("train", "train the toy classifier on synthetic motion");
  add_train_options(train, to, true);
  train->callback([&] { rc = run_train(to); });

  TrainOptions ao;
  CLI::App* ablate = app.add_subcommand("ablate", "train once per cell along one ablation axis");
  ablate->add_option("--axis", ao.axis, "ablation axis")
      ->check(CLI::IsMember({"learn_flags", "iterations", "fcf"}))->capture_default_str();
  add_train_options(ablate, ao, false);
  ablate->callback([&] { rc = run_ablate(ao); });

  std::string inspect_path;
  CLI::App* inspect = app.add_subcommand("inspect-checkpoint", "list the tensors in a checkpoint");
  inspect->add_option("path", inspect_path, "checkpoint file")->required();
  inspect->callback([&] { rc = run_inspect(inspect_path); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
