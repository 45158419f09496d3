#include "cfm/commands.hpp"

#include "cfm/checkpoint.hpp"
#include "cfm/config.hpp"
#include "cfm/csv.hpp"
#include "cfm/datasets.hpp"
#include "cfm/error.hpp"
#include "cfm/metrics.hpp"
#include "cfm/plot.hpp"
#include "cfm/sampler.hpp"
#include "cfm/training.hpp"
#include "cfm/verify.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>

namespace cfm {

namespace fs = std::filesystem;

fs::path output_root() {
  const char* env = std::getenv("CFM_OUT_DIR");
  return env && *env ? fs::path(env) : fs::path(".");
}

namespace {

fs::path under_root(const fs::path& p) { return p.is_absolute() ? p : output_root() / p; }

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDiverged;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDimension;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    Config config = load_config(options.config);
    if (options.steps) config.steps = *options.steps;
    if (options.seed) config.seed = *options.seed;
    config.validate();
    const fs::path dir = options.out ? *options.out : under_root(config.out_dir);
    fs::create_directories(dir);

    const Formulation form = config.formulation();
    const NetworkConfig net_config = config.network_config();
    const Mat data = generate_dataset(config.dataset, config.seed, config.dataset_n);

    std::optional<Network> net;
    if (!config.init_from.empty()) {
      std::optional<Checkpoint> loaded;
      try {
        loaded.emplace(load_checkpoint(config.init_from));
      } catch (const Error& e) {
        err << "error: training.init_from: " << e.what() << "\n";
        return kExitCheckpoint;
      }
      Checkpoint& source = *loaded;
      if (source.network.config().dual_time) {
        if (!(source.network.config() == net_config)) {
          throw ConfigError("training.init_from", "checkpoint architecture differs from the configured network");
        }
        net.emplace(std::move(source.network));
      } else {
        net.emplace(init_from_multistep(net_config, source.network));
      }
    } else {
      net.emplace(net_config, config.seed);
    }

    write_text_file(dir / "config.resolved.ini", serialize_config(config));
    TrainResult result = train_loop(config.train_config(), std::move(*net), data, dir, &out);
    save_checkpoint(dir / "final.bin", result.network, form, static_cast<long>(result.losses.size()));

    std::string summary = "formulation = " + std::string(form.name()) + "\n";
    summary += "steps = " + std::to_string(result.losses.size()) + "\n";
    summary += "final_loss = " + (result.losses.empty() ? std::string("nan") : fmt(result.losses.back())) + "\n";
    summary += std::string("diverged = ") + (result.diverged ? "true" : "false") + "\n";
    summary += "divergence_step = " + std::to_string(result.divergence_step) + "\n";
    summary += std::string("unstable = ") + (result.unstable ? "true" : "false") + "\n";
    write_text_file(dir / "summary.txt", summary);
    if (result.diverged) {
      err << "error: training diverged at step " << result.divergence_step << "; last good parameters in "
          << (dir / "last_good.bin").string() << "\n";
      return kExitDiverged;
    }
    out << "trained " << result.losses.size() << " steps, final loss "
        << (result.losses.empty() ? std::string("n/a") : fmt(result.losses.back())) << ", outputs in " << dir.string()
        << "\n";
    return kExitOk;
  });
}

int cmd_sample(const SampleOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    if (options.steps < 1) throw ConfigError("steps", "must be at least 1");
    if (options.samples < 0) throw ConfigError("samples", "must be >= 0");
    std::optional<Checkpoint> loaded;
    try {
      loaded.emplace(load_checkpoint(options.checkpoint));
    } catch (const Error& e) {
      err << "error: " << e.what() << "\n";
      return kExitCheckpoint;
    }
    Checkpoint& ckpt = *loaded;
    const Formulation& form = ckpt.formulation;
    const Eigen::Index dim = ckpt.network.config().input_dim;
    Rng rng(options.seed, 0x6e6f697365);
    const Mat noise = draw_noise(form, options.samples, dim, rng);
    NetworkEvaluator eval(ckpt.network);
    const Mat samples = sample(eval, form, uniform_schedule(form, options.steps), noise);
    const fs::path path = options.out ? *options.out : under_root("samples.csv");
    write_points_csv(path, samples);
    if (options.image) {
      if (dim != 2 && dim != 3) {
        err << "error: cannot plot dimension " << dim << "\n";
        return kExitPlotDimension;
      }
      write_scatter_ppm(*options.image, samples);
    }
    out << "wrote " << samples.rows() << " samples to " << path.string() << "\n";
    return kExitOk;
  });
}

int cmd_verify(const VerifyCommandOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    VerifyOptions vo;
    if (options.formulation) vo.only = parse_kind(*options.formulation);
    for (const auto& item : options.tolerance) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("tolerance", "expected check_id=value, got '" + item + "'");
      const std::string value = item.substr(eq + 1);
      char* end = nullptr;
      const double v = std::strtod(value.c_str(), &end);
      if (value.empty() || *end != '\0') throw ConfigError("tolerance", "cannot parse '" + value + "'");
      vo.tolerance[item.substr(0, eq)] = v;
    }
    const auto ids = verify_check_ids();
    for (const auto& c : options.checks) {
      if (std::find(ids.begin(), ids.end(), c) == ids.end()) throw ConfigError("check", "unknown check '" + c + "'");
    }
    vo.checks = options.checks;
    vo.negative_control = options.negative_control;
    const auto rows = run_verify(vo);
    const fs::path path = options.out ? *options.out : under_root("verify_report.csv");
    write_text_file(path, format_verify_csv(rows));
    bool ok = true;
    for (const auto& r : rows) {
      if (!r.pass) {
        ok = false;
        err << "FAIL " << r.check_id << " " << r.formulation << " residual " << r.max_residual << " > tolerance "
            << r.tolerance << "\n";
      }
    }
    out << rows.size() << " checks, report in " << path.string() << "\n";
    return ok ? kExitOk : kExitVerifyFailed;
  });
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const DatasetInfo& info = dataset_info(options.reference);
    const Mat samples = read_points_csv(options.samples);
    if (samples.cols() != info.dim) {
      err << "error: samples have dimension " << samples.cols() << " but " << info.id << " has dimension " << info.dim
          << "\n";
      return kExitDimension;
    }
    if (samples.rows() == 0) throw ShapeError("eval: no samples");
    const Mat reference = generate_dataset(info.id, options.seed, samples.rows());
    std::vector<std::pair<std::string, double>> metrics;
    metrics.emplace_back("chamfer", chamfer(samples, reference));
    if (samples.rows() >= 2) metrics.emplace_back("energy_distance", energy_distance(samples, reference));
    if (info.id == "checkerboard") metrics.emplace_back("on_cell_fraction", on_cell_fraction(samples));

    const fs::path ledger = options.ledger ? *options.ledger : under_root("metrics.csv");
    const bool fresh = !fs::exists(ledger);
    if (ledger.has_parent_path()) fs::create_directories(ledger.parent_path());
    std::ofstream file(ledger, std::ios::app);
    if (!file) throw IoError("cannot append to " + ledger.string());
    if (fresh) file << "metric,value,n_samples,n_reference,reference,seed,samples\n";
    for (const auto& [name, value] : metrics) {
      file << name << "," << fmt(value) << "," << samples.rows() << "," << reference.rows() << "," << info.id << ","
           << options.seed << "," << options.samples.string() << "\n";
      out << name << " = " << fmt(value) << "\n";
    }
    if (!file) throw IoError("failed writing " + ledger.string());
    return kExitOk;
  });
}

int cmd_plot(const PlotOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const Mat points = read_points_csv(options.samples);
    if (points.cols() != 2 && points.cols() != 3) {
      err << "error: cannot plot dimension " << points.cols() << " (2 or 3 supported)\n";
      return kExitPlotDimension;
    }
    const fs::path path = options.out ? *options.out : under_root("plot.ppm");
    write_scatter_ppm(path, points);
    out << "wrote " << path.string() << "\n";
    return kExitOk;
  });
}

int cmd_dataset(const DatasetOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const Mat data = generate_dataset(options.id, options.seed, options.n);
    const fs::path path = options.out ? *options.out : under_root(options.id + ".csv");
    write_points_csv(path, data);
    out << "wrote " << data.rows() << " points to " << path.string() << "\n";
    return kExitOk;
  });
}

}  // namespace cfm
