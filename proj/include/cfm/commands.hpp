#pragma once

// Subcommand implementations behind the `cfm` executable. Each returns a
// process exit code and reports to the given streams.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cfm {

enum ExitCode : int {
  kExitOk = 0,
  kExitVerifyFailed = 1,
  kExitConfig = 2,
  kExitCheckpoint = 3,
  kExitDimension = 4,
  kExitPlotDimension = 5,
  kExitDiverged = 6,
  kExitIo = 7,
};

// $CFM_OUT_DIR if set, otherwise the current directory.
std::filesystem::path output_root();

struct TrainOptions {
  std::filesystem::path config;
  std::optional<long> steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

struct SampleOptions {
  std::filesystem::path checkpoint;
  int steps = 4;
  long samples = 10000;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> image;
};

struct VerifyCommandOptions {
  std::optional<std::string> formulation;
  std::vector<std::string> tolerance;  // "check_id=value"
  std::vector<std::string> checks;
  std::optional<std::filesystem::path> out;
  bool negative_control = false;
};

struct EvalOptions {
  std::filesystem::path samples;
  std::string reference;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> ledger;
};

struct PlotOptions {
  std::filesystem::path samples;
  std::optional<std::filesystem::path> out;
};

struct DatasetOptions {
  std::string id;
  long n = 10000;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> out;
};

int cmd_train(const TrainOptions& options, std::ostream& out, std::ostream& err);
int cmd_sample(const SampleOptions& options, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyCommandOptions& options, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);
int cmd_plot(const PlotOptions& options, std::ostream& out, std::ostream& err);
int cmd_dataset(const DatasetOptions& options, std::ostream& out, std::ostream& err);

}  // namespace cfm
