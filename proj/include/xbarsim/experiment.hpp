#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "xbarsim/crossbar.hpp"
#include "xbarsim/dataset.hpp"
#include "xbarsim/nn.hpp"

namespace xbarsim {

/// Everything a run needs. The on-disk form is a JSON document whose tree
/// mirrors these sections; see README.md for the full schema.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int repetitions = 1;

  struct DatasetSection {
    std::string source = "builtin";  // builtin | file
    std::string path;                // training samples for source = file
    std::string test_path;           // defaults to path
    int train_size = 600;
    int test_size = 200;
    double pixel_noise = 0.3;
    bool operator==(const DatasetSection&) const = default;
  } dataset;

  struct NetworkSection {
    std::vector<int> layers{64, 16, 10};
    std::vector<std::string> activations{"logistic", "softmax"};
    std::string weights_file;   // load instead of training
    std::string crossbar_file;  // load instead of programming (infer)
    bool operator==(const NetworkSection&) const = default;
  } network;

  struct TrainingSection {
    double eta = 0.5;
    int epochs = 30;
    int batch_size = 10;
    std::string loss = "cross_entropy";
    std::string noise_mode = "none";
    double sigma_w = 0.0;
    bool operator==(const TrainingSection&) const = default;
  } training;

  struct DeviceSection {
    std::string preset = "RRAM";
    std::optional<double> on_off_ratio;
    std::optional<double> g_off;
    std::optional<int> bits;
    std::optional<double> drift_nu;
    bool operator==(const DeviceSection&) const = default;
  } device;

  struct MappingSection {
    std::string scheme = "differential_pair";
    double power = 1.0;        // NonlinearPower exponent
    double input_range = 1.0;  // |x| that maps to V_read
    bool operator==(const MappingSection&) const = default;
  } mapping;

  struct NonidealitySection {
    bool quantize = false;
    int bits = 0;
    bool program_pulses = false;
    int max_pulses = 100;
    double d2d_sigma = 0.0;
    double p_stuck = 0.0;
    std::string stuck_mode = "at_g_off";
    double drift_t = 1.0;
    double iv_gamma = 0.0;
    double rtn_delta = 0.0;
    double rtn_tau_high = 2.0;
    double rtn_tau_low = 8.0;
    bool operator==(const NonidealitySection&) const = default;
  } nonidealities;

  struct InterconnectSection {
    double r_word = 0.0;
    double r_bit = 0.0;
    std::string biasing = "single";
    int tile_rows = 0;  // 0 leaves that dimension untiled
    int tile_cols = 0;
    bool operator==(const InterconnectSection&) const = default;
  } interconnect;

  ReadConfig read;

  struct MitigationSection {
    bool compensate_stuck = false;
    std::string row_ordering = "none";  // none | intensity | sensitivity
    int ensemble_size = 1;
    bool operator==(const MitigationSection&) const = default;
  } mitigation;

  struct SweepSection {
    std::vector<std::string> paths;
    std::vector<double> values;
    bool operator==(const SweepSection&) const = default;
  } sweep;

  bool operator==(const ExperimentConfig&) const = default;
};

struct Diagnostic {
  std::string field;  // dotted path, or "line N" for syntax errors
  std::string message;
};
std::ostream& operator<<(std::ostream& out, const Diagnostic& d);

// All schema violations of a config document; empty means runnable.
std::vector<Diagnostic> validate_config_text(const std::string& text);
std::vector<Diagnostic> validate_config_file(const std::filesystem::path& path);

// Throws ConfigError listing every diagnostic.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

// Sets a numeric parameter by dotted path ("interconnect.r_word").
ExperimentConfig with_parameter(const ExperimentConfig& config, const std::string& path,
                                double value);

// FNV-1a over the canonical serialization, as 16 hex digits.
std::string config_digest(const ExperimentConfig& config);

// Stream seed for one (sweep point, repetition) task.
std::uint64_t task_seed(std::uint64_t seed, std::size_t sweep_index, int repetition);

// Conversions to the simulator's own types.
DeviceModel device_model(const ExperimentConfig& config);
CrossbarConfig crossbar_config(const ExperimentConfig& config);
TrainConfig train_config(const ExperimentConfig& config);
DatasetSplit load_dataset(const ExperimentConfig& config,
                          const std::filesystem::path& base_dir = {});

struct ResultRow {
  std::optional<double> sweep_value;
  int repetition = 0;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

// Sweep value ascending (rows without one first), repetition, metric name.
void sort_rows(std::vector<ResultRow>& rows);
void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows,
                       const std::string& digest);

struct RunOptions {
  std::string subcommand;  // program | infer | sweep | train | report | validate
  std::filesystem::path config_path;
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

// Returns the process exit status; diagnostics and errors go to err.
int run(const RunOptions& options, std::ostream& log, std::ostream& err);

}  // namespace xbarsim
