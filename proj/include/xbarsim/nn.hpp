#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "xbarsim/core.hpp"
#include "xbarsim/crossbar.hpp"
#include "xbarsim/random.hpp"

namespace xbarsim {

enum class Activation { Logistic, Relu, Softmax, Identity, Step };
std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

double logistic(double z) noexcept;
Vector activate(Activation activation, const Vector& z);

/// Fully connected layer; weights are (inputs + 1) x outputs and the last row
/// holds the bias weights.
struct DenseLayer {
  Matrix weights;
  Activation activation = Activation::Logistic;

  Eigen::Index inputs() const noexcept { return weights.rows() - 1; }
  Eigen::Index outputs() const noexcept { return weights.cols(); }
  bool operator==(const DenseLayer&) const = default;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  // Uniform init in +-sqrt(6 / (fan_in + fan_out)).
  static Mlp create(const std::vector<int>& sizes, const std::vector<Activation>& activations,
                    RandomStream stream);

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  Eigen::Index input_size() const;
  Eigen::Index output_size() const;
  std::size_t parameter_count() const;

  void validate() const;
  bool operator==(const Mlp&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

// 1 if w . x + b > 0, else 0.
int perceptron(const Vector& x, const Vector& w, double b);

struct ExactBackend {};

/// One programmed crossbar per layer, each with the layer's weight shape.
/// When row_order is non-empty, physical row p of layer l holds original row
/// row_order[l][p] and inputs are reordered to match.
struct CrossbarBackend {
  std::span<const Crossbar> layers;
  ReadConfig read;
  std::uint64_t call_index = 0;
  std::span<const std::vector<Eigen::Index>> row_order = {};
};

using Backend = std::variant<ExactBackend, CrossbarBackend>;

Vector forward(const Mlp& net, const Vector& x, const Backend& backend = ExactBackend{});

/// Row-per-sample inputs and targets.
struct Samples {
  Matrix inputs;
  Matrix targets;

  Eigen::Index size() const noexcept { return inputs.rows(); }
  Samples subset(std::span<const Eigen::Index> rows) const;
};

enum class Loss { Mse, CrossEntropy };
std::string to_string(Loss loss);
Loss loss_from_string(const std::string& name);

double sample_loss(Loss loss, const Vector& output, const Vector& target);
double mean_loss(const Mlp& net, const Samples& data, Loss loss,
                 const Backend& backend = ExactBackend{});

using Gradients = std::vector<Matrix>;

// Gradient of the batch-mean loss for every layer's weights.
Gradients gradient(const Mlp& net, const Samples& batch, Loss loss);

// Flattened parameter view (layer by layer, column-major) for oracle checks.
Vector flatten(const Mlp& net);
Mlp unflatten(const Mlp& shape, const Vector& params);
Vector flatten(const Gradients& gradients);

/// Scheme applied to every layer when deploying a network on crossbars. The
/// weight range of each layer's scheme is fitted to that layer (max |w|).
Crossbar program_layer(const Matrix& weights, const CrossbarConfig& base,
                       const RandomStream& lineage);
std::vector<Crossbar> program_network(const Mlp& net, const CrossbarConfig& base,
                                      const RandomStream& lineage);

enum class NoiseMode { None, Agnostic, Aware };
std::string to_string(NoiseMode mode);
NoiseMode noise_mode_from_string(const std::string& name);

struct TrainConfig {
  double eta = 0.1;
  int epochs = 10;
  int batch_size = 10;
  Loss loss = Loss::CrossEntropy;
  NoiseMode noise_mode = NoiseMode::None;
  double sigma_w = 0.0;  // agnostic weight-noise std
  std::optional<CrossbarConfig> aware_crossbar;
  ReadConfig aware_read;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  Mlp net;
  std::vector<double> loss_history;  // clean mean loss after each epoch
};

// Mini-batch SGD. Agnostic noise perturbs the weights of each batch's forward
// and backward pass; aware noise runs the forward pass through freshly
// programmed crossbars and back-propagates through the clean weights. Updates
// always land on the clean weights.
TrainResult train_sgd(Mlp net, const Samples& data, const TrainConfig& config);

/// Per-weight sensitivity -eta dE/dw, shaped like the network's weights.
struct SensitivityMap {
  std::vector<Matrix> delta_w;
};

SensitivityMap sensitivity(const Mlp& net, const Samples& batch, double eta,
                           Loss loss = Loss::CrossEntropy);

struct EnsembleMember {
  const Mlp* net;
  Backend backend;
};

Vector ensemble_predict(std::span<const EnsembleMember> members, const Vector& x);

Eigen::Index argmax(const Vector& values);

}  // namespace xbarsim
