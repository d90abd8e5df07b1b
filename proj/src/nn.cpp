#include "xbarsim/nn.hpp"

#include <cmath>
#include <numeric>

namespace xbarsim {

std::string to_string(Activation activation) {
  switch (activation) {
    case Activation::Logistic:
      return "logistic";
    case Activation::Relu:
      return "relu";
    case Activation::Softmax:
      return "softmax";
    case Activation::Identity:
      return "identity";
    case Activation::Step:
      return "step";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "logistic") return Activation::Logistic;
  if (name == "relu") return Activation::Relu;
  if (name == "softmax") return Activation::Softmax;
  if (name == "identity") return Activation::Identity;
  if (name == "step") return Activation::Step;
  throw LookupError("nn", "unknown activation '" + name +
                              "' (valid: logistic, relu, softmax, identity, step)");
}

double logistic(double z) noexcept {
  // Evaluated on -|z| so that sigma(z) + sigma(-z) == 1 holds to rounding.
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Vector activate(Activation activation, const Vector& z) {
  switch (activation) {
    case Activation::Logistic:
      return z.unaryExpr([](double v) { return logistic(v); });
    case Activation::Relu:
      return z.cwiseMax(0.0);
    case Activation::Softmax: {
      const Vector e = (z.array() - z.maxCoeff()).exp();
      return e / e.sum();
    }
    case Activation::Identity:
      return z;
    case Activation::Step:
      return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
  }
  return z;
}

namespace {

// dE/dz from dE/dh for an elementwise (or softmax) activation.
Vector activation_backward(Activation activation, const Vector& z, const Vector& h,
                           const Vector& upstream) {
  switch (activation) {
    case Activation::Logistic:
      return upstream.cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));
    case Activation::Relu:
      return upstream.cwiseProduct(z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
    case Activation::Softmax:
      return h.cwiseProduct((upstream.array() - upstream.dot(h)).matrix());
    case Activation::Identity:
      return upstream;
    case Activation::Step:
      return Vector::Zero(z.size());
  }
  return upstream;
}

Vector with_bias(const Vector& x) {
  Vector out(x.size() + 1);
  out << x, 1.0;
  return out;
}

}  // namespace

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

Mlp Mlp::create(const std::vector<int>& sizes, const std::vector<Activation>& activations,
                RandomStream stream) {
  if (sizes.size() < 2 || activations.size() != sizes.size() - 1) {
    throw ShapeError("nn", "Mlp::create needs n+1 layer sizes and n activations");
  }
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] < 1 || sizes[l + 1] < 1) throw ShapeError("nn", "layer sizes must be >= 1");
    const double limit = std::sqrt(6.0 / (sizes[l] + sizes[l + 1]));
    RandomStream layer_stream = stream.fork(l);
    Matrix w(sizes[l] + 1, sizes[l + 1]);
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = layer_stream.uniform(-limit, limit);
    }
    layers.push_back({std::move(w), activations[l]});
  }
  return Mlp(std::move(layers));
}

Eigen::Index Mlp::input_size() const { return layers_.empty() ? 0 : layers_.front().inputs(); }

Eigen::Index Mlp::output_size() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

std::size_t Mlp::parameter_count() const {
  std::size_t count = 0;
  for (const DenseLayer& layer : layers_) count += static_cast<std::size_t>(layer.weights.size());
  return count;
}

void Mlp::validate() const {
  if (layers_.empty()) throw ShapeError("nn", "network has no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (layers_[l].weights.rows() < 2 || layers_[l].weights.cols() < 1) {
      throw ShapeError("nn", "layer " + std::to_string(l) + " needs at least one input and output");
    }
    if (!all_finite(layers_[l].weights)) {
      throw NumericError("nn", "layer " + std::to_string(l) + " has non-finite weights");
    }
    if (l + 1 < layers_.size() && layers_[l].outputs() != layers_[l + 1].inputs()) {
      throw ShapeError("nn", "layer " + std::to_string(l) + " outputs " +
                                 std::to_string(layers_[l].outputs()) + " but layer " +
                                 std::to_string(l + 1) + " expects " +
                                 std::to_string(layers_[l + 1].inputs()));
    }
  }
}

int perceptron(const Vector& x, const Vector& w, double b) {
  if (x.size() != w.size()) {
    throw ShapeError("nn", "perceptron: input and weight lengths differ");
  }
  return w.dot(x) + b > 0.0 ? 1 : 0;
}

namespace {

struct Trace {
  std::vector<Vector> inputs;  // bias-augmented input of each layer
  std::vector<Vector> pre;     // pre-activations
  std::vector<Vector> post;    // activations
};

Vector layer_product(const Mlp& net, std::size_t l, const Vector& a, const Backend& backend) {
  if (const auto* xbars = std::get_if<CrossbarBackend>(&backend)) {
    if (xbars->layers.size() != net.depth()) {
      throw ShapeError("nn", "crossbar backend has " + std::to_string(xbars->layers.size()) +
                                 " arrays for " + std::to_string(net.depth()) + " layers");
    }
    const Crossbar& xbar = xbars->layers[l];
    if (xbar.rows() != net.layers()[l].weights.rows() ||
        xbar.cols() != net.layers()[l].weights.cols()) {
      throw ShapeError("nn", "crossbar for layer " + std::to_string(l) +
                                 " does not match the weight shape");
    }
    if (xbars->row_order.empty()) return xbar.vmm(a, xbars->read, xbars->call_index);
    if (xbars->row_order.size() != net.depth() ||
        static_cast<Eigen::Index>(xbars->row_order[l].size()) != a.size()) {
      throw ShapeError("nn", "row order for layer " + std::to_string(l) + " does not match");
    }
    const std::vector<Eigen::Index>& order = xbars->row_order[l];
    Vector permuted(a.size());
    for (Eigen::Index p = 0; p < a.size(); ++p) permuted[p] = a[order[static_cast<std::size_t>(p)]];
    return xbar.vmm(permuted, xbars->read, xbars->call_index);
  }
  return matvec_ref(a, net.layers()[l].weights);
}

Trace forward_trace(const Mlp& net, const Vector& x, const Backend& backend) {
  if (x.size() != net.input_size()) {
    throw ShapeError("nn", "forward: input length " + std::to_string(x.size()) +
                               " does not match network input " +
                               std::to_string(net.input_size()));
  }
  Trace trace;
  Vector h = x;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    trace.inputs.push_back(with_bias(h));
    trace.pre.push_back(layer_product(net, l, trace.inputs.back(), backend));
    h = activate(net.layers()[l].activation, trace.pre.back());
    trace.post.push_back(h);
  }
  return trace;
}

Vector output_delta(const Mlp& net, Loss loss, const Trace& trace, const Vector& target) {
  const DenseLayer& last = net.layers().back();
  const Vector& y = trace.post.back();
  if (loss == Loss::CrossEntropy) {
    if (last.activation != Activation::Softmax) {
      throw ParameterError("nn", "cross-entropy loss requires a softmax output layer");
    }
    return y - target;
  }
  return activation_backward(last.activation, trace.pre.back(), y, y - target);
}

// Accumulates a_l delta_l^T into grads; backprop_weights supplies the matrices
// used to propagate deltas to earlier layers.
void accumulate_gradient(const Mlp& backprop_weights, Loss loss, const Trace& trace,
                         const Vector& target, Gradients& grads) {
  Vector delta = output_delta(backprop_weights, loss, trace, target);
  for (std::size_t l = backprop_weights.depth(); l-- > 0;) {
    grads[l].noalias() += trace.inputs[l] * delta.transpose();
    if (l == 0) break;
    const Matrix& w = backprop_weights.layers()[l].weights;
    const Vector upstream = w.topRows(w.rows() - 1) * delta;
    delta = activation_backward(backprop_weights.layers()[l - 1].activation, trace.pre[l - 1],
                                trace.post[l - 1], upstream);
  }
}

Gradients zero_gradients(const Mlp& net) {
  Gradients grads;
  for (const DenseLayer& layer : net.layers()) {
    grads.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
  }
  return grads;
}

void check_samples(const Mlp& net, const Samples& data) {
  if (data.size() == 0) throw ShapeError("nn", "dataset is empty");
  if (data.inputs.cols() != net.input_size() || data.targets.cols() != net.output_size() ||
      data.targets.rows() != data.inputs.rows()) {
    throw ShapeError("nn", "sample shapes do not match the network");
  }
}

Gradients batch_gradient(const Mlp& forward_net, const Mlp& backprop_net, const Samples& batch,
                         Loss loss, const Backend& backend) {
  Gradients grads = zero_gradients(backprop_net);
  for (Eigen::Index s = 0; s < batch.size(); ++s) {
    Backend sample_backend = backend;
    if (auto* xbars = std::get_if<CrossbarBackend>(&sample_backend)) {
      xbars->call_index = static_cast<std::uint64_t>(s);
    }
    const Trace trace = forward_trace(forward_net, batch.inputs.row(s).transpose(), sample_backend);
    accumulate_gradient(backprop_net, loss, trace, batch.targets.row(s).transpose(), grads);
  }
  for (Matrix& g : grads) g /= static_cast<double>(batch.size());
  return grads;
}

}  // namespace

Vector forward(const Mlp& net, const Vector& x, const Backend& backend) {
  return forward_trace(net, x, backend).post.back();
}

Samples Samples::subset(std::span<const Eigen::Index> rows) const {
  Samples out{Matrix(static_cast<Eigen::Index>(rows.size()), inputs.cols()),
              Matrix(static_cast<Eigen::Index>(rows.size()), targets.cols())};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.inputs.row(static_cast<Eigen::Index>(k)) = inputs.row(rows[k]);
    out.targets.row(static_cast<Eigen::Index>(k)) = targets.row(rows[k]);
  }
  return out;
}

std::string to_string(Loss loss) { return loss == Loss::Mse ? "mse" : "cross_entropy"; }

Loss loss_from_string(const std::string& name) {
  if (name == "mse") return Loss::Mse;
  if (name == "cross_entropy") return Loss::CrossEntropy;
  throw LookupError("nn", "unknown loss '" + name + "' (valid: mse, cross_entropy)");
}

double sample_loss(Loss loss, const Vector& output, const Vector& target) {
  if (output.size() != target.size()) throw ShapeError("nn", "loss: output/target mismatch");
  if (loss == Loss::Mse) return 0.5 * (output - target).squaredNorm();
  double total = 0.0;
  for (Eigen::Index k = 0; k < output.size(); ++k) {
    if (target[k] != 0.0) total -= target[k] * std::log(std::max(output[k], 1e-300));
  }
  return total;
}

double mean_loss(const Mlp& net, const Samples& data, Loss loss, const Backend& backend) {
  check_samples(net, data);
  double total = 0.0;
  for (Eigen::Index s = 0; s < data.size(); ++s) {
    total += sample_loss(loss, forward(net, data.inputs.row(s).transpose(), backend),
                         data.targets.row(s).transpose());
  }
  return total / static_cast<double>(data.size());
}

Gradients gradient(const Mlp& net, const Samples& batch, Loss loss) {
  check_samples(net, batch);
  return batch_gradient(net, net, batch, loss, ExactBackend{});
}

Vector flatten(const Mlp& net) {
  Vector out(static_cast<Eigen::Index>(net.parameter_count()));
  Eigen::Index offset = 0;
  for (const DenseLayer& layer : net.layers()) {
    out.segment(offset, layer.weights.size()) = layer.weights.reshaped();
    offset += layer.weights.size();
  }
  return out;
}

Mlp unflatten(const Mlp& shape, const Vector& params) {
  if (params.size() != static_cast<Eigen::Index>(shape.parameter_count())) {
    throw ShapeError("nn", "unflatten: parameter count mismatch");
  }
  std::vector<DenseLayer> layers = shape.layers();
  Eigen::Index offset = 0;
  for (DenseLayer& layer : layers) {
    layer.weights.reshaped() = params.segment(offset, layer.weights.size());
    offset += layer.weights.size();
  }
  return Mlp(std::move(layers));
}

Vector flatten(const Gradients& gradients) {
  Eigen::Index total = 0;
  for (const Matrix& g : gradients) total += g.size();
  Vector out(total);
  Eigen::Index offset = 0;
  for (const Matrix& g : gradients) {
    out.segment(offset, g.size()) = g.reshaped();
    offset += g.size();
  }
  return out;
}

Crossbar program_layer(const Matrix& weights, const CrossbarConfig& base,
                       const RandomStream& lineage) {
  const double peak = weights.cwiseAbs().maxCoeff();
  const double range = peak > 0.0 ? peak : 1.0;
  const MappingScheme& s = base.scheme;
  CrossbarConfig config = base;
  switch (s.variant()) {
    case MappingVariant::DifferentialPair:
      config.scheme = MappingScheme::differential_pair(s.window(), range, s.scaling().k_V);
      break;
    case MappingVariant::Naive:
      config.scheme = MappingScheme::naive(s.window(), -range, range, s.scaling().k_V);
      break;
    case MappingVariant::NonlinearPower:
      config.scheme =
          MappingScheme::nonlinear_power(s.window(), -range, range, s.power(), s.scaling().k_V);
      break;
  }
  return Crossbar::program(weights, config, lineage);
}

std::vector<Crossbar> program_network(const Mlp& net, const CrossbarConfig& base,
                                      const RandomStream& lineage) {
  std::vector<Crossbar> out;
  out.reserve(net.depth());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    out.push_back(program_layer(net.layers()[l].weights, base, lineage.fork(l)));
  }
  return out;
}

std::string to_string(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::None:
      return "none";
    case NoiseMode::Agnostic:
      return "agnostic";
    case NoiseMode::Aware:
      return "aware";
  }
  return "unknown";
}

NoiseMode noise_mode_from_string(const std::string& name) {
  if (name == "none") return NoiseMode::None;
  if (name == "agnostic") return NoiseMode::Agnostic;
  if (name == "aware") return NoiseMode::Aware;
  throw LookupError("nn", "unknown noise mode '" + name + "' (valid: none, agnostic, aware)");
}

void TrainConfig::validate() const {
  if (!(eta >= 0.0) || !std::isfinite(eta)) throw ParameterError("nn", "eta must be >= 0");
  if (epochs < 1) throw ParameterError("nn", "epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("nn", "batch_size must be >= 1");
  if (!(sigma_w >= 0.0)) throw ParameterError("nn", "sigma_w must be >= 0");
  if (noise_mode == NoiseMode::Aware && !aware_crossbar) {
    throw ParameterError("nn", "aware noise mode needs a crossbar configuration");
  }
}

namespace {
enum TrainTag : std::uint64_t { kShuffleTag = 1, kNoiseTag = 2, kAwareTag = 3 };
}

TrainResult train_sgd(Mlp net, const Samples& data, const TrainConfig& config) {
  config.validate();
  net.validate();
  check_samples(net, data);
  const RandomStream root(config.seed, 0x7261696eULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  TrainResult result;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    RandomStream shuffle = root.fork({kShuffleTag, static_cast<std::uint64_t>(epoch)});
    for (std::size_t k = order.size(); k > 1; --k) {
      const auto pick = static_cast<std::size_t>(shuffle.next_u64() % k);
      std::swap(order[k - 1], order[pick]);
    }
    std::uint64_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t count =
          std::min(order.size() - start, static_cast<std::size_t>(config.batch_size));
      const Samples batch = data.subset(std::span(order).subspan(start, count));
      Gradients grads;
      switch (config.noise_mode) {
        case NoiseMode::None:
          grads = batch_gradient(net, net, batch, config.loss, ExactBackend{});
          break;
        case NoiseMode::Agnostic: {
          Mlp noisy = net;
          RandomStream noise =
              root.fork({kNoiseTag, static_cast<std::uint64_t>(epoch), batch_index});
          for (DenseLayer& layer : noisy.layers()) {
            layer.weights = layer.weights.unaryExpr(
                [&](double w) { return w + config.sigma_w * noise.normal(); });
          }
          grads = batch_gradient(noisy, noisy, batch, config.loss, ExactBackend{});
          break;
        }
        case NoiseMode::Aware: {
          const std::vector<Crossbar> xbars = program_network(
              net, *config.aware_crossbar,
              root.fork({kAwareTag, static_cast<std::uint64_t>(epoch), batch_index}));
          grads = batch_gradient(net, net, batch, config.loss,
                                 CrossbarBackend{xbars, config.aware_read, 0});
          break;
        }
      }
      for (std::size_t l = 0; l < net.depth(); ++l) {
        net.layers()[l].weights -= config.eta * grads[l];
      }
    }
    const double loss = mean_loss(net, data, config.loss);
    if (!std::isfinite(loss)) {
      throw TrainingError("nn", "training diverged: non-finite loss at epoch " +
                                    std::to_string(epoch));
    }
    result.loss_history.push_back(loss);
  }
  result.net = std::move(net);
  return result;
}

SensitivityMap sensitivity(const Mlp& net, const Samples& batch, double eta, Loss loss) {
  SensitivityMap map{gradient(net, batch, loss)};
  for (Matrix& g : map.delta_w) g *= -eta;
  return map;
}

Vector ensemble_predict(std::span<const EnsembleMember> members, const Vector& x) {
  if (members.empty()) throw ShapeError("nn", "ensemble has no members");
  Vector sum;
  for (const EnsembleMember& member : members) {
    const Vector y = forward(*member.net, x, member.backend);
    if (sum.size() == 0) {
      sum = y;
    } else if (y.size() != sum.size()) {
      throw ShapeError("nn", "ensemble members disagree on output size");
    } else {
      sum += y;
    }
  }
  return members.size() == 1 ? sum : Vector(sum / static_cast<double>(members.size()));
}

Eigen::Index argmax(const Vector& values) {
  Eigen::Index best = 0;
  values.maxCoeff(&best);
  return best;
}

}  // namespace xbarsim
