#pragma once

// Small dense feed-forward networks with hand-written backprop and Adam.
//
// Batched calls take column-major sample matrices: one column per sample,
// one row per feature. Single-vector overloads wrap the batched path.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace leverbid::nn {

enum class Activation { relu, tanh, softmax, linear };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view name);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a gradient or loss turns non-finite during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::linear;
};

struct AdamMoments {
  std::vector<Eigen::MatrixXd> m_weight, v_weight;
  std::vector<Eigen::VectorXd> m_bias, v_bias;
  std::int64_t step = 0;
};

/// Parameter gradients summed over the batch, plus d(scalar)/d(input) per sample.
struct GradientSet {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd input;  // in x batch

  bool all_zero() const;
  bool all_finite() const;
};

class Network;

/// Activation trace of one forward call. Only valid for the network (and
/// parameter version) that produced it.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> values;  // values[0] = input, values[i+1] = output of layer i
  const Network* owner = nullptr;
  std::uint64_t version = 0;
};

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<Layer> layers);

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t parameter_count() const;
  std::vector<int> layer_sizes() const;

  const std::vector<Layer>& layers() const { return layers_; }
  const AdamMoments& moments() const { return moments_; }
  std::int64_t step_count() const { return moments_.step; }
  std::uint64_t version() const { return version_; }

  /// Flattened parameters in layer order, weights (column-major) then bias.
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& flat);

  // Direct parameter access for tests and initialization tweaks. Bumps the
  // version so outstanding caches become stale.
  Layer& mutable_layer(std::size_t i);

  bool same_architecture(const Network& other) const;

  friend void adam_step(Network& net, const GradientSet& grads, double lr, double l2_coeff);
  friend void soft_update(Network& target, const Network& source, double tau);
  friend Network load_network(const std::filesystem::path& path);

 private:
  void reset_moments();
  void touch() { ++version_; }

  std::vector<Layer> layers_;
  AdamMoments moments_;
  std::uint64_t version_ = 0;
};

Network mlp_new(const std::vector<int>& layer_sizes, Activation hidden, Activation output,
                std::uint64_t seed);

struct ForwardResult {
  Eigen::VectorXd output;
  ForwardCache cache;
};

ForwardResult forward(const Network& net, const Eigen::VectorXd& input);
Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs,
                              ForwardCache* cache = nullptr);

GradientSet backward(const Network& net, const ForwardCache& cache,
                     const Eigen::MatrixXd& output_grad);

// Adam with beta1=0.9, beta2=0.999, eps=1e-8; l2_coeff * param is added to
// the gradient before the moment update.
void adam_step(Network& net, const GradientSet& grads, double lr, double l2_coeff);

// target <- tau * source + (1 - tau) * target
void soft_update(Network& target, const Network& source, double tau);

/// Worst relative error between backward() and central differences of
/// sum(outputs), over all parameters and inputs. Coordinates whose +/-eps
/// perturbation flips any relu unit are skipped.
double finite_diff_check(const Network& net, const Eigen::VectorXd& input, double eps);

// Relative error used by the gradient checks: |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

// Binary format: one JSON header line, then little-endian float64 parameters.
void save_network(const Network& net, const std::filesystem::path& path);
Network load_network(const std::filesystem::path& path);

}  // namespace leverbid::nn
