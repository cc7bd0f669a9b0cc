#include "leverbid/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "leverbid/io.hpp"

namespace leverbid::nn {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::relu:
      z = z.cwiseMax(0.0);
      break;
    case Activation::tanh:
      z = z.array().tanh().matrix();
      break;
    case Activation::softmax:
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        const double mx = col.maxCoeff();
        col = (col.array() - mx).exp().matrix();
        col /= col.sum();
      }
      break;
    case Activation::linear:
      break;
  }
}

// Given activation outputs y and dL/dy, return dL/d(preactivation).
Eigen::MatrixXd activation_backward(Activation a, const Eigen::MatrixXd& y,
                                    const Eigen::MatrixXd& grad) {
  switch (a) {
    case Activation::relu:
      return (y.array() > 0.0).select(grad, 0.0);
    case Activation::tanh:
      return (grad.array() * (1.0 - y.array().square())).matrix();
    case Activation::softmax: {
      Eigen::MatrixXd out(grad.rows(), grad.cols());
      for (Eigen::Index c = 0; c < grad.cols(); ++c) {
        const double dot = y.col(c).dot(grad.col(c));
        out.col(c) = (y.col(c).array() * (grad.col(c).array() - dot)).matrix();
      }
      return out;
    }
    case Activation::linear:
      return grad;
  }
  return grad;
}

using ReluMasks = std::vector<Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>>;

Eigen::MatrixXd forward_with_masks(const Network& net, const Eigen::MatrixXd& x, ReluMasks& masks) {
  masks.clear();
  Eigen::MatrixXd h = x;
  for (const auto& layer : net.layers()) {
    Eigen::MatrixXd z = (layer.weight * h).colwise() + layer.bias;
    if (layer.activation == Activation::relu) masks.push_back(z.array() > 0.0);
    apply_activation(layer.activation, z);
    h = std::move(z);
  }
  return h;
}

bool masks_equal(const ReluMasks& a, const ReluMasks& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] != b[i]).any()) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
    case Activation::linear: return "linear";
  }
  return "linear";
}

Activation activation_from_string(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "softmax") return Activation::softmax;
  if (name == "linear") return Activation::linear;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

bool GradientSet::all_zero() const {
  for (const auto& w : weight) if (!w.isZero(0.0)) return false;
  for (const auto& b : bias) if (!b.isZero(0.0)) return false;
  return input.size() == 0 || input.isZero(0.0);
}

bool GradientSet::all_finite() const {
  for (const auto& w : weight) if (!w.allFinite()) return false;
  for (const auto& b : bias) if (!b.allFinite()) return false;
  return input.size() == 0 || input.allFinite();
}

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weight.rows() < 1 || l.weight.cols() < 1) throw ShapeError("empty layer");
    if (l.bias.size() != l.weight.rows()) throw ShapeError("bias length does not match layer output");
    if (i > 0 && layers_[i - 1].weight.rows() != l.weight.cols()) {
      throw ShapeError("layer " + std::to_string(i) + " input does not chain with previous output");
    }
  }
  reset_moments();
}

void Network::reset_moments() {
  moments_ = AdamMoments{};
  for (const auto& l : layers_) {
    moments_.m_weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    moments_.v_weight.push_back(Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    moments_.m_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
    moments_.v_bias.push_back(Eigen::VectorXd::Zero(l.bias.size()));
  }
}

std::size_t Network::input_size() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.front().weight.cols());
}

std::size_t Network::output_size() const {
  return layers_.empty() ? 0 : static_cast<std::size_t>(layers_.back().weight.rows());
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::vector<int> Network::layer_sizes() const {
  std::vector<int> sizes;
  if (layers_.empty()) return sizes;
  sizes.push_back(static_cast<int>(layers_.front().weight.cols()));
  for (const auto& l : layers_) sizes.push_back(static_cast<int>(l.weight.rows()));
  return sizes;
}

Eigen::VectorXd Network::parameters() const {
  Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index off = 0;
  for (const auto& l : layers_) {
    flat.segment(off, l.weight.size()) = Eigen::Map<const Eigen::VectorXd>(l.weight.data(), l.weight.size());
    off += l.weight.size();
    flat.segment(off, l.bias.size()) = l.bias;
    off += l.bias.size();
  }
  return flat;
}

void Network::set_parameters(const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count())) {
    throw ShapeError("parameter vector has wrong length");
  }
  Eigen::Index off = 0;
  for (auto& l : layers_) {
    Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) = flat.segment(off, l.weight.size());
    off += l.weight.size();
    l.bias = flat.segment(off, l.bias.size());
    off += l.bias.size();
  }
  touch();
}

Layer& Network::mutable_layer(std::size_t i) {
  touch();
  return layers_.at(i);
}

bool Network::same_architecture(const Network& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.activation != b.activation) {
      return false;
    }
  }
  return true;
}

Network mlp_new(const std::vector<int>& layer_sizes, Activation hidden, Activation output,
                std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ShapeError("mlp_new needs at least input and output sizes");
  for (int s : layer_sizes) {
    if (s < 1) throw ShapeError("layer sizes must be >= 1");
  }
  std::mt19937_64 rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    const int in = layer_sizes[i];
    const int out = layer_sizes[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer l;
    l.weight.resize(out, in);
    l.bias.resize(out);
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r) l.weight(r, c) = dist(rng);
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = dist(rng);
    l.activation = (i + 2 == layer_sizes.size()) ? output : hidden;
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs, ForwardCache* cache) {
  if (static_cast<std::size_t>(inputs.rows()) != net.input_size()) {
    throw ShapeError("forward: input has " + std::to_string(inputs.rows()) + " rows, network expects " +
                     std::to_string(net.input_size()));
  }
  if (cache) {
    cache->values.clear();
    cache->values.reserve(net.num_layers() + 1);
    cache->values.push_back(inputs);
    cache->owner = &net;
    cache->version = net.version();
  }
  Eigen::MatrixXd h = inputs;
  for (const auto& layer : net.layers()) {
    Eigen::MatrixXd z = layer.weight * h;
    z.colwise() += layer.bias;
    apply_activation(layer.activation, z);
    h = std::move(z);
    if (cache) cache->values.push_back(h);
  }
  return h;
}

ForwardResult forward(const Network& net, const Eigen::VectorXd& input) {
  ForwardResult r;
  Eigen::MatrixXd out = forward_batch(net, input, &r.cache);
  r.output = out.col(0);
  return r;
}

GradientSet backward(const Network& net, const ForwardCache& cache, const Eigen::MatrixXd& output_grad) {
  if (cache.owner != &net || cache.version != net.version() ||
      cache.values.size() != net.num_layers() + 1) {
    throw ShapeError("backward: cache does not belong to this network state");
  }
  const auto batch = cache.values.front().cols();
  if (static_cast<std::size_t>(output_grad.rows()) != net.output_size() || output_grad.cols() != batch) {
    throw ShapeError("backward: output gradient shape mismatch");
  }
  const auto& layers = net.layers();
  GradientSet g;
  g.weight.resize(layers.size());
  g.bias.resize(layers.size());
  Eigen::MatrixXd delta = output_grad;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const auto& l = layers[i];
    Eigen::MatrixXd dz = activation_backward(l.activation, cache.values[i + 1], delta);
    g.weight[i] = dz * cache.values[i].transpose();
    g.bias[i] = dz.rowwise().sum();
    delta = l.weight.transpose() * dz;
  }
  g.input = std::move(delta);
  return g;
}

void adam_step(Network& net, const GradientSet& grads, double lr, double l2_coeff) {
  if (!(lr > 0.0)) throw std::invalid_argument("adam_step: lr must be positive");
  if (!(l2_coeff >= 0.0)) throw std::invalid_argument("adam_step: l2_coeff must be >= 0");
  auto& layers = net.layers_;
  if (grads.weight.size() != layers.size() || grads.bias.size() != layers.size()) {
    throw ShapeError("adam_step: gradient set does not match network");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (grads.weight[i].rows() != layers[i].weight.rows() || grads.weight[i].cols() != layers[i].weight.cols() ||
        grads.bias[i].size() != layers[i].bias.size()) {
      throw ShapeError("adam_step: gradient shape mismatch at layer " + std::to_string(i));
    }
    if (!grads.weight[i].allFinite() || !grads.bias[i].allFinite()) {
      throw DivergenceError("adam_step: non-finite gradient at layer " + std::to_string(i));
    }
  }
  auto& mom = net.moments_;
  mom.step += 1;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(mom.step));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(mom.step));
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    auto g = (grad.array() + l2_coeff * param.array()).eval();
    m.array() = kBeta1 * m.array() + (1.0 - kBeta1) * g;
    v.array() = kBeta2 * v.array() + (1.0 - kBeta2) * g.square();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grads.weight[i], mom.m_weight[i], mom.v_weight[i]);
    update(layers[i].bias, grads.bias[i], mom.m_bias[i], mom.v_bias[i]);
  }
  net.touch();
}

void soft_update(Network& target, const Network& source, double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("soft_update: tau must lie in [0,1]");
  if (!target.same_architecture(source)) throw ShapeError("soft_update: architecture mismatch");
  for (std::size_t i = 0; i < target.layers_.size(); ++i) {
    auto& t = target.layers_[i];
    const auto& s = source.layers_[i];
    t.weight = tau * s.weight + (1.0 - tau) * t.weight;
    t.bias = tau * s.bias + (1.0 - tau) * t.bias;
  }
  target.touch();
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

double finite_diff_check(const Network& net, const Eigen::VectorXd& input, double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be positive");
  auto fr = forward(net, input);
  const GradientSet g = backward(net, fr.cache, Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(net.output_size()), 1));

  ReluMasks base_masks;
  forward_with_masks(net, input, base_masks);

  double worst = 0.0;
  Network probe = net;
  const Eigen::VectorXd theta = net.parameters();

  // Analytic gradient flattened in the same order as parameters().
  Eigen::VectorXd analytic(theta.size());
  {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < g.weight.size(); ++i) {
      analytic.segment(off, g.weight[i].size()) = Eigen::Map<const Eigen::VectorXd>(g.weight[i].data(), g.weight[i].size());
      off += g.weight[i].size();
      analytic.segment(off, g.bias[i].size()) = g.bias[i];
      off += g.bias[i].size();
    }
  }

  ReluMasks plus_masks, minus_masks;
  Eigen::VectorXd t = theta;
  for (Eigen::Index k = 0; k < theta.size(); ++k) {
    t(k) = theta(k) + eps;
    probe.set_parameters(t);
    const double fp = forward_with_masks(probe, input, plus_masks).sum();
    t(k) = theta(k) - eps;
    probe.set_parameters(t);
    const double fm = forward_with_masks(probe, input, minus_masks).sum();
    t(k) = theta(k);
    if (!masks_equal(plus_masks, base_masks) || !masks_equal(minus_masks, base_masks)) continue;
    worst = std::max(worst, relative_error(analytic(k), (fp - fm) / (2.0 * eps)));
  }

  Eigen::VectorXd x = input;
  for (Eigen::Index k = 0; k < input.size(); ++k) {
    x(k) = input(k) + eps;
    const double fp = forward_with_masks(net, x, plus_masks).sum();
    x(k) = input(k) - eps;
    const double fm = forward_with_masks(net, x, minus_masks).sum();
    x(k) = input(k);
    if (!masks_equal(plus_masks, base_masks) || !masks_equal(minus_masks, base_masks)) continue;
    worst = std::max(worst, relative_error(g.input(k, 0), (fp - fm) / (2.0 * eps)));
  }
  return worst;
}

void save_network(const Network& net, const std::filesystem::path& path) {
  static_assert(std::endian::native == std::endian::little, "parameter files are little-endian");
  nlohmann::json header;
  header["format"] = "leverbid-mlp";
  header["version"] = 1;
  header["layer_sizes"] = net.layer_sizes();
  std::vector<std::string> acts;
  for (const auto& l : net.layers()) acts.emplace_back(to_string(l.activation));
  header["activations"] = acts;
  header["step"] = net.step_count();
  header["parameter_count"] = net.parameter_count();

  const Eigen::VectorXd flat = net.parameters();
  std::string blob = header.dump();
  blob.push_back('\n');
  blob.append(reinterpret_cast<const char*>(flat.data()), static_cast<std::size_t>(flat.size()) * sizeof(double));
  io::write_file_atomic(path, blob);
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open network file " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "leverbid-mlp") throw std::runtime_error("not a leverbid network file");
  const auto sizes = header.at("layer_sizes").get<std::vector<int>>();
  const auto acts = header.at("activations").get<std::vector<std::string>>();
  if (acts.size() + 1 != sizes.size()) throw std::runtime_error("network header is inconsistent");

  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    Layer l;
    l.weight = Eigen::MatrixXd::Zero(sizes[i + 1], sizes[i]);
    l.bias = Eigen::VectorXd::Zero(sizes[i + 1]);
    l.activation = activation_from_string(acts[i]);
    layers.push_back(std::move(l));
  }
  Network net(std::move(layers));
  Eigen::VectorXd flat(static_cast<Eigen::Index>(net.parameter_count()));
  in.read(reinterpret_cast<char*>(flat.data()), static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (in.gcount() != static_cast<std::streamsize>(flat.size() * sizeof(double))) {
    throw std::runtime_error("network file truncated: " + path.string());
  }
  net.set_parameters(flat);
  net.moments_.step = header.value("step", std::int64_t{0});
  return net;
}

}  // namespace leverbid::nn
