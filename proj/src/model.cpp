#include "menet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "menet/error.hpp"
#include "menet/rng.hpp"

namespace menet {
namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'M', 'E', 'N', 'E', 'T', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

void check_input(const ClassifierParams& params, Eigen::Index rows) {
  if (params.layers.empty()) throw Error(Errc::shape_mismatch, "classifier has no layers");
  if (rows != params.layers.front().weight.cols()) {
    throw Error(Errc::shape_mismatch, "classifier expects input of size " +
                                          std::to_string(params.layers.front().weight.cols()) +
                                          ", got " + std::to_string(rows));
  }
}

struct Activations {
  std::vector<DenseMatrix> pre;   // z per layer
  std::vector<DenseMatrix> post;  // a per layer, post[0] = input
};

Activations run_forward(const ClassifierParams& params, const DenseMatrix& xs) {
  check_input(params, xs.rows());
  Activations act;
  act.post.push_back(xs);
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    DenseMatrix z = layer.weight * act.post.back();
    z.colwise() += layer.bias;
    act.pre.push_back(z);
    if (l + 1 < params.layers.size()) {
      act.post.push_back(z.cwiseMax(0.0));
    }
  }
  return act;
}

// Column-wise log-softmax.
DenseMatrix log_softmax(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double m = logits.col(j).maxCoeff();
    const double lse = m + std::log((logits.col(j).array() - m).exp().sum());
    out.col(j) = logits.col(j).array() - lse;
  }
  return out;
}

void write_bytes(std::ofstream& out, const void* data, std::size_t n) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T read() {
    T value;
    take(&value, sizeof(T));
    return value;
  }

  void take(void* dst, std::size_t n) {
    if (bytes_.size() - pos_ < n) {
      throw Error(Errc::corrupt_checkpoint, "checkpoint truncated at byte " + std::to_string(pos_));
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

DenseMatrix DifferentiableModel::logits_batch(const DenseMatrix& xs) const {
  DenseMatrix out(static_cast<Eigen::Index>(num_classes()), xs.cols());
  for (Eigen::Index j = 0; j < xs.cols(); ++j) out.col(j) = logits(xs.col(j));
  return out;
}

std::size_t DifferentiableModel::predict(const Vector& x) const {
  Eigen::Index arg = 0;
  logits(x).maxCoeff(&arg);
  return static_cast<std::size_t>(arg);
}

std::vector<std::size_t> ClassifierParams::sizes() const {
  std::vector<std::size_t> out;
  if (layers.empty()) return out;
  out.push_back(input_size());
  for (const auto& l : layers) out.push_back(static_cast<std::size_t>(l.weight.rows()));
  return out;
}

ClassifierParams ClassifierParams::init(std::span<const std::size_t> sizes, std::uint64_t seed) {
  ClassifierParams p = zeros(sizes);
  CounterRng rng(seed);
  for (auto& layer : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = rng.uniform(-bound, bound);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-bound, bound);
  }
  return p;
}

ClassifierParams ClassifierParams::zeros(std::span<const std::size_t> sizes) {
  if (sizes.size() < 2) throw Error(Errc::invalid_argument, "classifier needs at least two sizes");
  ClassifierParams p;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    if (sizes[l] == 0 || sizes[l + 1] == 0)
      throw Error(Errc::invalid_argument, "classifier layer sizes must be positive");
    const auto in = static_cast<Eigen::Index>(sizes[l]);
    const auto out = static_cast<Eigen::Index>(sizes[l + 1]);
    p.layers.push_back({DenseMatrix::Zero(out, in), Vector::Zero(out)});
  }
  return p;
}

bool ClassifierParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

Gradients Gradients::zeros_like(const ClassifierParams& params) {
  Gradients g;
  for (const auto& l : params.layers) {
    g.layers.push_back({DenseMatrix::Zero(l.weight.rows(), l.weight.cols()),
                        Vector::Zero(l.bias.size())});
  }
  g.input = Vector::Zero(static_cast<Eigen::Index>(params.input_size()));
  return g;
}

bool Gradients::all_finite() const {
  return input.allFinite() && std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
           return l.weight.allFinite() && l.bias.allFinite();
         });
}

Vector forward(const ClassifierParams& params, const Vector& x) {
  return forward_batch(params, x);
}

DenseMatrix forward_batch(const ClassifierParams& params, const DenseMatrix& xs) {
  check_input(params, xs.rows());
  DenseMatrix a = xs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    DenseMatrix z = params.layers[l].weight * a;
    z.colwise() += params.layers[l].bias;
    a = (l + 1 < params.layers.size()) ? DenseMatrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return a;
}

BatchLossAndGrad batch_loss_and_grad(const ClassifierParams& params, const DenseMatrix& xs,
                                     std::span<const std::size_t> labels) {
  if (static_cast<std::size_t>(xs.cols()) != labels.size() || labels.empty()) {
    throw Error(Errc::shape_mismatch, "batch: label count does not match example count");
  }
  const std::size_t classes = params.num_classes();
  for (std::size_t y : labels) {
    if (y >= classes)
      throw Error(Errc::invalid_label, "label " + std::to_string(y) + " >= class count " +
                                           std::to_string(classes));
  }
  const Activations act = run_forward(params, xs);
  const DenseMatrix logp = log_softmax(act.pre.back());
  const auto batch = static_cast<double>(labels.size());

  BatchLossAndGrad out;
  // Unscaled per-example deltas; parameter gradients are divided by the
  // batch size at the end while input gradients stay per-example.
  DenseMatrix delta = logp.array().exp();
  for (std::size_t j = 0; j < labels.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    const auto y = static_cast<Eigen::Index>(labels[j]);
    out.loss -= logp(y, col);
    delta(y, col) -= 1.0;
    Eigen::Index arg = 0;
    act.pre.back().col(col).maxCoeff(&arg);
    if (arg == y) ++out.correct;
  }
  out.loss /= batch;

  out.layers.resize(params.layers.size());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    out.layers[l].weight = delta * act.post[l].transpose() / batch;
    out.layers[l].bias = delta.rowwise().sum() / batch;
    DenseMatrix back = params.layers[l].weight.transpose() * delta;
    if (l == 0) {
      out.input_grads = std::move(back);
    } else {
      delta = back.cwiseProduct((act.pre[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

LossAndGrad loss_and_grad(const ClassifierParams& params, const Vector& x, std::size_t label) {
  const std::size_t labels[] = {label};
  BatchLossAndGrad b = batch_loss_and_grad(params, x, labels);
  LossAndGrad out;
  out.loss = b.loss;
  out.grads.layers = std::move(b.layers);
  out.grads.input = b.input_grads.col(0);
  return out;
}

MomentumSgd::MomentumSgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {
  if (!(lr > 0.0)) throw Error(Errc::invalid_argument, "sgd: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw Error(Errc::invalid_argument, "sgd: momentum must lie in [0, 1)");
}

void MomentumSgd::set_lr(double lr) {
  if (!(lr > 0.0)) throw Error(Errc::invalid_argument, "sgd: learning rate must be > 0");
  lr_ = lr;
}

void MomentumSgd::step(ClassifierParams& params, std::span<const DenseLayer> grads) {
  if (grads.size() != params.layers.size())
    throw Error(Errc::shape_mismatch, "sgd: gradient layer count does not match parameters");
  for (std::size_t l = 0; l < grads.size(); ++l) {
    if (grads[l].weight.rows() != params.layers[l].weight.rows() ||
        grads[l].weight.cols() != params.layers[l].weight.cols() ||
        grads[l].bias.size() != params.layers[l].bias.size())
      throw Error(Errc::shape_mismatch, "sgd: gradient shape does not match layer " +
                                            std::to_string(l));
    if (!grads[l].weight.allFinite() || !grads[l].bias.allFinite())
      throw Error(Errc::non_finite, "sgd: non-finite gradient in layer " + std::to_string(l));
  }
  if (velocity_.empty()) {
    for (const auto& l : params.layers)
      velocity_.push_back({DenseMatrix::Zero(l.weight.rows(), l.weight.cols()),
                           Vector::Zero(l.bias.size())});
  }
  for (std::size_t l = 0; l < grads.size(); ++l) {
    velocity_[l].weight = momentum_ * velocity_[l].weight + grads[l].weight;
    velocity_[l].bias = momentum_ * velocity_[l].bias + grads[l].bias;
    params.layers[l].weight -= lr_ * velocity_[l].weight;
    params.layers[l].bias -= lr_ * velocity_[l].bias;
  }
}

Classifier::Classifier(ClassifierParams params) : params_(std::move(params)) {
  if (params_.layers.empty()) throw Error(Errc::invalid_argument, "classifier has no layers");
}

double Classifier::loss(const Vector& x, std::size_t label) const {
  if (label >= num_classes()) throw Error(Errc::invalid_label, "label out of range");
  const Vector z = logits(x);
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum()) - z[static_cast<Eigen::Index>(label)];
}

Vector Classifier::input_gradient(const Vector& x, std::size_t label) const {
  return loss_and_grad(params_, x, label).grads.input;
}

void save_checkpoint(const ClassifierParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
  write_bytes(out, kMagic, sizeof(kMagic));
  const std::uint32_t version = kCheckpointVersion;
  const auto count = static_cast<std::uint32_t>(params.layers.size());
  write_bytes(out, &version, sizeof(version));
  write_bytes(out, &count, sizeof(count));
  for (const auto& l : params.layers) {
    const auto rows = static_cast<std::uint64_t>(l.weight.rows());
    const auto cols = static_cast<std::uint64_t>(l.weight.cols());
    write_bytes(out, &rows, sizeof(rows));
    write_bytes(out, &cols, sizeof(cols));
  }
  for (const auto& l : params.layers) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = l.weight;
    write_bytes(out, w.data(), sizeof(double) * static_cast<std::size_t>(w.size()));
    write_bytes(out, l.bias.data(), sizeof(double) * static_cast<std::size_t>(l.bias.size()));
  }
  if (!out) throw Error(Errc::io_error, "failed writing " + path.string());
}

ClassifierParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));

  char magic[sizeof(kMagic)];
  if (r.remaining() < sizeof(magic))
    throw Error(Errc::corrupt_checkpoint, path.string() + ": file too short for a header");
  r.take(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw Error(Errc::format_error, path.string() + ": not a checkpoint (bad magic bytes)");
  const auto version = r.read<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(Errc::version_mismatch, path.string() + ": checkpoint version " +
                                            std::to_string(version) + ", expected " +
                                            std::to_string(kCheckpointVersion));
  }
  const auto count = r.read<std::uint32_t>();
  if (count == 0 || count > 1024)
    throw Error(Errc::corrupt_checkpoint, path.string() + ": implausible layer count");

  std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes(count);
  for (auto& [rows, cols] : shapes) {
    rows = r.read<std::uint64_t>();
    cols = r.read<std::uint64_t>();
    if (rows == 0 || cols == 0 || rows * cols > r.remaining() / sizeof(double))
      throw Error(Errc::corrupt_checkpoint, path.string() + ": bad layer shape");
  }
  ClassifierParams p;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto [rows, cols] = shapes[l];
    if (l > 0 && cols != shapes[l - 1].first)
      throw Error(Errc::corrupt_checkpoint, path.string() + ": layer shapes do not chain");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w(rows, cols);
    Vector b(static_cast<Eigen::Index>(rows));
    r.take(w.data(), sizeof(double) * rows * cols);
    r.take(b.data(), sizeof(double) * rows);
    p.layers.push_back({w, b});
  }
  if (r.remaining() != 0)
    throw Error(Errc::corrupt_checkpoint, path.string() + ": trailing bytes after payload");
  if (!p.all_finite())
    throw Error(Errc::corrupt_checkpoint, path.string() + ": non-finite parameter values");
  return p;
}

}  // namespace menet
