#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "voxl/rlenv.hpp"
#include "voxl/volume.hpp"

namespace voxl {

using QValues = std::array<double, kNumActions>;

enum class LayerKind { kConv3d, kFlatten, kDense };

// One entry of the architecture descriptor. Conv layers are "valid"
// (unpadded) cubic kernels; dense layers act on the flattened channel-major
// activation of the last conv layer.
struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  int in = 0;        // channels (conv) or features (dense)
  int out = 0;       // channels (conv) or features (dense)
  int kernel = 0;    // conv only
  int stride = 0;    // conv only
  bool relu = false;
  Dims in_shape{};   // conv only, spatial
  Dims out_shape{};  // conv only, spatial

  std::size_t weight_count() const;
  std::size_t parameter_count() const { return weight_count() + static_cast<std::size_t>(out); }
};

struct Architecture {
  Dims obs_dims;
  std::vector<LayerSpec> layers;

  std::size_t parameter_count() const;
  std::string describe() const;
  // Inverse of describe(); lines starting with "meta" are ignored here.
  static Architecture parse(const std::string& text);

  friend bool operator==(const Architecture& a, const Architecture& b) {
    return a.describe() == b.describe();
  }
};

// conv(8, 3^3, stride 2, ReLU) -> conv(16, 3^3, stride 2, ReLU) -> flatten
// -> dense 128 ReLU -> dense 6. Throws kInvalidArgument when an axis is
// shorter than kMinObsExtent.
inline constexpr int kMinObsExtent = 7;
Architecture default_architecture(const Dims& obs_dims);

// Output extent of an unpadded convolution.
inline int conv_out_extent(int in, int kernel, int stride) {
  return in < kernel ? 0 : (in - kernel) / stride + 1;
}

class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(Architecture arch, std::vector<double> params);

  const Architecture& architecture() const { return arch_; }
  const Dims& obs_dims() const { return arch_.obs_dims; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> mutable_parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }
  // Offset of layer `i`'s weights within parameters(); its bias follows them.
  std::size_t layer_offset(std::size_t i) const { return offsets_.at(i); }

 private:
  Architecture arch_;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;
};

QNetwork init_network(const Dims& obs_dims, std::uint64_t seed);

QValues q_forward(const QNetwork& net, const Volume3D& obs);
std::vector<QValues> q_forward_batch(const QNetwork& net, std::span<const Volume3D* const> obs);

struct TrainHyper {
  double gamma = 0.9;
  double lr = 1e-4;
  int batch_size = 48;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  long epsilon_decay_steps = 5000;  // environment steps
  long target_sync_every = 500;     // gradient steps
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

double epsilon_at(const TrainHyper& hyper, long env_step);

// Uniform random action with probability epsilon, else argmax with the
// smallest index winning ties.
Action select_action(const QValues& q, double epsilon, std::mt19937_64& rng);
int argmax_action(const QValues& q);

class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}

  void apply(std::span<double> params, std::span<const double> grad, const TrainHyper& hyper);
  long steps() const { return t_; }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  long t_ = 0;
};

// Fixed-capacity FIFO ring of transitions.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  // i-th oldest surviving transition.
  const Transition& at(std::size_t i) const;
  // Uniform draw with replacement.
  const Transition& sample(std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;  // next slot to overwrite once full
  std::vector<Transition> items_;
};

// Mean Huber loss between Q(s, a) and r + gamma * max_a' Q_target(s', a')
// (no bootstrap on terminal s'). When `grad` is non-null it receives dLoss/dθ.
double td_loss(const QNetwork& net, const QNetwork& target, std::span<const Transition> batch,
               double gamma, std::vector<double>* grad = nullptr);

// One optimizer step; returns the loss measured before the update.
double td_train_step(QNetwork& net, const QNetwork& target, std::span<const Transition> batch,
                     const TrainHyper& hyper, AdamState& adam);

struct GradientCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  int sign_mismatches = 0;  // among parameters with |grad| > 1e-6
};

GradientCheckResult gradient_check(const QNetwork& net, const QNetwork& target,
                                   std::span<const Transition> batch, double gamma,
                                   int n_params = 200, std::uint64_t seed = 0, double h = 1e-5);

// VOXLNET1 checkpoint: magic, u32 descriptor length, descriptor text
// (architecture plus "meta <key> <value>" lines), f64 parameters.
using CheckpointMeta = std::map<std::string, std::string>;

struct Checkpoint {
  QNetwork network;
  CheckpointMeta meta;
};

std::vector<std::uint8_t> encode_checkpoint(const QNetwork& net, const CheckpointMeta& meta = {});
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const QNetwork& net, const std::filesystem::path& path,
                     const CheckpointMeta& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace voxl
