#include "voxl/dqn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "voxl/error.hpp"

namespace voxl {

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string relu_tag(bool relu) { return relu ? "relu" : "linear"; }

}  // namespace

std::size_t LayerSpec::weight_count() const {
  switch (kind) {
    case LayerKind::kConv3d:
      return static_cast<std::size_t>(out) * in * kernel * kernel * kernel;
    case LayerKind::kDense:
      return static_cast<std::size_t>(out) * in;
    case LayerKind::kFlatten:
      return 0;
  }
  return 0;
}

std::size_t Architecture::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) {
    if (l.kind != LayerKind::kFlatten) total += l.parameter_count();
  }
  return total;
}

std::string Architecture::describe() const {
  std::ostringstream os;
  os << "obs " << obs_dims.x << ' ' << obs_dims.y << ' ' << obs_dims.z << '\n';
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::kConv3d:
        os << "conv3d " << l.in << ' ' << l.out << ' ' << l.kernel << ' ' << l.stride << ' '
           << relu_tag(l.relu) << '\n';
        break;
      case LayerKind::kFlatten:
        os << "flatten\n";
        break;
      case LayerKind::kDense:
        os << "dense " << l.in << ' ' << l.out << ' ' << relu_tag(l.relu) << '\n';
        break;
    }
  }
  return os.str();
}

Architecture Architecture::parse(const std::string& text) {
  auto fail = [](const std::string& why) {
    throw Error(ErrorCode::kCorruptCheckpoint, "bad architecture descriptor: " + why);
  };
  auto parse_act = [&](const std::string& tag) {
    if (tag == "relu") return true;
    if (tag == "linear") return false;
    fail("unknown activation '" + tag + "'");
    return false;
  };

  Architecture arch;
  bool have_obs = false;
  bool flattened = false;
  int channels = 1;
  Dims shape;
  int features = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word) || word == "meta") continue;
    if (word == "obs") {
      if (!(ls >> arch.obs_dims.x >> arch.obs_dims.y >> arch.obs_dims.z) || !arch.obs_dims.positive()) {
        fail("bad obs line");
      }
      have_obs = true;
      shape = arch.obs_dims;
      continue;
    }
    if (!have_obs) fail("layers before obs line");
    LayerSpec l;
    std::string act;
    if (word == "conv3d") {
      l.kind = LayerKind::kConv3d;
      if (!(ls >> l.in >> l.out >> l.kernel >> l.stride >> act)) fail("bad conv3d line");
      if (flattened || l.in != channels || l.out < 1 || l.kernel < 1 || l.stride < 1) {
        fail("inconsistent conv3d layer");
      }
      l.relu = parse_act(act);
      l.in_shape = shape;
      l.out_shape = {conv_out_extent(shape.x, l.kernel, l.stride), conv_out_extent(shape.y, l.kernel, l.stride),
                     conv_out_extent(shape.z, l.kernel, l.stride)};
      if (!l.out_shape.positive()) fail("conv3d output collapses to zero");
      shape = l.out_shape;
      channels = l.out;
    } else if (word == "flatten") {
      if (flattened) fail("duplicate flatten");
      l.kind = LayerKind::kFlatten;
      flattened = true;
      features = channels * static_cast<int>(shape.count());
    } else if (word == "dense") {
      l.kind = LayerKind::kDense;
      if (!(ls >> l.in >> l.out >> act)) fail("bad dense line");
      if (!flattened || l.in != features || l.out < 1) fail("inconsistent dense layer");
      l.relu = parse_act(act);
      features = l.out;
    } else {
      fail("unknown layer '" + word + "'");
    }
    arch.layers.push_back(l);
  }
  if (!have_obs || !flattened || features != kNumActions) fail("network must end in a 6-way dense layer");
  return arch;
}

Architecture default_architecture(const Dims& obs_dims) {
  if (obs_dims.x < kMinObsExtent || obs_dims.y < kMinObsExtent || obs_dims.z < kMinObsExtent) {
    throw Error(ErrorCode::kInvalidArgument,
                "obs_dims " + obs_dims.str() + " too small for two stride-2 3^3 convolutions; every axis needs >= " +
                    std::to_string(kMinObsExtent) + " voxels");
  }
  auto conv = [](const Dims& in) {
    return Dims{conv_out_extent(in.x, 3, 2), conv_out_extent(in.y, 3, 2), conv_out_extent(in.z, 3, 2)};
  };
  const Dims s1 = conv(obs_dims);
  const Dims s2 = conv(s1);
  const int flat = 16 * static_cast<int>(s2.count());
  std::ostringstream os;
  os << "obs " << obs_dims.x << ' ' << obs_dims.y << ' ' << obs_dims.z << '\n'
     << "conv3d 1 8 3 2 relu\n"
     << "conv3d 8 16 3 2 relu\n"
     << "flatten\n"
     << "dense " << flat << " 128 relu\n"
     << "dense 128 " << kNumActions << " linear\n";
  return Architecture::parse(os.str());
}

QNetwork::QNetwork(Architecture arch, std::vector<double> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  if (params_.size() != arch_.parameter_count()) {
    throw Error(ErrorCode::kShapeMismatch, "parameter vector has " + std::to_string(params_.size()) +
                                               " entries, architecture needs " +
                                               std::to_string(arch_.parameter_count()));
  }
  for (double p : params_) {
    if (!std::isfinite(p)) throw Error(ErrorCode::kNonFinite, "network parameter is not finite");
  }
  std::size_t off = 0;
  for (const auto& l : arch_.layers) {
    offsets_.push_back(off);
    if (l.kind != LayerKind::kFlatten) off += l.parameter_count();
  }
}

QNetwork init_network(const Dims& obs_dims, std::uint64_t seed) {
  Architecture arch = default_architecture(obs_dims);
  std::vector<double> params;
  params.reserve(arch.parameter_count());
  std::mt19937_64 rng(seed);
  for (const auto& l : arch.layers) {
    if (l.kind == LayerKind::kFlatten) continue;
    const double fan_in = static_cast<double>(l.weight_count()) / l.out;
    // He-uniform for rectified layers, LeCun-uniform for the linear head.
    const double bound = l.relu ? std::sqrt(6.0 / fan_in) : std::sqrt(3.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < l.weight_count(); ++i) params.push_back(u(rng));
    params.insert(params.end(), static_cast<std::size_t>(l.out), 0.0);
  }
  return QNetwork(std::move(arch), std::move(params));
}

namespace {

// Activations of one forward pass, kept for backprop. The conv stage keeps
// the whole batch in one matrix of (batch * voxels) x channels, sample-major
// within each channel column.
struct ForwardCache {
  std::vector<Mat> conv_cols;  // im2col per conv layer
  std::vector<Mat> conv_act;   // post-activation output per conv layer
  std::vector<Mat> dense_in;   // features x batch
  std::vector<Mat> dense_act;  // outputs x batch
};

Mat im2col(const Mat& in, const LayerSpec& l, Eigen::Index batch) {
  const Dims& is = l.in_shape;
  const Dims& os = l.out_shape;
  const int k = l.kernel;
  const int s = l.stride;
  const Eigen::Index in_vox = static_cast<Eigen::Index>(is.count());
  const Eigen::Index out_vox = static_cast<Eigen::Index>(os.count());
  Mat col(batch * out_vox, static_cast<Eigen::Index>(l.in) * k * k * k);
  double* dst = col.data();
  for (int c = 0; c < l.in; ++c) {
    const double* chan = in.data() + c * batch * in_vox;
    for (int kz = 0; kz < k; ++kz) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          for (Eigen::Index b = 0; b < batch; ++b) {
            const double* sample = chan + b * in_vox;
            for (int oz = 0; oz < os.z; ++oz) {
              for (int oy = 0; oy < os.y; ++oy) {
                const double* src =
                    sample + (static_cast<std::size_t>(oz * s + kz) * is.y + (oy * s + ky)) * is.x + kx;
                for (int ox = 0; ox < os.x; ++ox) *dst++ = src[ox * s];
              }
            }
          }
        }
      }
    }
  }
  return col;
}

Mat col2im(const Mat& dcol, const LayerSpec& l, Eigen::Index batch) {
  const Dims& is = l.in_shape;
  const Dims& os = l.out_shape;
  const int k = l.kernel;
  const int s = l.stride;
  const Eigen::Index in_vox = static_cast<Eigen::Index>(is.count());
  Mat din = Mat::Zero(batch * in_vox, l.in);
  const double* src = dcol.data();
  for (int c = 0; c < l.in; ++c) {
    double* chan = din.data() + c * batch * in_vox;
    for (int kz = 0; kz < k; ++kz) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          for (Eigen::Index b = 0; b < batch; ++b) {
            double* sample = chan + b * in_vox;
            for (int oz = 0; oz < os.z; ++oz) {
              for (int oy = 0; oy < os.y; ++oy) {
                double* dst = sample + (static_cast<std::size_t>(oz * s + kz) * is.y + (oy * s + ky)) * is.x + kx;
                for (int ox = 0; ox < os.x; ++ox) dst[ox * s] += *src++;
              }
            }
          }
        }
      }
    }
  }
  return din;
}

void relu_inplace(Mat& m) { m = m.cwiseMax(0.0); }

Mat relu_mask(const Mat& act) { return (act.array() > 0.0).cast<double>().matrix(); }

// Returns Q-values as a (6 x batch) matrix.
Mat forward(const QNetwork& net, std::span<const Volume3D* const> obs, ForwardCache* cache) {
  const Architecture& arch = net.architecture();
  const auto params = net.parameters();
  const Eigen::Index batch = static_cast<Eigen::Index>(obs.size());
  const Eigen::Index obs_vox = static_cast<Eigen::Index>(arch.obs_dims.count());
  Mat act(batch * obs_vox, 1);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Volume3D* o = obs[static_cast<std::size_t>(b)];
    if (o->dims() != arch.obs_dims) {
      throw Error(ErrorCode::kShapeMismatch, "observation " + o->dims().str() + " does not match network input " +
                                                 arch.obs_dims.str());
    }
    auto d = o->data();
    std::copy(d.begin(), d.end(), act.data() + b * obs_vox);
  }

  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerSpec& l = arch.layers[li];
    const double* w = params.data() + net.layer_offset(li);
    if (l.kind == LayerKind::kConv3d) {
      const Eigen::Index k3 = static_cast<Eigen::Index>(l.in) * l.kernel * l.kernel * l.kernel;
      Eigen::Map<const Mat> wt(w, k3, l.out);
      Eigen::Map<const Vec> bias(w + l.weight_count(), l.out);
      Mat col = im2col(act, l, batch);
      Mat z = col * wt;
      z.rowwise() += bias.transpose();
      if (l.relu) relu_inplace(z);
      if (cache) {
        cache->conv_cols.push_back(std::move(col));
        cache->conv_act.push_back(z);
      }
      act = std::move(z);
    } else if (l.kind == LayerKind::kFlatten) {
      // (batch * vox) x channels  ->  (channels * vox) x batch
      const Eigen::Index channels = act.cols();
      const Eigen::Index vox = act.rows() / std::max<Eigen::Index>(batch, 1);
      Mat flat(channels * vox, batch);
      for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index c = 0; c < channels; ++c) {
          flat.col(b).segment(c * vox, vox) = act.col(c).segment(b * vox, vox);
        }
      }
      act = std::move(flat);
    } else {
      Eigen::Map<const RowMat> wm(w, l.out, l.in);
      Eigen::Map<const Vec> bias(w + l.weight_count(), l.out);
      if (cache) cache->dense_in.push_back(act);
      Mat z = wm * act;
      z.colwise() += bias;
      if (l.relu) relu_inplace(z);
      if (cache) cache->dense_act.push_back(z);
      act = std::move(z);
    }
  }
  return act;
}

// Accumulates dLoss/dθ into grad given dLoss/dQ (6 x batch).
void backward(const QNetwork& net, const ForwardCache& cache, const Mat& dq, std::vector<double>& grad) {
  const Architecture& arch = net.architecture();
  const auto params = net.parameters();
  grad.assign(params.size(), 0.0);
  const Eigen::Index batch = dq.cols();

  std::size_t dense_idx = cache.dense_in.size();
  std::size_t conv_idx = cache.conv_cols.size();
  Mat upstream = dq;

  for (std::size_t li = arch.layers.size(); li-- > 0;) {
    const LayerSpec& l = arch.layers[li];
    const std::size_t off = net.layer_offset(li);
    const double* w = params.data() + off;
    double* gw = grad.data() + off;
    if (l.kind == LayerKind::kDense) {
      --dense_idx;
      Mat dz = upstream;
      if (l.relu) dz = dz.cwiseProduct(relu_mask(cache.dense_act[dense_idx]));
      Eigen::Map<RowMat> gwm(gw, l.out, l.in);
      Eigen::Map<Vec> gb(gw + l.weight_count(), l.out);
      gwm.noalias() += dz * cache.dense_in[dense_idx].transpose();
      gb += dz.rowwise().sum();
      Eigen::Map<const RowMat> wm(w, l.out, l.in);
      upstream = wm.transpose() * dz;
    } else if (l.kind == LayerKind::kFlatten) {
      const LayerSpec& prev = arch.layers[li - 1];
      const Eigen::Index vox = static_cast<Eigen::Index>(prev.out_shape.count());
      Mat unflat(batch * vox, prev.out);
      for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index c = 0; c < prev.out; ++c) {
          unflat.col(c).segment(b * vox, vox) = upstream.col(b).segment(c * vox, vox);
        }
      }
      upstream = std::move(unflat);
    } else {
      --conv_idx;
      const Eigen::Index k3 = static_cast<Eigen::Index>(l.in) * l.kernel * l.kernel * l.kernel;
      Eigen::Map<const Mat> wt(w, k3, l.out);
      Eigen::Map<Mat> gwt(gw, k3, l.out);
      Eigen::Map<Vec> gb(gw + l.weight_count(), l.out);
      Mat dz = upstream;
      if (l.relu) dz = dz.cwiseProduct(relu_mask(cache.conv_act[conv_idx]));
      gwt.noalias() += cache.conv_cols[conv_idx].transpose() * dz;
      gb += dz.colwise().sum().transpose();
      if (conv_idx > 0) {
        const Mat dcol = dz * wt.transpose();
        upstream = col2im(dcol, l, batch);
      }
    }
  }
}

std::vector<const Volume3D*> gather(std::span<const Transition> batch, bool next) {
  std::vector<const Volume3D*> out;
  out.reserve(batch.size());
  for (const auto& t : batch) out.push_back(next ? t.s_next.get() : t.s.get());
  return out;
}

QValues column(const Mat& q, Eigen::Index b) {
  QValues v{};
  for (int a = 0; a < kNumActions; ++a) v[static_cast<std::size_t>(a)] = q(a, b);
  return v;
}

}  // namespace

QValues q_forward(const QNetwork& net, const Volume3D& obs) {
  const Volume3D* p = &obs;
  const Mat q = forward(net, std::span<const Volume3D* const>(&p, 1), nullptr);
  return column(q, 0);
}

std::vector<QValues> q_forward_batch(const QNetwork& net, std::span<const Volume3D* const> obs) {
  const Mat q = forward(net, obs, nullptr);
  std::vector<QValues> out;
  out.reserve(obs.size());
  for (Eigen::Index b = 0; b < q.cols(); ++b) out.push_back(column(q, b));
  return out;
}

void TrainHyper::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "gamma must lie in (0, 1]");
  if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "lr must be positive");
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch_size must be >= 1");
  auto unit = [](double e) { return e >= 0.0 && e <= 1.0; };
  if (!unit(epsilon_start) || !unit(epsilon_end)) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon must lie in [0, 1]");
  }
  if (epsilon_decay_steps < 1 || target_sync_every < 1) {
    throw Error(ErrorCode::kInvalidArgument, "epsilon_decay_steps and target_sync_every must be >= 1");
  }
}

double epsilon_at(const TrainHyper& hyper, long env_step) {
  const double frac = std::min(1.0, static_cast<double>(env_step) / static_cast<double>(hyper.epsilon_decay_steps));
  return hyper.epsilon_start + frac * (hyper.epsilon_end - hyper.epsilon_start);
}

int argmax_action(const QValues& q) {
  int best = 0;
  for (int a = 1; a < kNumActions; ++a) {
    if (q[static_cast<std::size_t>(a)] > q[static_cast<std::size_t>(best)]) best = a;
  }
  return best;
}

Action select_action(const QValues& q, double epsilon, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (epsilon > 0.0 && coin(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, kNumActions - 1);
    return static_cast<Action>(pick(rng));
  }
  return static_cast<Action>(argmax_action(q));
}

void AdamState::apply(std::span<double> params, std::span<const double> grad, const TrainHyper& h) {
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(h.adam_beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(h.adam_beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = h.adam_beta1 * m_[i] + (1.0 - h.adam_beta1) * grad[i];
    v_[i] = h.adam_beta2 * v_[i] + (1.0 - h.adam_beta2) * grad[i] * grad[i];
    params[i] -= h.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + h.adam_eps);
  }
}

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorCode::kInvalidArgument, "replay capacity must be positive");
  items_.reserve(std::min<std::size_t>(capacity_, 1 << 16));
}

void ReplayMemory::push(Transition t) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(t));
    return;
  }
  items_[cursor_] = std::move(t);
  cursor_ = (cursor_ + 1) % capacity_;
}

const Transition& ReplayMemory::at(std::size_t i) const {
  if (i >= items_.size()) throw Error(ErrorCode::kOutOfBounds, "replay index out of range");
  return items_[(cursor_ + i) % items_.size()];
}

const Transition& ReplayMemory::sample(std::mt19937_64& rng) const {
  if (items_.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot sample an empty replay memory");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  return items_[pick(rng)];
}

double td_loss(const QNetwork& net, const QNetwork& target, std::span<const Transition> batch, double gamma,
               std::vector<double>* grad) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "td batch is empty");
  if (net.architecture().describe() != target.architecture().describe()) {
    throw Error(ErrorCode::kShapeMismatch, "online and target networks differ in architecture");
  }
  const auto next_obs = gather(batch, true);
  const Mat q_next = forward(target, next_obs, nullptr);
  const auto obs = gather(batch, false);
  ForwardCache cache;
  const Mat q = forward(net, obs, grad ? &cache : nullptr);

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  Mat dq = Mat::Zero(kNumActions, static_cast<Eigen::Index>(batch.size()));
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto col = static_cast<Eigen::Index>(b);
    const Transition& t = batch[b];
    const double bootstrap = t.done ? 0.0 : gamma * q_next.col(col).maxCoeff();
    const double residual = q(action_index(t.a), col) - (t.r + bootstrap);
    const double mag = std::abs(residual);
    loss += mag <= 1.0 ? 0.5 * residual * residual : mag - 0.5;
    dq(action_index(t.a), col) = std::clamp(residual, -1.0, 1.0) * inv_n;
  }
  loss *= inv_n;
  if (grad) backward(net, cache, dq, *grad);
  return loss;
}

double td_train_step(QNetwork& net, const QNetwork& target, std::span<const Transition> batch,
                     const TrainHyper& hyper, AdamState& adam) {
  std::vector<double> grad;
  const double loss = td_loss(net, target, batch, hyper.gamma, &grad);
  if (!std::isfinite(loss)) {
    std::ostringstream os;
    os << "non-finite TD loss (" << loss << ") on batch of " << batch.size() << " after " << adam.steps()
       << " optimizer steps";
    throw Error(ErrorCode::kNonFiniteLoss, os.str());
  }
  adam.apply(net.mutable_parameters(), grad, hyper);
  return loss;
}

GradientCheckResult gradient_check(const QNetwork& net, const QNetwork& target, std::span<const Transition> batch,
                                   double gamma, int n_params, std::uint64_t seed, double h) {
  std::vector<double> analytic;
  td_loss(net, target, batch, gamma, &analytic);

  std::vector<std::size_t> idx(net.parameter_count());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(std::max(n_params, 0))));

  QNetwork probe = net;
  GradientCheckResult result;
  for (std::size_t i : idx) {
    auto p = probe.mutable_parameters();
    const double orig = p[i];
    p[i] = orig + h;
    const double up = td_loss(probe, target, batch, gamma);
    p[i] = orig - h;
    const double down = td_loss(probe, target, batch, gamma);
    p[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    const double scale = std::max(std::abs(a), std::abs(numeric));
    double err = 0.0;
    if (scale < 1e-8) {
      err = std::abs(a - numeric) < 1e-8 ? 0.0 : 1.0;
    } else {
      err = std::abs(a - numeric) / scale;
    }
    if (std::abs(a) > 1e-6 && (a > 0) != (numeric > 0)) ++result.sign_mismatches;
    result.max_relative_error = std::max(result.max_relative_error, err);
    ++result.checked;
  }
  return result;
}

}  // namespace voxl
