#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>

#include "test_helpers.hpp"
#include "voxl/dqn.hpp"
#include "voxl/error.hpp"

using namespace voxl;
using voxl::test::random_volume;
using voxl::test::temp_dir;

namespace {

// Direct-loop forward pass. Weight layout: conv [out][in][kz][ky][kx] then
// bias; dense [out][in] row-major then bias; flatten is channel-major with
// x fastest inside each channel.
QValues naive_forward(const QNetwork& net, const Volume3D& obs) {
  const auto p = net.parameters();
  std::vector<double> act(obs.data().begin(), obs.data().end());
  Dims shape = obs.dims();
  for (std::size_t li = 0; li < net.architecture().layers.size(); ++li) {
    const LayerSpec& l = net.architecture().layers[li];
    const std::size_t off = net.layer_offset(li);
    if (l.kind == LayerKind::kConv3d) {
      const Dims o{conv_out_extent(shape.x, l.kernel, l.stride), conv_out_extent(shape.y, l.kernel, l.stride),
                   conv_out_extent(shape.z, l.kernel, l.stride)};
      std::vector<double> out(static_cast<std::size_t>(l.out) * o.count());
      const int k = l.kernel;
      for (int co = 0; co < l.out; ++co)
        for (int z = 0; z < o.z; ++z)
          for (int y = 0; y < o.y; ++y)
            for (int x = 0; x < o.x; ++x) {
              double s = p[off + l.weight_count() + static_cast<std::size_t>(co)];
              for (int ci = 0; ci < l.in; ++ci)
                for (int kz = 0; kz < k; ++kz)
                  for (int ky = 0; ky < k; ++ky)
                    for (int kx = 0; kx < k; ++kx) {
                      const std::size_t wi = (((static_cast<std::size_t>(co) * l.in + ci) * k + kz) * k + ky) * k + kx;
                      const std::size_t ai =
                          static_cast<std::size_t>(ci) * shape.count() +
                          ((static_cast<std::size_t>(z * l.stride + kz) * shape.y + (y * l.stride + ky)) * shape.x +
                           (x * l.stride + kx));
                      s += p[off + wi] * act[ai];
                    }
              if (l.relu) s = std::max(s, 0.0);
              out[static_cast<std::size_t>(co) * o.count() + (static_cast<std::size_t>(z) * o.y + y) * o.x + x] = s;
            }
      act = std::move(out);
      shape = o;
    } else if (l.kind == LayerKind::kDense) {
      std::vector<double> out(static_cast<std::size_t>(l.out));
      for (int r = 0; r < l.out; ++r) {
        double s = p[off + l.weight_count() + static_cast<std::size_t>(r)];
        for (int c = 0; c < l.in; ++c) s += p[off + static_cast<std::size_t>(r) * l.in + c] * act[static_cast<std::size_t>(c)];
        out[static_cast<std::size_t>(r)] = l.relu ? std::max(s, 0.0) : s;
      }
      act = std::move(out);
    }
  }
  QValues q{};
  for (int a = 0; a < 6; ++a) q[static_cast<std::size_t>(a)] = act[static_cast<std::size_t>(a)];
  return q;
}

std::vector<Transition> random_batch(const Dims& obs, int n, std::uint64_t seed, bool all_terminal = false) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> r(-1.0, 1.0);
  std::vector<Transition> out;
  for (int i = 0; i < n; ++i) {
    Transition t;
    t.s = std::make_shared<const Volume3D>(random_volume(obs, rng()));
    t.s_next = std::make_shared<const Volume3D>(random_volume(obs, rng()));
    t.a = kAllActions[static_cast<std::size_t>(rng() % 6)];
    t.r = r(rng);
    t.done = all_terminal || (rng() % 4 == 0);
    out.push_back(std::move(t));
  }
  return out;
}

QNetwork zeroed_head(QNetwork net) {
  const std::size_t head = net.architecture().layers.size() - 1;
  auto p = net.mutable_parameters();
  for (std::size_t i = net.layer_offset(head); i < p.size(); ++i) p[i] = 0.0;
  return net;
}

}  // namespace

TEST_CASE("architecture shapes and parameter counts") {
  const Architecture a = default_architecture({15, 15, 9});
  REQUIRE(a.layers.size() == 5);
  CHECK(a.layers[0].out_shape == Dims{7, 7, 4});
  CHECK(a.layers[1].out_shape == Dims{3, 3, 1});
  CHECK(a.layers[0].parameter_count() == 8 * 27 + 8);
  CHECK(a.layers[1].parameter_count() == 16 * 8 * 27 + 16);
  CHECK(a.layers[3].parameter_count() == 144 * 128 + 128);
  CHECK(a.layers[4].parameter_count() == 128 * 6 + 6);
  CHECK(a.parameter_count() == 23030);
  CHECK(default_architecture({45, 45, 15}).parameter_count() == 618998);
  CHECK(default_architecture({7, 7, 7}).layers[1].out_shape == Dims{1, 1, 1});
}

TEST_CASE("too-small observations name the minimum") {
  for (Dims d : {Dims{3, 3, 3}, Dims{15, 15, 6}}) {
    try {
      init_network(d, 0);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kInvalidArgument);
      CHECK(std::string(e.what()).find('7') != std::string::npos);
    }
  }
}

TEST_CASE("descriptor round trip") {
  const Architecture a = default_architecture({15, 15, 9});
  CHECK(Architecture::parse(a.describe()) == a);
  CHECK_THROWS_AS(Architecture::parse("obs 15 15 9\nconv3d 1 8 3 2 relu\n"), Error);
  CHECK_THROWS_AS(Architecture::parse("garbage"), Error);
}

TEST_CASE("init_network") {
  const QNetwork a = init_network({15, 15, 9}, 0);
  const QNetwork b = init_network({15, 15, 9}, 0);
  const QNetwork c = init_network({15, 15, 9}, 1);
  CHECK(std::equal(a.parameters().begin(), a.parameters().end(), b.parameters().begin()));
  CHECK_FALSE(std::equal(a.parameters().begin(), a.parameters().end(), c.parameters().begin()));
  // Zero biases, bounded weights.
  const LayerSpec& l0 = a.architecture().layers[0];
  for (int i = 0; i < l0.out; ++i) CHECK(a.parameters()[l0.weight_count() + static_cast<std::size_t>(i)] == 0.0);
  const double bound = std::sqrt(6.0 / 27.0);
  for (std::size_t i = 0; i < l0.weight_count(); ++i) CHECK(std::abs(a.parameters()[i]) <= bound);
}

TEST_CASE("QNetwork rejects bad parameter vectors") {
  Architecture a = default_architecture({7, 7, 7});
  CHECK_THROWS_AS(QNetwork(a, std::vector<double>(a.parameter_count() - 1)), Error);
  std::vector<double> p(a.parameter_count(), 0.0);
  p[5] = std::nan("");
  CHECK_THROWS_AS(QNetwork(a, p), Error);
}

TEST_CASE("q_forward") {
  const QNetwork net = init_network({9, 9, 7}, 3);
  const Volume3D obs = random_volume({9, 9, 7}, 4);
  SUBCASE("matches the direct-loop reference") {
    // A nonzero bias everywhere exercises the bias layout too.
    QNetwork biased = net;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-0.3, 0.3);
    for (auto& x : biased.mutable_parameters()) x += u(rng);
    const QValues got = q_forward(biased, obs);
    const QValues want = naive_forward(biased, obs);
    for (int a = 0; a < 6; ++a) CHECK(got[static_cast<std::size_t>(a)] == doctest::Approx(want[static_cast<std::size_t>(a)]).epsilon(1e-12));
  }
  SUBCASE("shape contract and purity") {
    const QValues q = q_forward(net, obs);
    for (double v : q) CHECK(std::isfinite(v));
    CHECK(q == q_forward(net, obs));
    CHECK_THROWS_AS(q_forward(net, random_volume({9, 9, 8}, 1)), Error);
  }
  SUBCASE("zero parameters give zero output") {
    QNetwork z = net;
    for (auto& x : z.mutable_parameters()) x = 0.0;
    for (double v : q_forward(z, obs)) CHECK(v == 0.0);
  }
  SUBCASE("doubling the head doubles the output") {
    QNetwork d = net;
    const std::size_t head = d.architecture().layers.size() - 1;
    auto p = d.mutable_parameters();
    for (std::size_t i = d.layer_offset(head); i < p.size(); ++i) p[i] *= 2.0;
    const QValues a = q_forward(net, obs), b = q_forward(d, obs);
    for (int i = 0; i < 6; ++i) CHECK(b[static_cast<std::size_t>(i)] == 2.0 * a[static_cast<std::size_t>(i)]);
  }
  SUBCASE("batched equals single") {
    std::vector<Volume3D> vols;
    for (int i = 0; i < 5; ++i) vols.push_back(random_volume({9, 9, 7}, 10 + static_cast<std::uint64_t>(i)));
    std::vector<const Volume3D*> ptrs;
    for (const auto& v : vols) ptrs.push_back(&v);
    const auto batch = q_forward_batch(net, ptrs);
    for (int i = 0; i < 5; ++i) {
      const QValues s = q_forward(net, vols[static_cast<std::size_t>(i)]);
      for (int a = 0; a < 6; ++a) CHECK(batch[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)] == doctest::Approx(s[static_cast<std::size_t>(a)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("select_action") {
  std::mt19937_64 rng(0);
  CHECK(select_action({0, 3, 1, 1, 1, 1}, 0.0, rng) == Action::kNegX);
  CHECK(select_action({2, 2, 2, 2, 2, 2}, 0.0, rng) == Action::kPosX);
  CHECK(argmax_action({0, 0, 0, 0, 0, 5}) == 5);
  std::array<int, 6> counts{};
  for (int i = 0; i < 60000; ++i) ++counts[static_cast<std::size_t>(action_index(select_action({9, 0, 0, 0, 0, 0}, 1.0, rng)))];
  for (int c : counts) {
    CHECK(c / 60000.0 >= 0.16);
    CHECK(c / 60000.0 <= 0.175);
  }
}

TEST_CASE("epsilon schedule") {
  TrainHyper h;
  CHECK(epsilon_at(h, 0) == 1.0);
  CHECK(epsilon_at(h, 2500) == doctest::Approx(0.525));
  CHECK(epsilon_at(h, 5000) == doctest::Approx(0.05));
  CHECK(epsilon_at(h, 100000) == doctest::Approx(0.05));
  TrainHyper bad;
  bad.gamma = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = TrainHyper{};
  bad.epsilon_end = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("ReplayMemory is a FIFO ring") {
  ReplayMemory m(5);
  auto tr = [](double r) {
    Transition t;
    t.r = r;
    return t;
  };
  for (int i = 0; i < 5 + 3; ++i) m.push(tr(i));
  CHECK(m.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(m.at(i).r == static_cast<double>(i + 3));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const double r = m.sample(rng).r;
    CHECK(r >= 3.0);
    CHECK(r <= 7.0);
  }
  CHECK_THROWS_AS(ReplayMemory(0), Error);
  CHECK_THROWS_AS(m.at(5), Error);
  ReplayMemory empty(3);
  CHECK_THROWS_AS(empty.sample(rng), Error);
}

TEST_CASE("property: FIFO holds for any capacity and overflow") {
  for (std::size_t cap = 1; cap < 12; ++cap) {
    for (std::size_t extra = 0; extra < 15; ++extra) {
      ReplayMemory m(cap);
      for (std::size_t i = 0; i < cap + extra; ++i) {
        Transition t;
        t.r = static_cast<double>(i);
        m.push(t);
      }
      for (std::size_t i = 0; i < cap; ++i) CHECK(m.at(i).r == static_cast<double>(i + extra));
    }
  }
}

TEST_CASE("td loss examples") {
  const Dims obs{7, 7, 7};
  const QNetwork base = init_network(obs, 2);
  SUBCASE("terminal r=1 with Q(s,a)=0 gives Huber 0.5") {
    const QNetwork net = zeroed_head(base);
    auto batch = random_batch(obs, 1, 3, true);
    batch[0].r = 1.0;
    CHECK(td_loss(net, net, batch, 0.9) == doctest::Approx(0.5));
  }
  SUBCASE("linear branch beyond delta") {
    const QNetwork net = zeroed_head(base);
    auto batch = random_batch(obs, 1, 3, true);
    batch[0].r = -3.0;
    CHECK(td_loss(net, net, batch, 0.9) == doctest::Approx(2.5));
  }
  SUBCASE("zero residual leaves parameters unchanged") {
    const QNetwork net = zeroed_head(base);
    auto batch = random_batch(obs, 4, 5);
    for (auto& t : batch) t.r = 0.0;
    QNetwork trained = net;
    AdamState adam(trained.parameter_count());
    CHECK(td_train_step(trained, net, batch, TrainHyper{}, adam) == 0.0);
    for (std::size_t i = 0; i < net.parameter_count(); ++i) CHECK(trained.parameters()[i] == net.parameters()[i]);
  }
  SUBCASE("bootstraps from the target network unless done") {
    auto batch = random_batch(obs, 1, 9);
    batch[0].done = false;
    const QValues q = q_forward(base, *batch[0].s);
    const QValues qn = q_forward(base, *batch[0].s_next);
    const double target = batch[0].r + 0.9 * *std::max_element(qn.begin(), qn.end());
    const double resid = q[static_cast<std::size_t>(action_index(batch[0].a))] - target;
    const double huber = std::abs(resid) <= 1.0 ? 0.5 * resid * resid : std::abs(resid) - 0.5;
    CHECK(td_loss(base, base, batch, 0.9) == doctest::Approx(huber).epsilon(1e-12));
  }
  SUBCASE("empty batch and mismatched nets are rejected") {
    CHECK_THROWS_AS(td_loss(base, base, {}, 0.9), Error);
    const QNetwork other = init_network({9, 9, 9}, 0);
    CHECK_THROWS_AS(td_loss(base, other, random_batch(obs, 2, 1), 0.9), Error);
  }
}

TEST_CASE("repeated steps on one transition shrink the residual") {
  const Dims obs{7, 7, 7};
  const QNetwork target = init_network(obs, 4);
  QNetwork net = target;
  AdamState adam(net.parameter_count());
  auto batch = random_batch(obs, 1, 6, true);
  batch[0].r = 0.8;
  TrainHyper h;
  h.lr = 1e-4;
  double prev = 1e300;
  for (int i = 0; i < 50; ++i) {
    const double q = q_forward(net, *batch[0].s)[static_cast<std::size_t>(action_index(batch[0].a))];
    const double resid = std::abs(q - 0.8);
    CHECK(resid < prev);
    prev = resid;
    td_train_step(net, target, batch, h, adam);
  }
}

TEST_CASE("td_train_step determinism") {
  const Dims obs{9, 9, 7};
  const QNetwork start = init_network(obs, 8);
  const auto batch = random_batch(obs, 12, 2);
  auto run = [&] {
    QNetwork n = start;
    AdamState adam(n.parameter_count());
    std::vector<double> losses;
    for (int i = 0; i < 5; ++i) losses.push_back(td_train_step(n, start, batch, TrainHyper{}, adam));
    return std::make_pair(losses, std::vector<double>(n.parameters().begin(), n.parameters().end()));
  };
  CHECK(run() == run());
}

TEST_CASE("non-finite loss aborts") {
  const Dims obs{7, 7, 7};
  const QNetwork net = init_network(obs, 1);
  auto batch = random_batch(obs, 2, 1, true);
  batch[1].r = std::numeric_limits<double>::infinity();
  QNetwork n = net;
  AdamState adam(n.parameter_count());
  try {
    td_train_step(n, net, batch, TrainHyper{}, adam);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonFiniteLoss);
  }
}

TEST_CASE("Adam update") {
  // First step from zero moments moves each parameter by lr * sign(grad).
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{0.3, -0.01, 0.0};
  AdamState a(3);
  TrainHyper h;
  h.lr = 0.1;
  a.apply(p, g, h);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(-1.9).epsilon(1e-5));
  CHECK(p[2] == 0.5);
  CHECK(a.steps() == 1);
}

TEST_CASE("gradient check") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Dims obs{9, 9, 7};
    const QNetwork net = init_network(obs, seed);
    const QNetwork target = init_network(obs, seed + 100);
    const auto batch = random_batch(obs, 4, seed);
    const GradientCheckResult r = gradient_check(net, target, batch, 0.9, 200, seed);
    CHECK(r.checked >= 200);
    CHECK(r.max_relative_error < 1e-4);
    CHECK(r.sign_mismatches == 0);
  }
  SUBCASE("dead units compare absolutely") {
    // A large negative bias kills every conv1 unit, so all conv gradients are 0.
    const Dims obs{7, 7, 7};
    QNetwork net = init_network(obs, 1);
    const LayerSpec& l0 = net.architecture().layers[0];
    auto p = net.mutable_parameters();
    for (int i = 0; i < l0.out; ++i) p[l0.weight_count() + static_cast<std::size_t>(i)] = -100.0;
    // Later biases start at zero, which would park every unit on the ReLU kink.
    for (std::size_t li = 1; li < net.architecture().layers.size(); ++li) {
      const LayerSpec& l = net.architecture().layers[li];
      for (int i = 0; i < l.out; ++i) p[net.layer_offset(li) + l.weight_count() + static_cast<std::size_t>(i)] = 0.05;
    }
    const auto batch = random_batch(obs, 2, 3);
    std::vector<double> grad;
    td_loss(net, net, batch, 0.9, &grad);
    for (std::size_t i = 0; i < l0.parameter_count(); ++i) CHECK(grad[i] == 0.0);
    CHECK(gradient_check(net, net, batch, 0.9, 200, 4).max_relative_error < 1e-4);
  }
}

TEST_CASE("checkpoint round trip and errors") {
  const auto dir = temp_dir("ckpt");
  const QNetwork net = init_network({15, 15, 9}, 5);
  const CheckpointMeta meta{{"method", "max_entropy"}, {"task", "t0"}};
  save_checkpoint(net, dir / "a.voxlnet", meta);
  const Checkpoint back = load_checkpoint(dir / "a.voxlnet");
  CHECK(back.meta == meta);
  CHECK(back.network.architecture() == net.architecture());
  CHECK(std::equal(net.parameters().begin(), net.parameters().end(), back.network.parameters().begin()));

  const auto bytes = encode_checkpoint(net, meta);
  CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "VOXLNET1");
  const std::size_t text_len = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (static_cast<std::size_t>(bytes[11]) << 24);
  CHECK(bytes.size() == 12 + text_len + 8 * net.parameter_count());

  auto code = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kConfig;
  };
  CHECK(code([&] { load_checkpoint(dir / "missing.voxlnet"); }) == ErrorCode::kMissingFile);
  auto bad = bytes;
  bad[0] = 'Z';
  CHECK(code([&] { decode_checkpoint(bad); }) == ErrorCode::kCorruptCheckpoint);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK(code([&] { decode_checkpoint(truncated); }) == ErrorCode::kCorruptCheckpoint);
  CHECK(code([&] { encode_checkpoint(net, {{"bad key", "x"}}); }) == ErrorCode::kInvalidArgument);
}
