#include "bnnrobust/net.hpp"
#include "bnnrobust/weights_io.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace bnnrobust;

namespace {

WeightVector random_weights(const NetworkArch& arch, std::mt19937_64& rng, double scale = 0.8) {
  std::normal_distribution<double> normal(0.0, scale);
  WeightVector w(static_cast<Eigen::Index>(arch.parameter_count()));
  for (auto& v : w) v = normal(rng);
  return w;
}

Eigen::VectorXd random_input(int d, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd x(d);
  for (auto& v : x) v = u(rng);
  return x;
}

std::vector<long double> widen(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("softmax sums to one and ignores shifts") {
  Eigen::Vector3d z(1, 2, 3);
  const Eigen::VectorXd p = softmax(z);
  CHECK(std::abs(p.sum() - 1.0) < 1e-12);
  const long double denom = std::exp(1.0L) + std::exp(2.0L) + std::exp(3.0L);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(p(i) - static_cast<double>(std::exp(i + 1.0L) / denom)) < 1e-15);
  const Eigen::VectorXd q = softmax((z.array() + 123.0).matrix());
  CHECK((p - q).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::VectorXd half = softmax(Eigen::Vector2d(0, 0));
  CHECK(half(0) == 0.5);
  const Eigen::VectorXd big = softmax(Eigen::Vector2d(1000, 0));
  CHECK(std::isfinite(big(0)));
  CHECK(big(0) == doctest::Approx(1.0));
  CHECK(big(1) >= 0.0);
}

TEST_CASE("cross entropy values") {
  CHECK(cross_entropy(Eigen::Vector4d::Zero(), 2) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  const double expected = static_cast<double>(std::log1p(std::exp(-20.0L)));
  CHECK(std::abs(cross_entropy(Eigen::Vector2d(10, -10), 0) - expected) < 1e-12 * expected);
  CHECK(expected == doctest::Approx(2.06e-9).epsilon(1e-3));
  const Eigen::Vector3d z(0.3, -1.2, 2.0);
  CHECK(std::abs(cross_entropy(z, 1) - cross_entropy((z.array() + 50.0).matrix(), 1)) < 1e-10);
  CHECK_THROWS_AS(cross_entropy(Eigen::VectorXd(z), 3), std::out_of_range);
}

TEST_CASE("forward on hand-set weights") {
  SUBCASE("zero weights give zero logits") {
    NetworkArch arch{3, {4}, 2};
    const WeightVector w = WeightVector::Zero(static_cast<Eigen::Index>(arch.parameter_count()));
    CHECK(forward(arch, w, Eigen::Vector3d(1, -2, 3)).isZero(0.0));
  }
  SUBCASE("identity linear layer") {
    NetworkArch arch{2, {}, 2};
    WeightVector w(6);
    w << 1, 0, 0, 1, 0, 0;
    const Eigen::MatrixXd z = forward(arch, w, Eigen::Vector2d(0.3, 0.7));
    CHECK(z(0, 0) == 0.3);
    CHECK(z(1, 0) == 0.7);
  }
  SUBCASE("1-[1]-2 relu composition") {
    NetworkArch arch{1, {1}, 2};
    WeightVector w(6);
    // hidden: h = relu(2x - 0.5); output: [3h + 0.1, -h + 0.2]
    w << 2, -0.5, 3, -1, 0.1, 0.2;
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.75);
    const double h = std::max(0.0, 2 * 0.75 - 0.5);
    const Eigen::MatrixXd z = forward(arch, w, x);
    CHECK(z(0, 0) == doctest::Approx(3 * h + 0.1).epsilon(1e-15));
    CHECK(z(1, 0) == doctest::Approx(-h + 0.2).epsilon(1e-15));
    const Eigen::MatrixXd off = forward(arch, w, Eigen::VectorXd::Constant(1, 0.1));
    CHECK(off(0, 0) == doctest::Approx(0.1));
    CHECK(off(1, 0) == doctest::Approx(0.2));
  }
}

TEST_CASE("shape errors name the dimensions") {
  NetworkArch arch{3, {4}, 2};
  const WeightVector w = WeightVector::Zero(5);
  CHECK_THROWS_AS(forward(arch, w, Eigen::Vector3d::Zero()), ShapeError);
  const WeightVector ok = WeightVector::Zero(static_cast<Eigen::Index>(arch.parameter_count()));
  try {
    forward(arch, ok, Eigen::Vector2d::Zero());
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("dimension 2") != std::string::npos);
  }
  CHECK_THROWS_AS(grad_input(arch, ok, Eigen::Vector3d::Zero(), 2), std::out_of_range);
}

TEST_CASE("logistic input gradient") {
  // Two-class softmax with logits [0, x] is the logistic model sigma(x).
  NetworkArch arch{1, {}, 2};
  WeightVector w(4);
  w << 0, 1, 0, 0;
  const Eigen::VectorXd g = grad_input(arch, w, Eigen::VectorXd::Constant(1, 0.5), 1);
  const double sigma = 1.0 / (1.0 + std::exp(-0.5));
  CHECK(g(0) == doctest::Approx(sigma - 1.0).epsilon(1e-14));
  CHECK(g(0) == doctest::Approx(-0.3775).epsilon(1e-3));
  const WeightVector zero = WeightVector::Zero(4);
  CHECK(grad_input(arch, zero, Eigen::VectorXd::Constant(1, 0.5), 1).isZero(0.0));
}

TEST_CASE("gradients match the scalar oracle on random nets") {
  std::mt19937_64 rng(11);
  int cases = 0;
  for (auto act : {Activation::relu, Activation::leaky_relu, Activation::tanh, Activation::sigmoid}) {
    for (int rep = 0; rep < 30; ++rep, ++cases) {
      const NetworkArch arch = oracle::random_arch(rng, act);
      const WeightVector w = random_weights(arch, rng);
      const Eigen::VectorXd x = random_input(arch.input_dim, rng);
      const int label = std::uniform_int_distribution<int>(0, arch.num_classes - 1)(rng);
      const int labels[1] = {label};

      const auto lx = widen(x);
      const auto lw = widen(w);
      const Eigen::VectorXd gw = grad_weights(arch, w, x, std::span<const int>(labels, 1));
      const auto fw = oracle::central_diff([&](const auto& v) { return oracle::loss(arch, v, lx, label); }, lw, 1e-5L);
      CHECK(oracle::relative_error({gw.data(), static_cast<std::size_t>(gw.size())}, fw) < 1e-4);

      const Eigen::VectorXd gx = grad_input(arch, w, x, label);
      const auto fx = oracle::central_diff([&](const auto& v) { return oracle::loss(arch, lw, v, label); }, lx, 1e-5L);
      CHECK(oracle::relative_error({gx.data(), static_cast<std::size_t>(gx.size())}, fx) < 1e-4);

      // Forward pass agrees with the scalar loop.
      const Eigen::MatrixXd z = forward(arch, w, x);
      const auto zo = oracle::logits(arch, lw, lx);
      for (int k = 0; k < arch.num_classes; ++k) CHECK(std::abs(z(k, 0) - static_cast<double>(zo[k])) < 1e-12);
    }
  }
  CHECK(cases >= 100);
}

TEST_CASE("kink derivatives") {
  // Pre-activation exactly zero at the hidden unit.
  for (auto [act, slope] : {std::pair{Activation::relu, 0.0}, std::pair{Activation::leaky_relu, 0.01}}) {
    NetworkArch arch{1, {1}, 2, act};
    WeightVector w(6);
    w << 1, -0.5, 2, 0, 0, 0;
    const Eigen::VectorXd g = grad_input(arch, w, Eigen::VectorXd::Constant(1, 0.5), 1);
    // dL/dz = p - e_1 at logits [0, 0] = [0.5, -0.5]; dz/dh = [2, 0]; dh/dpre = slope
    CHECK(g(0) == doctest::Approx(0.5 * 2 * slope).epsilon(1e-15));
  }
}

TEST_CASE("batch gradient is the mean of single-example gradients") {
  std::mt19937_64 rng(5);
  NetworkArch arch{4, {6, 5}, 3, Activation::tanh};
  const WeightVector w = random_weights(arch, rng);
  Eigen::MatrixXd x(4, 7);
  std::vector<int> labels(7);
  for (int j = 0; j < 7; ++j) {
    x.col(j) = random_input(4, rng);
    labels[j] = j % 3;
  }
  const Eigen::VectorXd batch = grad_weights(arch, w, x, labels);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(batch.size());
  for (int j = 0; j < 7; ++j) mean += grad_weights(arch, w, x.col(j), std::span<const int>(&labels[j], 1));
  mean /= 7.0;
  CHECK((batch - mean).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXd gx = input_gradients(arch, w, x, labels);
  for (int j = 0; j < 7; ++j) CHECK((gx.col(j) - grad_input(arch, w, x.col(j), labels[j])).cwiseAbs().maxCoeff() < 1e-15);

  CHECK_THROWS_AS(grad_weights(arch, w, Eigen::MatrixXd(4, 0), std::span<const int>()), ShapeError);
}

TEST_CASE("repeated calls are bit-identical") {
  std::mt19937_64 rng(9);
  NetworkArch arch{5, {7}, 4, Activation::sigmoid};
  const WeightVector w = random_weights(arch, rng);
  const Eigen::VectorXd x = random_input(5, rng);
  const int labels[1] = {2};
  CHECK(forward(arch, w, x) == forward(arch, w, x));
  CHECK(grad_weights(arch, w, x, std::span<const int>(labels, 1)) ==
        grad_weights(arch, w, x, std::span<const int>(labels, 1)));
  CHECK(grad_input(arch, w, x, 2) == grad_input(arch, w, x, 2));
}

TEST_CASE("stationary point of a toy set") {
  // Every input carries both labels once, so w = 0 is the strict minimiser.
  NetworkArch arch{1, {}, 2};
  Eigen::MatrixXd x(1, 4);
  x << -1, -1, 1, 1;
  const std::vector<int> labels = {0, 1, 0, 1};
  const WeightVector w = WeightVector::Zero(4);
  CHECK(grad_weights(arch, w, x, labels).norm() < 1e-6);
}

TEST_CASE("init schemes") {
  NetworkArch arch{200, {100}, 10};
  Rng rng(3);
  const WeightVector he = init_weights(arch, InitScheme::he, rng);
  const auto slices = layer_slices(arch);
  const Eigen::Map<const Eigen::VectorXd> first(he.data(), 200 * 100);
  const double var = first.squaredNorm() / first.size();
  CHECK(var == doctest::Approx(2.0 / 200).epsilon(0.05));
  CHECK(he.segment(static_cast<Eigen::Index>(slices[0].bias_offset), 100).isZero(0.0));
  CHECK(init_weights(arch, InitScheme::zeros, rng).isZero(0.0));
}

TEST_CASE("weight layout and serialization") {
  NetworkArch arch{3, {4, 2}, 5, Activation::leaky_relu, 0.05};
  CHECK(arch.parameter_count() == 3 * 4 + 4 + 4 * 2 + 2 + 2 * 5 + 5);
  const auto s = layer_slices(arch);
  CHECK(s[1].weight_offset == 16);
  CHECK(s[1].bias_offset == 24);
  std::mt19937_64 rng(1);
  const WeightVector w = random_weights(arch, rng);

  const auto bytes = encode_brwv(arch, w);
  CHECK(bytes[0] == 'B');
  CHECK(bytes[3] == 'V');
  const auto back = decode_brwv(bytes);
  CHECK(back.arch == arch);
  CHECK(back.weights == w);

  const auto json_back = weights_from_json(weights_to_json(arch, w));
  CHECK(json_back.arch == arch);
  CHECK(json_back.weights == w);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(decode_brwv(bad));
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS(decode_brwv(truncated));
}
