#include "bnnrobust/predictive.hpp"

#include "bnnrobust/net.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <numeric>

namespace bnnrobust {
namespace {

std::size_t resolve_n_use(const PosteriorEnsemble& ensemble, std::size_t n_use) {
  if (n_use == 0) return ensemble.size();
  if (n_use > ensemble.size()) {
    throw std::out_of_range(fmt::format("n_use = {} exceeds ensemble size {}", n_use, ensemble.size()));
  }
  return n_use;
}

double abs_median(const Eigen::VectorXd& v) {
  std::vector<double> a(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(v(i));
  if (a.empty()) return 0.0;
  const auto mid = a.size() / 2;
  std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid), a.end());
  if (a.size() % 2 == 1) return a[mid];
  const double upper = a[mid];
  return 0.5 * (upper + *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid)));
}

}  // namespace

PredictiveResult predict_ensemble(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, bool keep_per_sample) {
  const int k = ensemble.arch().num_classes;
  PredictiveResult out;
  out.probs = Eigen::VectorXd::Zero(k);
  if (keep_per_sample) out.per_sample_probs = Eigen::MatrixXd(static_cast<Eigen::Index>(ensemble.size()), k);
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const Eigen::VectorXd logits = forward(ensemble.arch(), ensemble.sample(i), x);
    const Eigen::VectorXd p = softmax(logits);
    out.probs += p;
    if (keep_per_sample) out.per_sample_probs->row(static_cast<Eigen::Index>(i)) = p.transpose();
  }
  out.probs /= static_cast<double>(ensemble.size());
  return out;
}

Eigen::MatrixXd predictive_probs(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs, std::size_t n_use) {
  n_use = resolve_n_use(ensemble, n_use);
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(ensemble.arch().num_classes, inputs.cols());
  for (std::size_t i = 0; i < n_use; ++i) {
    probs += softmax_columns(forward(ensemble.arch(), ensemble.sample(i), inputs));
  }
  probs /= static_cast<double>(n_use);
  return probs;
}

int argmax_lowest(const Eigen::Ref<const Eigen::VectorXd>& probs) {
  int best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i) {
    if (probs(i) > probs(best)) best = static_cast<int>(i);
  }
  return best;
}

int predict_label(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x) {
  return argmax_lowest(predict_ensemble(ensemble, x).probs);
}

std::vector<int> predict_labels(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd probs = predictive_probs(ensemble, inputs);
  std::vector<int> labels(static_cast<std::size_t>(inputs.cols()));
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) labels[static_cast<std::size_t>(j)] = argmax_lowest(probs.col(j));
  return labels;
}

double accuracy(const PosteriorEnsemble& ensemble, const Dataset& data) {
  const auto predicted = predict_labels(ensemble, data.inputs);
  std::size_t correct = 0;
  for (std::size_t j = 0; j < predicted.size(); ++j) correct += predicted[j] == data.labels[j];
  return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

Eigen::MatrixXd expected_loss_gradients(const PosteriorEnsemble& ensemble, std::span<const std::size_t> sample_ids,
                                        const Eigen::MatrixXd& inputs, std::span<const int> labels) {
  if (sample_ids.empty()) throw std::out_of_range("expected gradient over zero samples");
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(inputs.rows(), inputs.cols());
  for (std::size_t id : sample_ids) sum += input_gradients(ensemble.arch(), ensemble.sample(id), inputs, labels);
  sum /= static_cast<double>(sample_ids.size());
  return sum;
}

Eigen::MatrixXd expected_loss_gradients(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs,
                                        std::span<const int> labels, std::size_t n_use) {
  if (n_use < 1 || n_use > ensemble.size()) {
    throw std::out_of_range(fmt::format("n_use = {} outside [1, {}]", n_use, ensemble.size()));
  }
  std::vector<std::size_t> ids(n_use);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  return expected_loss_gradients(ensemble, ids, inputs, labels);
}

ExpectedGradient expected_loss_gradient(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, int label,
                                        std::size_t n_use) {
  const int labels[1] = {label};
  ExpectedGradient out;
  out.grad = expected_loss_gradients(ensemble, Eigen::MatrixXd(x), std::span<const int>(labels, 1), n_use).col(0);
  out.n_samples = n_use;
  out.per_component_abs_median = abs_median(out.grad);
  return out;
}

Eigen::VectorXd expected_losses(const PosteriorEnsemble& ensemble, const Eigen::MatrixXd& inputs,
                                std::span<const int> labels, std::size_t n_use) {
  n_use = resolve_n_use(ensemble, n_use);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(inputs.cols());
  for (std::size_t i = 0; i < n_use; ++i) sum += example_losses(ensemble.arch(), ensemble.sample(i), inputs, labels);
  return sum / static_cast<double>(n_use);
}

Eigen::VectorXd expected_prediction_gradient(const PosteriorEnsemble& ensemble, const Eigen::VectorXd& x, int label,
                                             std::size_t n_use) {
  n_use = resolve_n_use(ensemble, n_use);
  check_label(label, ensemble.arch().num_classes);
  // grad_x p_i(y) = -p_i(y) grad_x L_i, so grad_x [-log mean_i p_i(y)] = sum_i p_i(y) grad_x L_i / sum_i p_i(y)
  Eigen::VectorXd weighted = Eigen::VectorXd::Zero(x.size());
  double mass = 0.0;
  for (std::size_t i = 0; i < n_use; ++i) {
    const auto& w = ensemble.sample(i);
    const double p = softmax(forward(ensemble.arch(), w, x).col(0))(label);
    weighted += p * grad_input(ensemble.arch(), w, x, label);
    mass += p;
  }
  return weighted / mass;
}

}  // namespace bnnrobust
