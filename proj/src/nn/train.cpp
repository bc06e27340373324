#include "uiattr/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace uiattr::nn {

void validate(const TrainSpec& s) {
  if (s.epochs < 1 || s.patience < 1 || s.batch_size < 1 || !(s.learning_rate > 0.0) ||
      s.momentum < 0.0 || s.momentum >= 1.0 || !(s.plateau_factor > 0.0) ||
      s.plateau_factor > 1.0 || s.plateau_patience < 1 || s.clip_norm < 0.0) {
    throw std::invalid_argument("train spec: epochs, patience, batch size, learning rate and "
                                "plateau settings must be positive");
  }
}

std::size_t Targets::size() const {
  const auto w = static_cast<std::size_t>(std::max(width, 1));
  return loss == Loss::kCrossEntropy ? classes.size() / w : values.size() / w;
}

double loss_and_gradient(const Tensor& logits, const Targets& t, std::span<const std::size_t> samples,
                         Tensor* dlogits) {
  const std::size_t n = samples.size();
  if (logits.rank() != 2 || logits.dim(0) != n) throw ShapeError("loss: logits rows != batch");
  const std::size_t cols = logits.dim(1);
  const auto w = static_cast<std::size_t>(t.width);
  if (dlogits) dlogits->resize(logits.shape());
  double total = 0.0;
  if (t.loss == Targets::Loss::kCrossEntropy) {
    if (cols % w != 0) throw ShapeError("loss: logits do not split into groups");
    const std::size_t k = cols / w;
    const double scale = 1.0 / static_cast<double>(n * w);
    std::vector<double> p(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t g = 0; g < w; ++g) {
        const double* z = logits.data() + i * cols + g * k;
        const int cls = t.classes.at(samples[i] * w + g);
        if (cls < 0 || static_cast<std::size_t>(cls) >= k) throw std::out_of_range("loss: class index");
        Softmax::apply(z, p.data(), k);
        double m = *std::max_element(z, z + k);
        double lse = 0.0;
        for (std::size_t j = 0; j < k; ++j) lse += std::exp(z[j] - m);
        total += (m + std::log(lse)) - z[cls];
        if (dlogits) {
          double* d = dlogits->data() + i * cols + g * k;
          for (std::size_t j = 0; j < k; ++j) d[j] = (p[j] - (static_cast<int>(j) == cls)) * scale;
        }
      }
    }
    return total * scale;
  }
  if (cols != w) throw ShapeError("loss: regression outputs != target width");
  const double scale = 1.0 / static_cast<double>(n * w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double e = logits[i * cols + j] - t.values.at(samples[i] * w + j);
      total += e * e;
      if (dlogits) (*dlogits)[i * cols + j] = 2.0 * e * scale;
    }
  }
  return total * scale;
}

std::size_t count_correct(const Tensor& logits, const Targets& t, std::span<const std::size_t> samples) {
  if (t.loss != Targets::Loss::kCrossEntropy) return 0;
  const std::size_t cols = logits.dim(1);
  const auto w = static_cast<std::size_t>(t.width);
  const std::size_t k = cols / w;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (std::size_t g = 0; g < w; ++g) {
      const double* z = logits.data() + i * cols + g * k;
      const auto best = static_cast<int>(std::max_element(z, z + k) - z);
      correct += best == t.classes[samples[i] * w + g];
    }
  }
  return correct;
}

double gradient_norm(std::span<Parameter* const> params) {
  double ss = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.values()) ss += g * g;
  }
  return std::sqrt(ss);
}

double clip_gradients(std::span<Parameter* const> params, double max_norm) {
  const double norm = gradient_norm(params);
  if (max_norm <= 0.0 || norm <= max_norm) return norm;
  const double scale = max_norm / norm;
  for (Parameter* p : params) {
    for (double& g : p->grad.values()) g *= scale;
  }
  return gradient_norm(params);
}

namespace {

std::vector<Tensor> snapshot(Learner& learner) {
  std::vector<Tensor> out;
  for (Tensor* t : learner.state()) out.push_back(*t);
  return out;
}

void restore(Learner& learner, const std::vector<Tensor>& saved) {
  auto st = learner.state();
  for (std::size_t i = 0; i < st.size(); ++i) *st[i] = saved[i];
}

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalResult evaluate(Learner& learner, const Targets& targets, std::span<const std::size_t> idx,
                    std::size_t batch) {
  EvalResult r;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < idx.size(); b += batch) {
    auto chunk = idx.subspan(b, std::min(batch, idx.size() - b));
    const Tensor& out = learner.forward(chunk, Mode::kEval);
    r.loss += loss_and_gradient(out, targets, chunk, nullptr) * static_cast<double>(chunk.size());
    correct += count_correct(out, targets, chunk);
  }
  r.loss /= static_cast<double>(idx.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(idx.size() * targets.width);
  return r;
}

}  // namespace

TrainHistory train(Learner& learner, const Targets& targets, std::span<const std::size_t> train_idx,
                   std::span<const std::size_t> val_idx, const TrainSpec& spec,
                   const EpochCallback& on_epoch) {
  validate(spec);
  if (train_idx.empty() || val_idx.empty()) {
    throw std::invalid_argument("train: training and validation splits must be non-empty");
  }
  Rng rng(spec.seed);
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  auto params = learner.parameters();
  std::vector<Tensor> velocity;
  for (Parameter* p : params) velocity.emplace_back(p->value.shape());

  TrainHistory hist;
  hist.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best = snapshot(learner);
  double lr = spec.learning_rate;
  int since_best = 0;
  int since_decay = 0;
  Tensor dlogits;
  const auto batch = static_cast<std::size_t>(spec.batch_size);

  for (int epoch = 0; epoch < spec.epochs; ++epoch) {
    rng.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += batch) {
      std::span<const std::size_t> chunk(order.data() + b, std::min(batch, order.size() - b));
      for (Parameter* p : params) p->grad.fill(0.0);
      const Tensor& out = learner.forward(chunk, Mode::kTrain);
      const double loss = loss_and_gradient(out, targets, chunk, &dlogits);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite training loss at epoch " << epoch << ", batch " << b / batch
            << ", learning rate " << lr;
        throw TrainingError(msg.str());
      }
      loss_sum += loss * static_cast<double>(chunk.size());
      learner.backward(dlogits);
      const double norm = spec.clip_norm > 0.0 ? clip_gradients(params, spec.clip_norm)
                                               : gradient_norm(params);
      rec.max_grad_norm = std::max(rec.max_grad_norm, norm);
      for (std::size_t k = 0; k < params.size(); ++k) {
        double* w = params[k]->value.data();
        const double* g = params[k]->grad.data();
        double* v = velocity[k].data();
        for (std::size_t i = 0; i < velocity[k].size(); ++i) {
          v[i] = spec.momentum * v[i] + g[i];
          w[i] -= lr * v[i];
        }
      }
    }
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    const EvalResult ev = evaluate(learner, targets, val_idx, batch);
    if (!std::isfinite(ev.loss)) {
      throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    rec.val_loss = ev.loss;
    rec.val_accuracy = ev.accuracy;
    hist.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (ev.loss < hist.best_val_loss) {
      hist.best_val_loss = ev.loss;
      hist.best_epoch = epoch;
      best = snapshot(learner);
      since_best = 0;
      since_decay = 0;
    } else {
      ++since_best;
      if (++since_decay >= spec.plateau_patience) {
        lr *= spec.plateau_factor;
        since_decay = 0;
      }
      if (since_best >= spec.patience) {
        hist.early_stopped = true;
        break;
      }
    }
  }
  restore(learner, best);
  return hist;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            double val_fraction,
                                                                            std::uint64_t seed) {
  if (n < 2 || !(val_fraction > 0.0) || !(val_fraction < 1.0)) {
    throw std::invalid_argument("split: need n >= 2 and a validation fraction in (0, 1)");
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  auto nval = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  nval = std::clamp<std::size_t>(nval, 1, n - 1);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nval));
  std::vector<std::size_t> tr(idx.begin() + static_cast<std::ptrdiff_t>(nval), idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

}  // namespace uiattr::nn
