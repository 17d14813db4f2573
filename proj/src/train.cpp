#include "jmorph/train.hpp"

#include "jmorph/errors.hpp"
#include "jmorph/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace jmorph {

void TrainConfig::validate() const {
  if (batch_size < 1)
    throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0.0))
    throw ConfigError("learning rate must be positive");
  if (max_epochs < 1)
    throw ConfigError("max epochs must be >= 1");
  if (patience < 1)
    throw ConfigError("patience must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
    throw ConfigError("adam parameters out of range");
}

Metrics metrics_from_confusion(
    const std::array<std::array<long, 4>, 4> &confusion) {
  Metrics m;
  m.confusion = confusion;
  long total = 0;
  for (const auto &row : confusion)
    for (long v : row)
      total += v;
  long diag = 0;
  for (int c = 0; c < 4; ++c) {
    const size_t u = size_t(c);
    long tp = confusion[u][u];
    long support = 0, predicted = 0;
    for (int r = 0; r < 4; ++r) {
      support += confusion[u][size_t(r)];
      predicted += confusion[size_t(r)][u];
    }
    diag += tp;
    long fp = predicted - tp, fn = support - tp;
    long tn = total - tp - fp - fn;
    m.has_support[u] = support > 0;
    m.precision[u] = predicted > 0 ? double(tp) / double(predicted) : 0.0;
    m.recall[u] = support > 0 ? double(tp) / double(support) : 0.0;
    m.accuracy[u] = total > 0 ? double(tp + tn) / double(total) : 0.0;
  }
  m.overall_accuracy = total > 0 ? double(diag) / double(total) : 0.0;
  return m;
}

Metrics metrics_from_predictions(const std::vector<int> &labels,
                                 const std::vector<int> &preds) {
  if (labels.size() != preds.size())
    throw InvariantError("metrics need one prediction per label");
  std::array<std::array<long, 4>, 4> confusion{};
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 3 || preds[i] < 0 || preds[i] > 3)
      throw InvariantError("class outside 0..3 in metrics");
    confusion[size_t(labels[i])][size_t(preds[i])]++;
  }
  return metrics_from_confusion(confusion);
}

namespace {

constexpr char kMagic[7] = {'J', 'M', 'N', 'E', 'T', '1', '\0'};

template <class T> void put(std::ofstream &f, const T &v) {
  f.write(reinterpret_cast<const char *>(&v), sizeof v);
}

template <class T> T get(std::ifstream &f, const char *what) {
  T v;
  f.read(reinterpret_cast<char *>(&v), sizeof v);
  if (!f)
    throw IoError(std::string("checkpoint truncated at ") + what);
  return v;
}

} // namespace

void save_checkpoint(Model &model, const std::string &path) {
  std::ofstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot write checkpoint: " + path);
  f.write(kMagic, sizeof kMagic);
  const std::string cfg = config_to_json(model.cfg);
  put(f, uint64_t(cfg.size()));
  f.write(cfg.data(), std::streamsize(cfg.size()));
  for (const Model::ParamRef &p : model.params()) {
    put(f, uint32_t(p.t->shape.size()));
    for (int d : p.t->shape)
      put(f, uint32_t(d));
    f.write(reinterpret_cast<const char *>(p.t->val.data()),
            std::streamsize(p.t->val.size() * sizeof(double)));
  }
  if (!f)
    throw IoError("short write on checkpoint: " + path);
}

Model load_checkpoint(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw IoError("cannot open checkpoint: " + path);
  char magic[sizeof kMagic];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IoError("not a model checkpoint: " + path);
  const auto len = get<uint64_t>(f, "config length");
  if (len > (1u << 20))
    throw IoError("checkpoint config block implausibly large");
  std::string cfg(len, '\0');
  f.read(cfg.data(), std::streamsize(len));
  if (!f)
    throw IoError("checkpoint truncated in config");
  Model model = Model::create(config_from_json(cfg), 0);
  for (const Model::ParamRef &p : model.params()) {
    const auto nd = get<uint32_t>(f, p.name.c_str());
    std::vector<int> shape(nd);
    for (uint32_t i = 0; i < nd; ++i)
      shape[i] = int(get<uint32_t>(f, p.name.c_str()));
    if (shape != p.t->shape)
      throw IoError("checkpoint tensor " + p.name + " has shape " +
                    shape_str(shape) + ", model expects " +
                    shape_str(p.t->shape));
    f.read(reinterpret_cast<char *>(p.t->val.data()),
           std::streamsize(p.t->val.size() * sizeof(double)));
    if (!f)
      throw IoError("checkpoint truncated in " + p.name);
  }
  if (f.peek() != std::ifstream::traits_type::eof())
    throw IoError("trailing bytes after checkpoint payload: " + path);
  return model;
}

Adam Adam::create(const TrainConfig &cfg, Model &model) {
  Adam a;
  a.lr = cfg.learning_rate;
  a.beta1 = cfg.adam_beta1;
  a.beta2 = cfg.adam_beta2;
  a.eps = cfg.adam_eps;
  for (const Model::ParamRef &p : model.params())
    if (p.trainable) {
      a.m.emplace_back(p.t->val.size(), 0.0);
      a.v.emplace_back(p.t->val.size(), 0.0);
    }
  return a;
}

void Adam::step(Model &model) {
  ++t;
  const double c1 = 1.0 - std::pow(beta1, double(t));
  const double c2 = 1.0 - std::pow(beta2, double(t));
  size_t slot = 0;
  for (const Model::ParamRef &p : model.params()) {
    if (!p.trainable)
      continue;
    if (slot >= m.size() || m[slot].size() != p.t->val.size())
      throw InvariantError("optimizer state does not match the model");
    p.t->require_grad();
    std::vector<double> &mm = m[slot], &vv = v[slot];
    for (size_t i = 0; i < p.t->val.size(); ++i) {
      const double g = p.t->grad[i];
      mm[i] = beta1 * mm[i] + (1.0 - beta1) * g;
      vv[i] = beta2 * vv[i] + (1.0 - beta2) * g * g;
      p.t->val[i] -= lr * (mm[i] / c1) / (std::sqrt(vv[i] / c2) + eps);
    }
    ++slot;
  }
}

std::pair<Tensor, std::vector<int>>
batch_from(const std::vector<Sample> &samples, const std::vector<size_t> &idx) {
  if (idx.empty())
    throw InvariantError("empty batch");
  const Sample &first = samples.at(idx[0]);
  Tensor x = Tensor::zeros({int(idx.size()), first.shape[0], first.shape[1],
                            first.shape[2], first.shape[3]});
  std::vector<int> labels(idx.size());
  const size_t per = first.input.size();
  for (size_t i = 0; i < idx.size(); ++i) {
    const Sample &s = samples.at(idx[i]);
    if (s.shape != first.shape || s.input.size() != per)
      throw InvariantError("batch mixes sample shapes");
    std::copy(s.input.begin(), s.input.end(), x.val.begin() + i * per);
    labels[i] = int(s.label);
  }
  return {std::move(x), std::move(labels)};
}

namespace {

std::vector<std::vector<size_t>> batches_of(size_t n, int batch_size) {
  std::vector<std::vector<size_t>> out;
  for (size_t at = 0; at < n; at += size_t(batch_size)) {
    std::vector<size_t> b;
    for (size_t i = at; i < std::min(n, at + size_t(batch_size)); ++i)
      b.push_back(i);
    out.push_back(std::move(b));
  }
  return out;
}

void check_samples_fit(const Model &model, const std::vector<Sample> &samples) {
  const std::array<int, 4> want{model.cfg.in_channels, model.cfg.input_dim[0],
                                model.cfg.input_dim[1], model.cfg.input_dim[2]};
  for (const Sample &s : samples)
    if (s.shape != want)
      throw InvariantError(
          "sample shape does not match the model input (channels or dims)");
}

} // namespace

std::vector<int> predict(Model &model, const std::vector<Sample> &samples,
                         int batch_size) {
  check_samples_fit(model, samples);
  std::vector<int> preds(samples.size());
  for (const std::vector<size_t> &b : batches_of(samples.size(), batch_size)) {
    auto [x, labels] = batch_from(samples, b);
    Activations acts;
    Tensor logits = model.forward(x, false, acts);
    const int k = logits.shape[1];
    for (size_t i = 0; i < b.size(); ++i) {
      const double *row = logits.val.data() + i * size_t(k);
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (row[c] > row[best])
          best = c;
      preds[b[i]] = best;
    }
  }
  return preds;
}

Metrics evaluate(Model &model, const std::vector<Sample> &samples,
                 int batch_size) {
  if (samples.empty())
    throw ConfigError("cannot evaluate an empty sample set");
  std::vector<int> labels(samples.size());
  for (size_t i = 0; i < samples.size(); ++i)
    labels[i] = int(samples[i].label);
  return metrics_from_predictions(labels,
                                  predict(model, samples, batch_size));
}

double eval_loss(Model &model, const std::vector<Sample> &samples,
                 int batch_size) {
  check_samples_fit(model, samples);
  double acc = 0;
  for (const std::vector<size_t> &b : batches_of(samples.size(), batch_size)) {
    auto [x, labels] = batch_from(samples, b);
    Activations acts;
    model.forward(x, false, acts);
    acc += cross_entropy(acts.logits, labels).first * double(b.size());
  }
  return acc / double(samples.size());
}

FoldResult train_fold(const ModelConfig &mc, const TrainConfig &tc,
                      const std::vector<Sample> &train,
                      const std::vector<Sample> &val,
                      const std::string &checkpoint_path, int fold_index) {
  mc.validate();
  tc.validate();
  if (train.empty() || val.empty())
    throw ConfigError("training fold is empty");

  Model model =
      Model::create(mc, Rng::mix(tc.seed, uint64_t(fold_index) + 1));
  check_samples_fit(model, train);
  check_samples_fit(model, val);
  Adam opt = Adam::create(tc, model);
  Rng shuffle_rng(
      Rng::mix(Rng::mix(tc.seed, Rng::hash_str("shuffle")), uint64_t(fold_index)));

  FoldResult out;
  out.fold = fold_index;
  out.checkpoint_path = checkpoint_path;
  double best_loss = 1e300;
  int stale = 0;
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i)
    order[i] = i;

  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0;
    long correct = 0;
    for (size_t at = 0; at < order.size(); at += size_t(tc.batch_size)) {
      std::vector<size_t> bidx(
          order.begin() + long(at),
          order.begin() +
              long(std::min(order.size(), at + size_t(tc.batch_size))));
      auto [x, labels] = batch_from(train, bidx);
      model.zero_grads();
      Activations acts;
      model.forward(x, true, acts);
      auto [loss, dlogits] = cross_entropy(acts.logits, labels);
      if (!std::isfinite(loss))
        throw InvariantError("training loss went non-finite");
      model.backward(acts, dlogits);
      opt.step(model);
      loss_sum += loss * double(bidx.size());
      for (size_t i = 0; i < bidx.size(); ++i) {
        const double *row =
            acts.logits.val.data() + i * size_t(acts.logits.shape[1]);
        int best = 0;
        for (int c = 1; c < acts.logits.shape[1]; ++c)
          if (row[c] > row[best])
            best = c;
        correct += best == labels[i];
      }
    }

    EpochStat st;
    st.epoch = epoch;
    st.train_loss = loss_sum / double(train.size());
    st.train_acc = double(correct) / double(train.size());
    st.val_loss = eval_loss(model, val, tc.batch_size);
    Metrics vm = evaluate(model, val, tc.batch_size);
    st.val_acc = vm.overall_accuracy;
    out.curve.push_back(st);

    if (st.val_loss < best_loss) {
      best_loss = st.val_loss;
      out.best_epoch = epoch;
      save_checkpoint(model, checkpoint_path);
      stale = 0;
    } else if (++stale >= tc.patience) {
      break;
    }
  }

  Model best = load_checkpoint(checkpoint_path);
  out.val_metrics = evaluate(best, val, tc.batch_size);
  return out;
}

void write_curves_csv(const std::vector<FoldResult> &folds,
                      const std::string &path) {
  std::ofstream f(path);
  if (!f)
    throw IoError("cannot write learning curves: " + path);
  f << "epoch,fold,train_acc,val_acc,train_loss,val_loss\n";
  char line[160];
  for (const FoldResult &fr : folds)
    for (const EpochStat &e : fr.curve) {
      std::snprintf(line, sizeof line, "%d,%d,%.6f,%.6f,%.9g,%.9g\n", e.epoch,
                    fr.fold, e.train_acc, e.val_acc, e.train_loss, e.val_loss);
      f << line;
    }
  if (!f)
    throw IoError("short write on learning curves: " + path);
}

} // namespace jmorph
