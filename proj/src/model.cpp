#include "jmorph/model.hpp"

#include "jmorph/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>

using nlohmann::json;

namespace jmorph {

void ModelConfig::validate() const {
  if (in_channels < 1)
    throw ConfigError("model needs at least one input channel");
  if (conv_blocks.empty())
    throw ConfigError("model needs at least one conv block");
  for (const ConvBlockSpec &b : conv_blocks)
    if (b.out_channels < 1)
      throw ConfigError("conv block channels must be positive");
  if (fc.empty())
    throw ConfigError("model needs at least the class layer");
  if (num_classes < 2)
    throw ConfigError("model needs at least two classes");
  if (fc.back() != num_classes)
    throw ConfigError("final fc width must equal the class count");
  for (int w : fc)
    if (w < 1)
      throw ConfigError("fc widths must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0))
    throw ConfigError("dropout probability must be in [0, 1)");
  for (int d : input_dim)
    if (d < 1)
      throw ConfigError("input dims must be positive");
  dims_through(); // throws when pooling exhausts a dim
}

std::vector<std::array<int, 3>> ModelConfig::dims_through() const {
  std::vector<std::array<int, 3>> dims{input_dim};
  for (size_t i = 0; i < conv_blocks.size(); ++i) {
    std::array<int, 3> d = dims.back();
    if (conv_blocks[i].pool) {
      for (int a = 0; a < 3; ++a)
        d[size_t(a)] /= 2;
      if (d[0] < 1 || d[1] < 1 || d[2] < 1)
        throw ConfigError("conv block " + std::to_string(i) +
                          ": pooling exhausts the input dims");
    }
    dims.push_back(d);
  }
  return dims;
}

int ModelConfig::flat_dim() const {
  std::array<int, 3> d = dims_through().back();
  return conv_blocks.back().out_channels * d[0] * d[1] * d[2];
}

ModelConfig ModelConfig::baseline(int in_channels) {
  ModelConfig cfg;
  cfg.in_channels = in_channels;
  for (int i = 0; i < 5; ++i)
    cfg.conv_blocks.push_back({10, true, true, i < 3});
  cfg.fc = {360, 4};
  return cfg;
}

ModelConfig ModelConfig::multimodal() {
  ModelConfig cfg = baseline(2);
  cfg.conv_blocks.push_back({10, true, true, false});
  cfg.conv_blocks.push_back({10, true, true, false});
  return cfg;
}

std::string config_to_json(const ModelConfig &cfg) {
  json j;
  j["in_channels"] = cfg.in_channels;
  j["input_dim"] = cfg.input_dim;
  j["conv_blocks"] = json::array();
  for (const ConvBlockSpec &b : cfg.conv_blocks)
    j["conv_blocks"].push_back({{"out_channels", b.out_channels},
                                {"batch_norm", b.batch_norm},
                                {"relu", b.relu},
                                {"pool", b.pool}});
  j["fc"] = cfg.fc;
  j["dropout_p"] = cfg.dropout_p;
  j["num_classes"] = cfg.num_classes;
  return j.dump();
}

ModelConfig config_from_json(const std::string &text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw IoError("malformed model config JSON");
  try {
    ModelConfig cfg;
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.input_dim = j.at("input_dim").get<std::array<int, 3>>();
    for (const json &b : j.at("conv_blocks"))
      cfg.conv_blocks.push_back({b.at("out_channels").get<int>(),
                                 b.at("batch_norm").get<bool>(),
                                 b.at("relu").get<bool>(),
                                 b.at("pool").get<bool>()});
    cfg.fc = j.at("fc").get<std::vector<int>>();
    cfg.dropout_p = j.at("dropout_p").get<double>();
    cfg.num_classes = j.at("num_classes").get<int>();
    cfg.validate();
    return cfg;
  } catch (const json::exception &e) {
    throw IoError(std::string("model config JSON missing fields: ") + e.what());
  }
}

Model Model::create(const ModelConfig &cfg, uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  Rng rng(Rng::mix(seed, Rng::hash_str("init")));
  int cin = cfg.in_channels;
  for (const ConvBlockSpec &b : cfg.conv_blocks) {
    m.convs.push_back(Conv3d::create(cin, b.out_channels, rng));
    m.bns.push_back(b.batch_norm ? BatchNorm::create(b.out_channels)
                                 : BatchNorm{});
    cin = b.out_channels;
  }
  int fin = cfg.flat_dim();
  for (int w : cfg.fc) {
    m.fcs.push_back(Dense::create(fin, w, rng));
    fin = w;
  }
  m.drop_rng = Rng(Rng::mix(seed, Rng::hash_str("dropout")));
  return m;
}

Tensor Model::forward(const Tensor &x, bool train, Activations &acts) {
  x.validate();
  const std::vector<int> want{x.shape.empty() ? 0 : x.shape[0],
                              cfg.in_channels, cfg.input_dim[0],
                              cfg.input_dim[1], cfg.input_dim[2]};
  if (x.shape.size() != 5 || x.shape != want)
    throw InvariantError("model input: expected " + shape_str(want) +
                         ", got " + shape_str(x.shape));
  if (!x.all_finite())
    throw InvariantError("model input has non-finite values");

  const size_t nb = cfg.conv_blocks.size();
  acts = Activations{};
  acts.input = x;
  acts.conv_in.resize(nb);
  acts.conv_out.resize(nb);
  acts.bn_cache.resize(nb);
  acts.bn_out.resize(nb);
  acts.act_out.resize(nb);
  acts.pool_arg.resize(nb);
  acts.pool_in_shape.resize(nb);

  Tensor cur = x;
  for (size_t i = 0; i < nb; ++i) {
    const ConvBlockSpec &spec = cfg.conv_blocks[i];
    acts.conv_in[i] = cur;
    cur = convs[i].forward(cur);
    acts.conv_out[i] = cur;
    if (spec.batch_norm) {
      cur = bns[i].forward(cur, train, acts.bn_cache[i]);
      acts.bn_out[i] = cur;
    }
    if (spec.relu)
      cur = relu_forward(cur);
    acts.act_out[i] = cur;
    if (spec.pool) {
      acts.pool_in_shape[i] = cur.shape;
      MaxPool pool;
      cur = pool.forward(cur, acts.pool_arg[i]);
    }
  }

  Tensor flat;
  flat.shape = {cur.shape[0], int(cur.size() / size_t(cur.shape[0]))};
  flat.val = cur.val;
  acts.flat = flat;

  cur = flat;
  acts.fc_in.resize(fcs.size());
  acts.fc_pre.resize(fcs.size());
  for (size_t i = 0; i < fcs.size(); ++i) {
    acts.fc_in[i] = cur;
    cur = fcs[i].forward(cur);
    acts.fc_pre[i] = cur;
    if (i + 1 < fcs.size()) {
      cur = relu_forward(cur);
      if (i == 0)
        cur = dropout_forward(cur, cfg.dropout_p, train, drop_rng,
                              acts.drop_mask);
    }
  }
  if (!cur.all_finite())
    throw InvariantError("model logits went non-finite");
  acts.logits = cur;
  return cur;
}

void Model::backward(const Activations &acts, const Tensor &dlogits,
                     Tensor *input_grad, int act_block, Tensor *act_grad) {
  if (dlogits.shape != acts.logits.shape)
    throw InvariantError("backward: cotangent shape " +
                         shape_str(dlogits.shape) + " does not match logits " +
                         shape_str(acts.logits.shape));
  Tensor g = dlogits;
  for (size_t i = fcs.size(); i-- > 0;) {
    if (i + 1 < fcs.size()) {
      if (i == 0 && !acts.drop_mask.empty())
        g = dropout_backward(acts.drop_mask, cfg.dropout_p, g);
      g = relu_backward(acts.fc_pre[i], g);
    }
    g = fcs[i].backward(acts.fc_in[i], g);
  }

  // undo the flatten
  const std::array<int, 3> ld = cfg.dims_through().back();
  Tensor gs;
  gs.shape = {acts.logits.shape[0], cfg.conv_blocks.back().out_channels, ld[0],
              ld[1], ld[2]};
  gs.val = std::move(g.val);

  for (size_t i = cfg.conv_blocks.size(); i-- > 0;) {
    const ConvBlockSpec &spec = cfg.conv_blocks[i];
    if (spec.pool) {
      MaxPool pool;
      gs = pool.backward(acts.pool_arg[i], acts.pool_in_shape[i], gs);
    }
    if (act_grad && int(i) == act_block)
      *act_grad = gs;
    if (spec.relu)
      gs = relu_backward(spec.batch_norm ? acts.bn_out[i] : acts.conv_out[i],
                         gs);
    if (spec.batch_norm)
      gs = bns[i].backward(acts.bn_cache[i], gs);
    gs = convs[i].backward(acts.conv_in[i], gs);
  }
  if (input_grad)
    *input_grad = std::move(gs);
}

double Model::loss_and_backward(const Tensor &x, const std::vector<int> &labels,
                                Tensor *input_grad) {
  for (int y : labels)
    if (y < 0 || y >= cfg.num_classes)
      throw InvariantError("label " + std::to_string(y) + " outside 0.." +
                           std::to_string(cfg.num_classes - 1));
  Activations acts;
  forward(x, true, acts);
  auto [loss, dlogits] = cross_entropy(acts.logits, labels);
  if (!std::isfinite(loss))
    throw InvariantError("training loss went non-finite");
  backward(acts, dlogits, input_grad);
  return loss;
}

std::vector<Model::ParamRef> Model::params() {
  std::vector<ParamRef> out;
  for (size_t i = 0; i < convs.size(); ++i) {
    const std::string p = "conv" + std::to_string(i);
    out.push_back({p + ".w", &convs[i].w, true});
    out.push_back({p + ".b", &convs[i].b, true});
    if (cfg.conv_blocks[i].batch_norm) {
      const std::string q = "bn" + std::to_string(i);
      out.push_back({q + ".gamma", &bns[i].gamma, true});
      out.push_back({q + ".beta", &bns[i].beta, true});
      out.push_back({q + ".running_mean", &bns[i].running_mean, false});
      out.push_back({q + ".running_var", &bns[i].running_var, false});
    }
  }
  for (size_t i = 0; i < fcs.size(); ++i) {
    const std::string p = "fc" + std::to_string(i);
    out.push_back({p + ".w", &fcs[i].w, true});
    out.push_back({p + ".b", &fcs[i].b, true});
  }
  return out;
}

void Model::zero_grads() {
  for (ParamRef &p : params()) {
    p.t->require_grad();
    p.t->zero_grad();
  }
}

} // namespace jmorph
