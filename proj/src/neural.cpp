#include "nilel/neural.hpp"

#include <algorithm>
#include <cmath>

#include "nilel/errors.hpp"
#include "nilel/rng.hpp"

namespace nilel {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskedLogit = -1e30;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

double gelu_grad(double x) {
  const double phi = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

void fill_normal(Eigen::MatrixXd& m, Rng& rng, double stddev) {
  for (long c = 0; c < m.cols(); ++c) {
    for (long r = 0; r < m.rows(); ++r) m(r, c) = rng.normal(0.0, stddev);
  }
}

// Row-wise layer norm. Returns the normalized rows and caches x-hat and
// 1/std for the backward pass.
Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x, const Eigen::VectorXd& g,
                           const Eigen::VectorXd& b, Eigen::MatrixXd& xhat,
                           Eigen::VectorXd& invstd) {
  const long t = x.rows(), d = x.cols();
  xhat.resize(t, d);
  invstd.resize(t);
  Eigen::MatrixXd out(t, d);
  for (long r = 0; r < t; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kLnEps);
    invstd(r) = is;
    xhat.row(r) = (x.row(r).array() - mean) * is;
    out.row(r) = xhat.row(r).cwiseProduct(g.transpose()) + b.transpose();
  }
  return out;
}

// dx = invstd * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
void layer_norm_backward(const Eigen::MatrixXd& dy, const Eigen::MatrixXd& xhat,
                         const Eigen::VectorXd& invstd, const Eigen::VectorXd& g,
                         Eigen::VectorXd& dg, Eigen::VectorXd& db,
                         Eigen::MatrixXd& dx) {
  const long t = dy.rows(), d = dy.cols();
  dx.resize(t, d);
  for (long r = 0; r < t; ++r) {
    dg += dy.row(r).cwiseProduct(xhat.row(r)).transpose();
    db += dy.row(r).transpose();
    const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(g.transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
    dx.row(r) = invstd(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2);
  }
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 1 || embed_dim < 1 || heads < 1 || ffn_dim < 1 || max_len < 1 ||
      layers < 0) {
    throw ValidationError("encoder config has a non-positive dimension");
  }
  if (embed_dim % heads != 0) {
    throw ValidationError("embed_dim must be divisible by heads");
  }
}

EncoderModel init_encoder(const EncoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  EncoderModel m;
  m.config = config;
  const int d = config.embed_dim;
  m.token_embedding.resize(config.vocab_size, d);
  fill_normal(m.token_embedding, rng, 0.02);
  m.position_embedding.resize(config.max_len, d);
  fill_normal(m.position_embedding, rng, 0.02);
  m.layers.resize(config.layers);
  for (LayerWeights& l : m.layers) {
    for (Eigen::MatrixXd* w : {&l.wq, &l.wk, &l.wv, &l.wo}) {
      w->resize(d, d);
      fill_normal(*w, rng, 0.02);
    }
    l.bq = l.bk = l.bv = l.bo = Eigen::VectorXd::Zero(d);
    l.ln1_g = l.ln2_g = Eigen::VectorXd::Ones(d);
    l.ln1_b = l.ln2_b = Eigen::VectorXd::Zero(d);
    l.w1.resize(d, config.ffn_dim);
    fill_normal(l.w1, rng, 0.02);
    l.b1 = Eigen::VectorXd::Zero(config.ffn_dim);
    l.w2.resize(config.ffn_dim, d);
    fill_normal(l.w2, rng, 0.02);
    l.b2 = Eigen::VectorXd::Zero(d);
  }
  m.final_ln_g = Eigen::VectorXd::Ones(d);
  m.final_ln_b = Eigen::VectorXd::Zero(d);
  return m;
}

void EncoderGrads::set_zero() {
  token_embedding.setZero();
  position_embedding.setZero();
  for (LayerWeights& l : layers) {
    l.wq.setZero(); l.wk.setZero(); l.wv.setZero(); l.wo.setZero();
    l.bq.setZero(); l.bk.setZero(); l.bv.setZero(); l.bo.setZero();
    l.ln1_g.setZero(); l.ln1_b.setZero(); l.ln2_g.setZero(); l.ln2_b.setZero();
    l.w1.setZero(); l.b1.setZero(); l.w2.setZero(); l.b2.setZero();
  }
  final_ln_g.setZero();
  final_ln_b.setZero();
}

EncoderGrads make_grads(const EncoderModel& model) {
  EncoderGrads g;
  const int d = model.config.embed_dim;
  g.token_embedding = Eigen::MatrixXd::Zero(model.config.vocab_size, d);
  g.position_embedding = Eigen::MatrixXd::Zero(model.config.max_len, d);
  g.layers.resize(model.layers.size());
  for (LayerWeights& l : g.layers) {
    l.wq = l.wk = l.wv = l.wo = Eigen::MatrixXd::Zero(d, d);
    l.bq = l.bk = l.bv = l.bo = Eigen::VectorXd::Zero(d);
    l.ln1_g = l.ln1_b = l.ln2_g = l.ln2_b = Eigen::VectorXd::Zero(d);
    l.w1 = Eigen::MatrixXd::Zero(d, model.config.ffn_dim);
    l.b1 = Eigen::VectorXd::Zero(model.config.ffn_dim);
    l.w2 = Eigen::MatrixXd::Zero(model.config.ffn_dim, d);
    l.b2 = Eigen::VectorXd::Zero(d);
  }
  g.final_ln_g = Eigen::VectorXd::Zero(d);
  g.final_ln_b = Eigen::VectorXd::Zero(d);
  return g;
}

Eigen::VectorXd encode(const EncoderModel& model, const TokenizedInput& input,
                       ForwardCache& cache) {
  const int t = input.length();
  const int d = model.config.embed_dim;
  const int h = model.config.heads;
  const int hd = d / h;
  if (t > model.config.max_len) {
    throw ValidationError("input length exceeds encoder max_len");
  }
  for (const int id : input.ids) {
    if (id < 0 || id >= model.config.vocab_size) {
      throw ValidationError("token id " + std::to_string(id) +
                            " out of range for vocab size " +
                            std::to_string(model.config.vocab_size));
    }
  }

  cache.ids = input.ids;
  cache.mask = input.mask;
  cache.layers.assign(model.layers.size(), LayerCache{});

  Eigen::MatrixXd x(t, d);
  for (int r = 0; r < t; ++r) {
    x.row(r) = model.token_embedding.row(input.ids[r]) +
               model.position_embedding.row(r);
  }

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const LayerWeights& w = model.layers[li];
    LayerCache& c = cache.layers[li];
    c.x_in = x;
    c.h1 = layer_norm(x, w.ln1_g, w.ln1_b, c.xhat1, c.invstd1);
    c.q = (c.h1 * w.wq).rowwise() + w.bq.transpose();
    c.k = (c.h1 * w.wk).rowwise() + w.bk.transpose();
    c.v = (c.h1 * w.wv).rowwise() + w.bv.transpose();
    c.ctx.resize(t, d);
    c.attn.assign(h, Eigen::MatrixXd());
    for (int a = 0; a < h; ++a) {
      const auto qa = c.q.middleCols(a * hd, hd);
      const auto ka = c.k.middleCols(a * hd, hd);
      Eigen::MatrixXd logits = qa * ka.transpose() * scale;
      for (int col = 0; col < t; ++col) {
        if (input.mask[col] == 0) logits.col(col).setConstant(kMaskedLogit);
      }
      Eigen::MatrixXd& attn = c.attn[a];
      attn.resize(t, t);
      for (int r = 0; r < t; ++r) {
        const double mx = logits.row(r).maxCoeff();
        attn.row(r) = (logits.row(r).array() - mx).exp();
        attn.row(r) /= attn.row(r).sum();
      }
      c.ctx.middleCols(a * hd, hd) = attn * c.v.middleCols(a * hd, hd);
    }
    c.x_mid = x + ((c.ctx * w.wo).rowwise() + w.bo.transpose());
    c.h2 = layer_norm(c.x_mid, w.ln2_g, w.ln2_b, c.xhat2, c.invstd2);
    c.ffn_pre = (c.h2 * w.w1).rowwise() + w.b1.transpose();
    c.ffn_act = c.ffn_pre.unaryExpr([](double v) { return gelu(v); });
    x = c.x_mid + ((c.ffn_act * w.w2).rowwise() + w.b2.transpose());
  }

  cache.x_final = x;
  const Eigen::MatrixXd y = layer_norm(x, model.final_ln_g, model.final_ln_b,
                                       cache.xhat_final, cache.invstd_final);
  return y.row(0).transpose();
}

Eigen::VectorXd encode(const EncoderModel& model, const TokenizedInput& input) {
  ForwardCache cache;
  return encode(model, input, cache);
}

void backward_from_cls(const EncoderModel& model, const ForwardCache& cache,
                       const Eigen::VectorXd& d_cls, EncoderGrads& grads) {
  const int t = static_cast<int>(cache.ids.size());
  const int d = model.config.embed_dim;
  const int h = model.config.heads;
  const int hd = d / h;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(t, d);
  dy.row(0) = d_cls.transpose();

  Eigen::MatrixXd dx;
  layer_norm_backward(dy, cache.xhat_final, cache.invstd_final, model.final_ln_g,
                      grads.final_ln_g, grads.final_ln_b, dx);

  for (int li = static_cast<int>(model.layers.size()) - 1; li >= 0; --li) {
    const LayerWeights& w = model.layers[li];
    const LayerCache& c = cache.layers[li];
    LayerWeights& gw = grads.layers[li];

    // FFN branch: x_out = x_mid + gelu(h2 w1 + b1) w2 + b2
    const Eigen::MatrixXd& df = dx;
    gw.w2 += c.ffn_act.transpose() * df;
    gw.b2 += df.colwise().sum().transpose();
    Eigen::MatrixXd dact = df * w.w2.transpose();
    Eigen::MatrixXd dpre =
        dact.cwiseProduct(c.ffn_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    gw.w1 += c.h2.transpose() * dpre;
    gw.b1 += dpre.colwise().sum().transpose();
    const Eigen::MatrixXd dh2 = dpre * w.w1.transpose();
    Eigen::MatrixXd dx_mid;
    layer_norm_backward(dh2, c.xhat2, c.invstd2, w.ln2_g, gw.ln2_g, gw.ln2_b,
                        dx_mid);
    dx_mid += dx;  // residual

    // Attention branch: x_mid = x_in + (ctx wo + bo)
    const Eigen::MatrixXd& dattn_out = dx_mid;
    gw.wo += c.ctx.transpose() * dattn_out;
    gw.bo += dattn_out.colwise().sum().transpose();
    const Eigen::MatrixXd dctx = dattn_out * w.wo.transpose();

    Eigen::MatrixXd dq(t, d), dk(t, d), dv(t, d);
    for (int a = 0; a < h; ++a) {
      const auto va = c.v.middleCols(a * hd, hd);
      const auto dctx_a = dctx.middleCols(a * hd, hd);
      const Eigen::MatrixXd& attn = c.attn[a];
      Eigen::MatrixXd da = dctx_a * va.transpose();
      dv.middleCols(a * hd, hd) = attn.transpose() * dctx_a;
      // softmax rows: ds = attn .* (da - rowsum(da .* attn))
      Eigen::MatrixXd ds(t, t);
      for (int r = 0; r < t; ++r) {
        const double dot = da.row(r).cwiseProduct(attn.row(r)).sum();
        ds.row(r) = attn.row(r).cwiseProduct((da.row(r).array() - dot).matrix());
      }
      dq.middleCols(a * hd, hd) = ds * c.k.middleCols(a * hd, hd) * scale;
      dk.middleCols(a * hd, hd) = ds.transpose() * c.q.middleCols(a * hd, hd) * scale;
    }

    gw.wq += c.h1.transpose() * dq;
    gw.bq += dq.colwise().sum().transpose();
    gw.wk += c.h1.transpose() * dk;
    gw.bk += dk.colwise().sum().transpose();
    gw.wv += c.h1.transpose() * dv;
    gw.bv += dv.colwise().sum().transpose();
    const Eigen::MatrixXd dh1 =
        dq * w.wq.transpose() + dk * w.wk.transpose() + dv * w.wv.transpose();
    Eigen::MatrixXd dx_in;
    layer_norm_backward(dh1, c.xhat1, c.invstd1, w.ln1_g, gw.ln1_g, gw.ln1_b,
                        dx_in);
    dx = dx_in + dx_mid;  // residual
  }

  for (int r = 0; r < t; ++r) {
    grads.token_embedding.row(cache.ids[r]) += dx.row(r);
    grads.position_embedding.row(r) += dx.row(r);
  }
}

namespace {

void push_ref(std::vector<ParamRef>& out, const std::string& name,
              Eigen::MatrixXd& v, Eigen::MatrixXd* g, bool frozen,
              const std::vector<int>* frozen_rows = nullptr) {
  out.push_back(ParamRef{name, v.data(), g ? g->data() : nullptr, v.rows(),
                         v.cols(), frozen, frozen_rows});
}

void push_ref(std::vector<ParamRef>& out, const std::string& name,
              Eigen::VectorXd& v, Eigen::VectorXd* g, bool frozen) {
  out.push_back(
      ParamRef{name, v.data(), g ? g->data() : nullptr, v.rows(), 1, frozen});
}

}  // namespace

std::vector<ParamRef> param_refs(EncoderModel& m, EncoderGrads* g,
                                 const std::string& prefix) {
  std::vector<ParamRef> refs;
  push_ref(refs, prefix + "token_embedding", m.token_embedding,
           g ? &g->token_embedding : nullptr, m.freeze_token_embedding,
           m.frozen_token_rows.empty() ? nullptr : &m.frozen_token_rows);
  push_ref(refs, prefix + "position_embedding", m.position_embedding,
           g ? &g->position_embedding : nullptr, m.freeze_position_embedding);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    LayerWeights& l = m.layers[i];
    LayerWeights* lg = g ? &g->layers[i] : nullptr;
    const std::string p = prefix + "layers." + std::to_string(i) + ".";
    const bool fr = m.freeze_layers;
    push_ref(refs, p + "wq", l.wq, lg ? &lg->wq : nullptr, fr);
    push_ref(refs, p + "bq", l.bq, lg ? &lg->bq : nullptr, fr);
    push_ref(refs, p + "wk", l.wk, lg ? &lg->wk : nullptr, fr);
    push_ref(refs, p + "bk", l.bk, lg ? &lg->bk : nullptr, fr);
    push_ref(refs, p + "wv", l.wv, lg ? &lg->wv : nullptr, fr);
    push_ref(refs, p + "bv", l.bv, lg ? &lg->bv : nullptr, fr);
    push_ref(refs, p + "wo", l.wo, lg ? &lg->wo : nullptr, fr);
    push_ref(refs, p + "bo", l.bo, lg ? &lg->bo : nullptr, fr);
    push_ref(refs, p + "ln1_g", l.ln1_g, lg ? &lg->ln1_g : nullptr, fr);
    push_ref(refs, p + "ln1_b", l.ln1_b, lg ? &lg->ln1_b : nullptr, fr);
    push_ref(refs, p + "ln2_g", l.ln2_g, lg ? &lg->ln2_g : nullptr, fr);
    push_ref(refs, p + "ln2_b", l.ln2_b, lg ? &lg->ln2_b : nullptr, fr);
    push_ref(refs, p + "w1", l.w1, lg ? &lg->w1 : nullptr, fr);
    push_ref(refs, p + "b1", l.b1, lg ? &lg->b1 : nullptr, fr);
    push_ref(refs, p + "w2", l.w2, lg ? &lg->w2 : nullptr, fr);
    push_ref(refs, p + "b2", l.b2, lg ? &lg->b2 : nullptr, fr);
  }
  push_ref(refs, prefix + "final_ln_g", m.final_ln_g,
           g ? &g->final_ln_g : nullptr, m.freeze_final_norm);
  push_ref(refs, prefix + "final_ln_b", m.final_ln_b,
           g ? &g->final_ln_b : nullptr, m.freeze_final_norm);
  return refs;
}

void AdamW::step(const std::vector<ParamRef>& params) {
  ++step_count;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (const ParamRef& p : params) {
    if (p.frozen) continue;
    if (p.grad == nullptr) {
      throw ValidationError("parameter " + p.name + " has no gradient buffer");
    }
    Moments& mom = state_[p.name];
    const long n = p.size();
    if (mom.m.empty()) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    } else if (static_cast<long>(mom.m.size()) != n) {
      throw ValidationError("gradient shape mismatch for " + p.name);
    }
    for (long i = 0; i < n; ++i) {
      if (p.frozen_rows != nullptr) {
        const int row = static_cast<int>(i % p.rows);
        if (std::binary_search(p.frozen_rows->begin(), p.frozen_rows->end(), row)) {
          continue;
        }
      }
      const double g = p.grad[i];
      mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
      mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p.value[i] -=
          lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.value[i]);
    }
  }
}

double grad_check(const std::vector<ParamRef>& params,
                  const std::function<double()>& loss_fn, int n_samples,
                  double fd_step, std::uint64_t seed) {
  long total = 0;
  for (const ParamRef& p : params) total += p.size();
  if (total == 0) return 0.0;

  std::vector<std::pair<std::size_t, long>> picks;  // (param index, flat index)
  if (total <= n_samples) {
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      for (long i = 0; i < params[pi].size(); ++i) picks.emplace_back(pi, i);
    }
  } else {
    Rng rng(seed);
    for (int s = 0; s < n_samples; ++s) {
      long flat = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
      std::size_t pi = 0;
      while (flat >= params[pi].size()) {
        flat -= params[pi].size();
        ++pi;
      }
      picks.emplace_back(pi, flat);
    }
  }

  double max_rel = 0.0;
  for (const auto& [pi, i] : picks) {
    const ParamRef& p = params[pi];
    const double saved = p.value[i];
    p.value[i] = saved + fd_step;
    const double lp = loss_fn();
    p.value[i] = saved - fd_step;
    const double lm = loss_fn();
    p.value[i] = saved;
    const double fd = (lp - lm) / (2.0 * fd_step);
    const double ga = p.grad[i];
    const double denom = std::max({std::abs(ga), std::abs(fd), 1e-6});
    max_rel = std::max(max_rel, std::abs(ga - fd) / denom);
  }
  return max_rel;
}

}  // namespace nilel
