#include "debias/tiny_encoder.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias {

namespace {

constexpr double kLayerNormEps = 1e-12;

RowMatrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  RowMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = stddev * rng.normal();
  return m;
}

Eigen::RowVectorXd random_row(Rng& rng, Eigen::Index n, double mean, double stddev) {
  Eigen::RowVectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = mean + stddev * rng.normal();
  return v;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * (std::numbers::sqrt2 / 2.0))); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * (std::numbers::sqrt2 / 2.0)));
  const double pdf = std::exp(-0.5 * x * x) * 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
  return cdf + x * pdf;
}

struct LayerNormCache {
  RowMatrix xhat;
  Eigen::VectorXd inv_std;
};

RowMatrix layer_norm(const RowMatrix& x, const Eigen::RowVectorXd& gamma,
                     const Eigen::RowVectorXd& beta, LayerNormCache* cache) {
  const Eigen::Index n = x.cols();
  RowMatrix xhat(x.rows(), n);
  Eigen::VectorXd inv(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const Eigen::RowVectorXd centered = x.row(r).array() - mu;
    const double var = centered.squaredNorm() / static_cast<double>(n);
    inv[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = centered * inv[r];
  }
  RowMatrix y = (xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv);
  }
  return y;
}

RowMatrix layer_norm_backward(const LayerNormCache& cache, const Eigen::RowVectorXd& gamma,
                              const RowMatrix& dy) {
  RowMatrix dxhat = dy.array().rowwise() * gamma.array();
  RowMatrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = dxhat.row(r).dot(cache.xhat.row(r)) / static_cast<double>(dy.cols());
    dx.row(r) = cache.inv_std[r] *
                (dxhat.row(r).array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

void softmax_rows(RowMatrix& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}

void hash_bytes(std::uint64_t& h, const double* data, Eigen::Index n) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

struct TinyEncoder::LayerCache {
  RowMatrix input;   // T x H
  RowMatrix query;   // T x H
  RowMatrix keys;    // (k+T) x H
  RowMatrix values;  // (k+T) x H
  std::vector<RowMatrix> attention;  // per head, T x (k+T)
  RowMatrix context;                 // T x H
  LayerNormCache ln1;
  RowMatrix hidden1;  // T x H
  RowMatrix pre_act;  // T x F
  RowMatrix act;      // T x F
  LayerNormCache ln2;
};

class TinyEncoder::Trace final : public EncoderTrace {
 public:
  const LayerStates& states() const override { return states_; }

  LayerStates states_;
  std::vector<LayerCache> caches_;
  std::size_t prefix_length_ = 0;
};

TinyEncoder::TinyEncoder(EncoderSpec spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(derive_seed(seed, "tiny-encoder"));
  const auto H = static_cast<Eigen::Index>(spec_.hidden_size);
  const auto F = static_cast<Eigen::Index>(spec_.ffn_size());
  const auto V = static_cast<Eigen::Index>(spec_.vocab_size);
  const auto P = static_cast<Eigen::Index>(spec_.max_positions);
  const double wstd = 1.0 / std::sqrt(static_cast<double>(H));
  const double fstd = 1.0 / std::sqrt(static_cast<double>(F));

  weights_.token_embedding = random_matrix(rng, V, H, 1.0);
  weights_.position_embedding = random_matrix(rng, P, H, 0.5);
  weights_.emb_gamma = random_row(rng, H, 1.0, 0.1);
  weights_.emb_beta = random_row(rng, H, 0.0, 0.1);
  for (std::size_t l = 0; l < spec_.num_layers; ++l) {
    Layer layer;
    layer.wq = random_matrix(rng, H, H, wstd);
    layer.wk = random_matrix(rng, H, H, wstd);
    layer.wv = random_matrix(rng, H, H, wstd);
    layer.wo = random_matrix(rng, H, H, wstd);
    layer.w1 = random_matrix(rng, H, F, wstd);
    layer.w2 = random_matrix(rng, F, H, fstd);
    layer.bq = random_row(rng, H, 0.0, 0.1);
    layer.bk = random_row(rng, H, 0.0, 0.1);
    layer.bv = random_row(rng, H, 0.0, 0.1);
    layer.bo = random_row(rng, H, 0.0, 0.1);
    layer.b1 = random_row(rng, F, 0.0, 0.1);
    layer.b2 = random_row(rng, H, 0.0, 0.1);
    layer.ln1_gamma = random_row(rng, H, 1.0, 0.1);
    layer.ln1_beta = random_row(rng, H, 0.0, 0.1);
    layer.ln2_gamma = random_row(rng, H, 1.0, 0.1);
    layer.ln2_beta = random_row(rng, H, 0.0, 0.1);
    weights_.layers.push_back(std::move(layer));
  }
  weights_.head_transform = random_matrix(rng, H, H, wstd);
  weights_.head_bias = random_row(rng, H, 0.0, 0.1);
  weights_.head_gamma = random_row(rng, H, 1.0, 0.1);
  weights_.head_beta = random_row(rng, H, 0.0, 0.1);
  weights_.output_bias = random_row(rng, V, 0.0, 0.1);
}

LayerStates TinyEncoder::run(std::span<const int> token_ids, const PromptParameters* prompt,
                             std::vector<LayerCache>* caches) const {
  const std::size_t k = prompt ? prompt->prefix_length() : 0;
  const std::size_t T = token_ids.size();
  if (T == 0) throw BadSpan("cannot encode an empty token sequence");
  if (T + k > spec_.max_positions) {
    throw ContextOverflow(std::to_string(T) + " tokens + " + std::to_string(k) +
                          " prefix positions exceed max_positions " +
                          std::to_string(spec_.max_positions));
  }
  if (prompt && k > 0 &&
      (prompt->num_layers() != spec_.num_layers || prompt->hidden() != spec_.hidden_size)) {
    throw InvalidEncoderSpec("prompt shape does not match the encoder");
  }
  const auto H = static_cast<Eigen::Index>(spec_.hidden_size);
  const auto Ti = static_cast<Eigen::Index>(T);
  const auto ki = static_cast<Eigen::Index>(k);
  const auto dh = static_cast<Eigen::Index>(spec_.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  RowMatrix x(Ti, H);
  for (Eigen::Index t = 0; t < Ti; ++t) {
    const int id = token_ids[static_cast<std::size_t>(t)];
    if (id < 0 || static_cast<std::size_t>(id) >= spec_.vocab_size) {
      throw InvalidQuery("token id " + std::to_string(id) + " outside the vocabulary");
    }
    x.row(t) = weights_.token_embedding.row(id) + weights_.position_embedding.row(t);
  }
  x = layer_norm(x, weights_.emb_gamma, weights_.emb_beta, nullptr);

  LayerStates states;
  states.layers.reserve(spec_.num_layers + 1);
  states.layers.push_back(x);
  if (caches) caches->resize(spec_.num_layers);

  for (std::size_t l = 0; l < spec_.num_layers; ++l) {
    const Layer& w = weights_.layers[l];
    RowMatrix q = (x * w.wq).rowwise() + w.bq;
    RowMatrix keys(ki + Ti, H);
    RowMatrix values(ki + Ti, H);
    if (k > 0) {
      keys.topRows(ki) = prompt->keys(l);
      values.topRows(ki) = prompt->values(l);
    }
    keys.bottomRows(Ti) = (x * w.wk).rowwise() + w.bk;
    values.bottomRows(Ti) = (x * w.wv).rowwise() + w.bv;

    RowMatrix context(Ti, H);
    std::vector<RowMatrix> attention;
    for (std::size_t h = 0; h < spec_.num_heads; ++h) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
      RowMatrix s = (q.middleCols(c0, dh) * keys.middleCols(c0, dh).transpose()) * scale;
      softmax_rows(s);
      context.middleCols(c0, dh) = s * values.middleCols(c0, dh);
      if (caches) attention.push_back(std::move(s));
    }
    RowMatrix r1 = x + ((context * w.wo).rowwise() + w.bo);
    LayerNormCache ln1;
    RowMatrix h1 = layer_norm(r1, w.ln1_gamma, w.ln1_beta, caches ? &ln1 : nullptr);
    RowMatrix z = (h1 * w.w1).rowwise() + w.b1;
    RowMatrix a = z.unaryExpr([](double v) { return gelu(v); });
    RowMatrix r2 = h1 + ((a * w.w2).rowwise() + w.b2);
    LayerNormCache ln2;
    RowMatrix y = layer_norm(r2, w.ln2_gamma, w.ln2_beta, caches ? &ln2 : nullptr);

    if (caches) {
      LayerCache& c = (*caches)[l];
      c.input = std::move(x);
      c.query = std::move(q);
      c.keys = std::move(keys);
      c.values = std::move(values);
      c.attention = std::move(attention);
      c.context = std::move(context);
      c.ln1 = std::move(ln1);
      c.hidden1 = std::move(h1);
      c.pre_act = std::move(z);
      c.act = std::move(a);
      c.ln2 = std::move(ln2);
    }
    states.layers.push_back(y);
    x = std::move(y);
  }
  return states;
}

LayerStates TinyEncoder::encode(const TokenizedSentence& sentence,
                                const PromptParameters* prompt) const {
  return run(sentence.token_ids, prompt, nullptr);
}

std::unique_ptr<EncoderTrace> TinyEncoder::forward(const TokenizedSentence& sentence,
                                                   const PromptParameters& prompt) const {
  auto trace = std::make_unique<Trace>();
  trace->states_ = run(sentence.token_ids, &prompt, &trace->caches_);
  trace->prefix_length_ = prompt.prefix_length();
  return trace;
}

void TinyEncoder::backward(const EncoderTrace& trace_base,
                           const std::vector<RowMatrix>& state_grads,
                           const PromptParameters& prompt,
                           Eigen::Ref<Eigen::VectorXd> prompt_grad) const {
  const auto& trace = dynamic_cast<const Trace&>(trace_base);
  const std::size_t L = spec_.num_layers;
  if (state_grads.size() != L + 1) {
    throw InvalidQuery("state gradients must cover all " + std::to_string(L + 1) + " layers");
  }
  if (prompt_grad.size() != prompt.flat().size()) {
    throw InvalidQuery("prompt gradient has the wrong size");
  }
  const std::size_t k = trace.prefix_length_;
  if (k == 0) return;
  const auto ki = static_cast<Eigen::Index>(k);
  const auto Ti = static_cast<Eigen::Index>(trace.states_.tokens());
  const auto H = static_cast<Eigen::Index>(spec_.hidden_size);
  const auto dh = static_cast<Eigen::Index>(spec_.head_dim());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // Last layer that receives any gradient.
  std::size_t top = L + 1;
  for (std::size_t l = L + 1; l-- > 1;) {
    if (state_grads[l].size() != 0) {
      top = l;
      break;
    }
  }
  if (top == L + 1) return;

  RowMatrix grad = state_grads[top];
  for (std::size_t l = top; l >= 1; --l) {
    const Layer& w = weights_.layers[l - 1];
    const LayerCache& c = trace.caches_[l - 1];

    RowMatrix d_r2 = layer_norm_backward(c.ln2, w.ln2_gamma, grad);
    RowMatrix d_act = d_r2 * w.w2.transpose();
    RowMatrix d_pre = d_act.array() * c.pre_act.unaryExpr([](double v) { return gelu_grad(v); }).array();
    RowMatrix d_h1 = d_r2 + d_pre * w.w1.transpose();
    RowMatrix d_r1 = layer_norm_backward(c.ln1, w.ln1_gamma, d_h1);
    RowMatrix d_context = d_r1 * w.wo.transpose();

    RowMatrix d_q(Ti, H);
    RowMatrix d_keys(ki + Ti, H);
    RowMatrix d_values(ki + Ti, H);
    for (std::size_t h = 0; h < spec_.num_heads; ++h) {
      const Eigen::Index c0 = static_cast<Eigen::Index>(h) * dh;
      const RowMatrix& a = c.attention[h];
      const RowMatrix d_ctx = d_context.middleCols(c0, dh);
      RowMatrix d_a = d_ctx * c.values.middleCols(c0, dh).transpose();
      d_values.middleCols(c0, dh) = a.transpose() * d_ctx;
      const Eigen::VectorXd row_dot = (d_a.array() * a.array()).rowwise().sum();
      RowMatrix d_s = a.array() * (d_a.colwise() - row_dot).array();
      d_q.middleCols(c0, dh) = (d_s * c.keys.middleCols(c0, dh)) * scale;
      d_keys.middleCols(c0, dh) = (d_s.transpose() * c.query.middleCols(c0, dh)) * scale;
    }

    const std::size_t offset = ((l - 1) * 2) * k * spec_.hidden_size;
    Eigen::Map<RowMatrix>(prompt_grad.data() + offset, ki, H) += d_keys.topRows(ki);
    Eigen::Map<RowMatrix>(prompt_grad.data() + offset + k * spec_.hidden_size, ki, H) +=
        d_values.topRows(ki);

    if (l == 1) break;
    grad = d_r1 + d_q * w.wq.transpose() + d_keys.bottomRows(Ti) * w.wk.transpose() +
           d_values.bottomRows(Ti) * w.wv.transpose();
    if (state_grads[l - 1].size() != 0) grad += state_grads[l - 1];
  }
}

Eigen::VectorXd TinyEncoder::mlm_log_probs(std::span<const int> token_ids,
                                           std::size_t masked_pos,
                                           const PromptParameters* prompt) const {
  if (masked_pos >= token_ids.size()) throw InvalidQuery("masked position out of range");
  const LayerStates states = run(token_ids, prompt, nullptr);
  const Eigen::RowVectorXd h = states.final_layer().row(static_cast<Eigen::Index>(masked_pos));
  RowMatrix t = (h * weights_.head_transform + weights_.head_bias)
                    .unaryExpr([](double v) { return gelu(v); });
  t = layer_norm(t, weights_.head_gamma, weights_.head_beta, nullptr);
  Eigen::VectorXd logits =
      (weights_.token_embedding * t.row(0).transpose()) + weights_.output_bias.transpose();
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  return logits.array() - lse;
}

std::uint64_t TinyEncoder::weights_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto add = [&](const auto& m) { hash_bytes(h, m.data(), m.size()); };
  add(weights_.token_embedding);
  add(weights_.position_embedding);
  add(weights_.emb_gamma);
  add(weights_.emb_beta);
  for (const auto& l : weights_.layers) {
    add(l.wq); add(l.wk); add(l.wv); add(l.wo); add(l.w1); add(l.w2);
    add(l.bq); add(l.bk); add(l.bv); add(l.bo); add(l.b1); add(l.b2);
    add(l.ln1_gamma); add(l.ln1_beta); add(l.ln2_gamma); add(l.ln2_beta);
  }
  add(weights_.head_transform);
  add(weights_.head_bias);
  add(weights_.head_gamma);
  add(weights_.head_beta);
  add(weights_.output_bias);
  return h;
}

}  // namespace debias
