#include "debias/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "debias/error.hpp"
#include "debias/rng.hpp"

namespace debias {

void EncoderSpec::validate() const {
  if (num_layers == 0 || hidden_size == 0 || num_heads == 0 || vocab_size == 0 ||
      max_positions == 0) {
    throw InvalidEncoderSpec("encoder spec counts must all be >= 1");
  }
  if (hidden_size % num_heads != 0) {
    throw InvalidEncoderSpec("hidden size " + std::to_string(hidden_size) +
                             " is not divisible by " + std::to_string(num_heads) + " heads");
  }
}

PromptParameters::PromptParameters(std::size_t num_layers, std::size_t prefix_length,
                                   std::size_t hidden)
    : layers_(num_layers),
      prefix_(prefix_length),
      hidden_(hidden),
      values_(Eigen::VectorXd::Zero(
          static_cast<Eigen::Index>(num_layers * 2 * prefix_length * hidden))) {}

PromptParameters PromptParameters::random(std::size_t num_layers, std::size_t prefix_length,
                                          std::size_t hidden, std::uint64_t seed) {
  PromptParameters p(num_layers, prefix_length, hidden);
  Rng rng(derive_seed(seed, "prompt-init"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index i = 0; i < p.values_.size(); ++i) {
    p.values_[i] = rng.uniform(-0.5, 0.5) * scale;
  }
  return p;
}

PromptParameters::ConstBlock PromptParameters::block(std::size_t layer, int kv) const {
  const std::size_t offset = (layer * 2 + static_cast<std::size_t>(kv)) * prefix_ * hidden_;
  return ConstBlock(values_.data() + offset, static_cast<Eigen::Index>(prefix_),
                    static_cast<Eigen::Index>(hidden_));
}

PromptParameters::Block PromptParameters::block(std::size_t layer, int kv) {
  const std::size_t offset = (layer * 2 + static_cast<std::size_t>(kv)) * prefix_ * hidden_;
  return Block(values_.data() + offset, static_cast<Eigen::Index>(prefix_),
               static_cast<Eigen::Index>(hidden_));
}

Eigen::VectorXd word_embedding(const LayerStates& states, TokenSpan span,
                               std::size_t layer_index) {
  if (layer_index >= states.layers.size()) throw BadSpan("layer index out of range");
  if (span.begin >= span.end || span.end > states.tokens()) {
    throw BadSpan("span [" + std::to_string(span.begin) + ", " + std::to_string(span.end) +
                  ") invalid for " + std::to_string(states.tokens()) + " tokens");
  }
  const auto& layer = states.layers[layer_index];
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(layer.cols());
  for (std::size_t t = span.begin; t < span.end; ++t) {
    sum += layer.row(static_cast<Eigen::Index>(t)).transpose();
  }
  return sum / static_cast<double>(span.size());
}

Eigen::VectorXd word_embedding(const LayerStates& states, TokenSpan span,
                               LayerSelector layer) {
  if (states.layers.empty()) throw BadSpan("empty layer states");
  if (layer == LayerSelector::kFinal) {
    return word_embedding(states, span, states.layers.size() - 1);
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states.hidden()));
  for (std::size_t l = 0; l < states.layers.size(); ++l) sum += word_embedding(states, span, l);
  return sum / static_cast<double>(states.layers.size());
}

std::vector<double> mlm_logprob(const Encoder& encoder, const MlmQuery& query,
                                const PromptParameters* prompt) {
  const int mask = encoder.mask_token_id();
  if (query.masked >= query.token_ids.size() || query.token_ids[query.masked] != mask) {
    throw InvalidQuery("masked position does not hold the mask token");
  }
  if (std::count(query.token_ids.begin(), query.token_ids.end(), mask) != 1) {
    throw InvalidQuery("query must contain exactly one masked position");
  }
  const Eigen::VectorXd lp = encoder.mlm_log_probs(query.token_ids, query.masked, prompt);
  std::vector<double> out;
  out.reserve(query.candidates.size());
  for (int c : query.candidates) {
    if (c < 0 || c >= lp.size()) throw InvalidQuery("candidate id out of vocabulary range");
    out.push_back(lp[c]);
  }
  return out;
}

double chained_span_logprob(const Encoder& encoder, std::vector<int> token_ids,
                            TokenSpan span, const PromptParameters* prompt) {
  if (span.begin >= span.end || span.end > token_ids.size()) throw BadSpan("invalid candidate span");
  const std::vector<int> targets(token_ids.begin() + static_cast<std::ptrdiff_t>(span.begin),
                                 token_ids.begin() + static_cast<std::ptrdiff_t>(span.end));
  for (std::size_t t = span.begin; t < span.end; ++t) token_ids[t] = encoder.mask_token_id();
  double total = 0.0;
  for (std::size_t t = span.begin; t < span.end; ++t) {
    const Eigen::VectorXd lp = encoder.mlm_log_probs(token_ids, t, prompt);
    const int target = targets[t - span.begin];
    total += lp[target];
    token_ids[t] = target;
  }
  return total;
}

double pseudo_log_likelihood(const Encoder& encoder, const std::vector<int>& token_ids,
                             const std::vector<std::size_t>& positions,
                             const PromptParameters* prompt) {
  std::vector<int> ids = token_ids;
  double total = 0.0;
  for (std::size_t p : positions) {
    if (p >= ids.size()) throw BadSpan("pseudo-likelihood position out of range");
    const int original = ids[p];
    ids[p] = encoder.mask_token_id();
    total += encoder.mlm_log_probs(ids, p, prompt)[original];
    ids[p] = original;
  }
  return total;
}

}  // namespace debias
