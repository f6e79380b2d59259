#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace debias {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EncoderSpec {
  std::size_t num_layers = 2;
  std::size_t hidden_size = 8;
  std::size_t num_heads = 2;
  std::size_t vocab_size = 128;
  std::size_t max_positions = 64;
  /// Feed-forward width; 0 means 4 * hidden_size.
  std::size_t intermediate_size = 0;

  std::size_t ffn_size() const {
    return intermediate_size ? intermediate_size : 4 * hidden_size;
  }
  std::size_t head_dim() const { return hidden_size / num_heads; }

  /// Throws InvalidEncoderSpec on zero counts or hidden % heads != 0.
  void validate() const;
};

/// Half-open sub-token range [begin, end).
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct TokenizedSentence {
  std::vector<int> token_ids;
  /// Byte offsets of each token in the source text; special tokens carry
  /// {npos, npos}.
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
  /// Sub-token range of each requested word occurrence, in request order.
  std::vector<TokenSpan> word_spans;

  std::size_t size() const { return token_ids.size(); }
};

/// Hidden states of the embedding layer plus every transformer layer, each
/// T x H. Prefix positions never appear here.
struct LayerStates {
  std::vector<RowMatrix> layers;

  std::size_t num_layers() const { return layers.empty() ? 0 : layers.size() - 1; }
  std::size_t tokens() const { return layers.empty() ? 0 : layers.front().rows(); }
  std::size_t hidden() const { return layers.empty() ? 0 : layers.front().cols(); }
  const RowMatrix& final_layer() const { return layers.back(); }
};

/// Deep-prefix prompt: per layer, k key rows and k value rows of width H,
/// stored contiguously in (layer, key/value, position, hidden) order.
class PromptParameters {
 public:
  PromptParameters() = default;
  PromptParameters(std::size_t num_layers, std::size_t prefix_length, std::size_t hidden);

  /// Entries uniform in [-0.5, 0.5] / sqrt(H).
  static PromptParameters random(std::size_t num_layers, std::size_t prefix_length,
                                 std::size_t hidden, std::uint64_t seed);

  std::size_t num_layers() const { return layers_; }
  std::size_t prefix_length() const { return prefix_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(values_.size()); }

  using Block = Eigen::Map<RowMatrix>;
  using ConstBlock = Eigen::Map<const RowMatrix>;

  ConstBlock keys(std::size_t layer) const { return block(layer, 0); }
  ConstBlock values(std::size_t layer) const { return block(layer, 1); }
  Block keys(std::size_t layer) { return block(layer, 0); }
  Block values(std::size_t layer) { return block(layer, 1); }

  Eigen::VectorXd& flat() { return values_; }
  const Eigen::VectorXd& flat() const { return values_; }

  bool all_finite() const { return values_.allFinite(); }

 private:
  ConstBlock block(std::size_t layer, int kv) const;
  Block block(std::size_t layer, int kv);

  std::size_t layers_ = 0;
  std::size_t prefix_ = 0;
  std::size_t hidden_ = 0;
  Eigen::VectorXd values_;
};

enum class LayerSelector { kFinal, kAllMean };

/// Mean of the span's rows at the selected layer.
Eigen::VectorXd word_embedding(const LayerStates& states, TokenSpan span,
                               LayerSelector layer = LayerSelector::kFinal);
Eigen::VectorXd word_embedding(const LayerStates& states, TokenSpan span,
                               std::size_t layer_index);

/// Frozen text encoder contract. Implementations never modify their weights.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual const EncoderSpec& spec() const = 0;
  virtual int mask_token_id() const = 0;

  /// Forward pass. With `prompt` null or k == 0 the output equals the base
  /// encoder. Throws ContextOverflow if tokens + k exceed max_positions.
  virtual LayerStates encode(const TokenizedSentence& sentence,
                             const PromptParameters* prompt = nullptr) const = 0;

  /// Log-softmax over the vocabulary at `masked_pos`.
  virtual Eigen::VectorXd mlm_log_probs(std::span<const int> token_ids,
                                        std::size_t masked_pos,
                                        const PromptParameters* prompt = nullptr) const = 0;

  /// Checksum over every base weight.
  virtual std::uint64_t weights_checksum() const = 0;
};

/// Cached activations of one prompted forward pass.
class EncoderTrace {
 public:
  virtual ~EncoderTrace() = default;
  virtual const LayerStates& states() const = 0;
};

/// Encoder that can backpropagate into prompt parameters.
class DifferentiableEncoder : public Encoder {
 public:
  virtual std::unique_ptr<EncoderTrace> forward(const TokenizedSentence& sentence,
                                                const PromptParameters& prompt) const = 0;

  /// Accumulates d(loss)/d(prompt) into `prompt_grad` (flat layout of
  /// PromptParameters) given d(loss)/d(states) for every reported layer.
  virtual void backward(const EncoderTrace& trace, const std::vector<RowMatrix>& state_grads,
                        const PromptParameters& prompt,
                        Eigen::Ref<Eigen::VectorXd> prompt_grad) const = 0;
};

/// A masked-token query: exactly one position of `token_ids` holds the mask id.
struct MlmQuery {
  std::vector<int> token_ids;
  std::size_t masked = 0;
  std::vector<int> candidates;
};

/// Log-probability of each candidate at the masked position.
std::vector<double> mlm_logprob(const Encoder& encoder, const MlmQuery& query,
                                const PromptParameters* prompt = nullptr);

/// Log-probability of the tokens at `span` of `token_ids` under a
/// one-mask-at-a-time schedule: all span positions start masked and are
/// revealed left to right, each contributing log P(token | revealed so far).
double chained_span_logprob(const Encoder& encoder, std::vector<int> token_ids,
                            TokenSpan span, const PromptParameters* prompt = nullptr);

/// Sum over `positions` of log P(token | sentence with that one token masked).
double pseudo_log_likelihood(const Encoder& encoder, const std::vector<int>& token_ids,
                             const std::vector<std::size_t>& positions,
                             const PromptParameters* prompt = nullptr);

}  // namespace debias
