#pragma once

#include <cstdint>

#include "debias/encoder.hpp"

namespace debias {

/// Small post-LayerNorm transformer encoder with a tied masked-LM head and
/// deterministic random weights. Supports deep-prefix prompts and exact
/// gradients with respect to them. Meant for desk-scale runs and tests; a
/// pretrained model attaches through the Encoder contract instead.
class TinyEncoder final : public DifferentiableEncoder {
 public:
  /// Throws InvalidEncoderSpec if `spec` is invalid.
  TinyEncoder(EncoderSpec spec, std::uint64_t seed);

  const EncoderSpec& spec() const override { return spec_; }
  int mask_token_id() const override { return mask_id_; }
  void set_mask_token_id(int id) { mask_id_ = id; }

  LayerStates encode(const TokenizedSentence& sentence,
                     const PromptParameters* prompt = nullptr) const override;

  Eigen::VectorXd mlm_log_probs(std::span<const int> token_ids, std::size_t masked_pos,
                                const PromptParameters* prompt = nullptr) const override;

  std::uint64_t weights_checksum() const override;

  std::unique_ptr<EncoderTrace> forward(const TokenizedSentence& sentence,
                                        const PromptParameters& prompt) const override;

  void backward(const EncoderTrace& trace, const std::vector<RowMatrix>& state_grads,
                const PromptParameters& prompt,
                Eigen::Ref<Eigen::VectorXd> prompt_grad) const override;

  struct Layer {
    RowMatrix wq, wk, wv, wo, w1, w2;
    Eigen::RowVectorXd bq, bk, bv, bo, b1, b2;
    Eigen::RowVectorXd ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  };

  struct Weights {
    RowMatrix token_embedding;     // V x H, tied with the output projection
    RowMatrix position_embedding;  // P x H
    Eigen::RowVectorXd emb_gamma, emb_beta;
    std::vector<Layer> layers;
    RowMatrix head_transform;  // H x H
    Eigen::RowVectorXd head_bias, head_gamma, head_beta;
    Eigen::RowVectorXd output_bias;  // V
  };

  const Weights& weights() const { return weights_; }

 private:
  struct LayerCache;
  class Trace;

  LayerStates run(std::span<const int> token_ids, const PromptParameters* prompt,
                  std::vector<LayerCache>* caches) const;

  EncoderSpec spec_;
  Weights weights_;
  int mask_id_ = 4;
};

}  // namespace debias
