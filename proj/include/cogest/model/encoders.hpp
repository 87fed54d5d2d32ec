#ifndef COGEST_MODEL_ENCODERS_HPP_
#define COGEST_MODEL_ENCODERS_HPP_

#include <string>
#include <vector>

#include "cogest/nn/layers.hpp"
#include "cogest/text/tokenizer.hpp"

namespace cogest::model {

using nn::Linear;
using nn::ParameterStore;
using nn::Var;

/// Token ids padded to `len` with the pad id, plus a {0,1} row mask.
struct PaddedTokens {
  std::vector<int> ids;
  std::vector<float> mask;
  int len = 0;
};
/// Throws UsageError on an empty sequence; longer sequences are truncated.
PaddedTokens pad_tokens(const std::vector<std::vector<int>>& batch, int len = text::kMaxTokens);

/// Rows of a (B*L) x w matrix multiplied by the per-row mask.
template <typename Scalar>
Var<Scalar> mask_rows(const Var<Scalar>& x, std::span<const float> mask);

/// Encodes a token sequence into one vector: embedding, a residual
/// convolutional context layer, masked mean pooling and a linear map.
template <typename Scalar>
class TokenEncoder {
 public:
  TokenEncoder() = default;
  TokenEncoder(ParameterStore<Scalar>& store, const std::string& name, int vocab, int width, int out, Rng& rng);

  /// B x out
  Var<Scalar> operator()(const std::vector<std::vector<int>>& ids) const;
  int vocab() const { return static_cast<int>(table_.rows()); }
  int out_width() const { return static_cast<int>(out_.out_features()); }

 private:
  Var<Scalar> table_;
  Linear<Scalar> ctx_, out_;
};

/// Per-frame encoder with temporal context: Linear, mask, unfold(k), Linear, GELU.
/// Masked frames are zeroed after the first projection so padding cannot leak
/// into neighbours.
template <typename Scalar>
class FrameEncoder {
 public:
  FrameEncoder() = default;
  FrameEncoder(ParameterStore<Scalar>& store, const std::string& name, int in, int hidden, int kernel, Rng& rng);

  /// (B*N) x in -> (B*N) x hidden
  Var<Scalar> operator()(const Var<Scalar>& x, Eigen::Index seq_len, std::span<const float> mask) const;

 private:
  Linear<Scalar> in_, ctx_;
  int kernel_ = 1;
};

}  // namespace cogest::model

#endif  // COGEST_MODEL_ENCODERS_HPP_
