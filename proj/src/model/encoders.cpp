#include "cogest/model/encoders.hpp"

namespace cogest::model {

PaddedTokens pad_tokens(const std::vector<std::vector<int>>& batch, int len) {
  PaddedTokens p;
  p.len = len;
  p.ids.assign(batch.size() * static_cast<std::size_t>(len), text::Vocabulary::kPad);
  p.mask.assign(p.ids.size(), 0.0f);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b].empty()) throw UsageError("empty token sequence");
    const auto n = std::min(batch[b].size(), static_cast<std::size_t>(len));
    for (std::size_t i = 0; i < n; ++i) {
      p.ids[b * static_cast<std::size_t>(len) + i] = batch[b][i];
      p.mask[b * static_cast<std::size_t>(len) + i] = 1.0f;
    }
  }
  return p;
}

template <typename Scalar>
Var<Scalar> mask_rows(const Var<Scalar>& x, std::span<const float> mask) {
  if (mask.empty()) return x;
  Matrix<Scalar> m(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) m.row(r).setConstant(static_cast<Scalar>(mask[static_cast<std::size_t>(r)]));
  return nn::hadamard(x, nn::constant(std::move(m)));
}

template <typename Scalar>
TokenEncoder<Scalar>::TokenEncoder(ParameterStore<Scalar>& store, const std::string& name, int vocab, int width, int out, Rng& rng)
    : ctx_(store, name + ".ctx", 3 * width, width, rng, 0.5), out_(store, name + ".out", width, out, rng) {
  table_ = store.add(name + ".embed", rng.normal_matrix<Scalar>(vocab, width) * Scalar(0.5));
}

template <typename Scalar>
Var<Scalar> TokenEncoder<Scalar>::operator()(const std::vector<std::vector<int>>& ids) const {
  const PaddedTokens p = pad_tokens(ids);
  for (int id : p.ids) {
    if (id < 0 || id >= vocab()) throw DataError("token id " + std::to_string(id) + " outside the vocabulary");
  }
  const Var<Scalar> e = mask_rows(nn::embedding(table_, std::span<const int>(p.ids)), p.mask);
  const Var<Scalar> h = mask_rows(nn::add(e, nn::gelu(ctx_(nn::time_unfold(e, p.len, 3)))), p.mask);
  return out_(nn::seq_mean_pool(h, p.len, p.mask));
}

template <typename Scalar>
FrameEncoder<Scalar>::FrameEncoder(ParameterStore<Scalar>& store, const std::string& name, int in, int hidden, int kernel, Rng& rng)
    : in_(store, name + ".in", in, hidden, rng), ctx_(store, name + ".ctx", kernel * hidden, hidden, rng), kernel_(kernel) {}

template <typename Scalar>
Var<Scalar> FrameEncoder<Scalar>::operator()(const Var<Scalar>& x, Eigen::Index seq_len, std::span<const float> mask) const {
  const Var<Scalar> h = mask_rows(nn::gelu(in_(x)), mask);
  return mask_rows(nn::gelu(ctx_(nn::time_unfold(h, seq_len, kernel_))), mask);
}

template Var<float> mask_rows(const Var<float>&, std::span<const float>);
template Var<double> mask_rows(const Var<double>&, std::span<const float>);
template class TokenEncoder<float>;
template class TokenEncoder<double>;
template class FrameEncoder<float>;
template class FrameEncoder<double>;

}  // namespace cogest::model
