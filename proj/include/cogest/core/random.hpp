#ifndef COGEST_CORE_RANDOM_HPP_
#define COGEST_CORE_RANDOM_HPP_

#include <cstdint>
#include <random>
#include <string>

#include "cogest/core/types.hpp"

namespace cogest {

/// splitmix64 finalizer; used to derive independent sub-seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded generator with a platform-independent normal sampler (Box-Muller,
/// no cached second value) so that the full state is the engine state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi);  // inclusive
  double normal();

  template <typename Scalar>
  void fill_normal(Matrix<Scalar>& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(normal());
  }
  template <typename Scalar>
  Matrix<Scalar> normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Matrix<Scalar> m(rows, cols);
    fill_normal(m);
    return m;
  }

  std::string state() const;
  void set_state(const std::string& s);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cogest

#endif  // COGEST_CORE_RANDOM_HPP_
