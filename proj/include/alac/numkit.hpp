#pragma once

// Dense linear algebra, random streams, initialization and Adam.
//
// Vectors and matrices are Eigen types in double precision. Batched data is
// laid out column-per-sample: a (dim x batch) matrix holds `batch` vectors.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace alac {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Thrown when a caller violates a documented precondition.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a value that must stay finite does not.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

bool all_finite(const Matrix& m);
bool all_finite(std::span<const double> xs);

/// Deterministic pseudo-random stream.
///
/// Engine: xoshiro256** (Blackman & Vigna). The 256-bit state is filled by
/// four successive SplitMix64 outputs started from
/// `splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019)`, so each
/// (seed, stream) pair yields an independent, reproducible sequence.
/// Uniform doubles use the top 53 bits; normals use the Box-Muller transform
/// with the second variate cached.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// A new stream from the same seed with a different stream index.
  RngStream derive(std::uint64_t stream) const { return RngStream(seed_, stream); }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). Requires n > 0.
  std::uint64_t below(std::uint64_t n);
  double normal();

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

/// W z + b.
Vector affine_forward(const Matrix& W, const Vector& b, const Vector& z);

/// Vector of i.i.d. standard normals.
Vector gaussian_draw(RngStream& rng, int dim);
/// (rows x cols) matrix of i.i.d. standard normals, filled column by column.
Matrix gaussian_matrix(RngStream& rng, int rows, int cols);

/// Random matrix with orthonormal rows (rows <= cols) or columns
/// (rows > cols), scaled by `gain`.
Matrix orthogonal_init(int rows, int cols, double gain, RngStream& rng);

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState() = default;
  explicit AdamState(Eigen::Index size)
      : first_moment(Vector::Zero(size)), second_moment(Vector::Zero(size)) {}
};

/// One bias-corrected Adam step that descends along `grads`.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& state, double lr);

}  // namespace alac
