#include "alac/numkit.hpp"

#include <cmath>
#include <numbers>

namespace alac {

bool all_finite(const Matrix& m) { return m.allFinite(); }

bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

std::uint64_t mix(std::uint64_t x) { return splitmix64(x); }

inline std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
  std::uint64_t key = mix(seed) ^ mix(stream + 0x632BE59BD9B4E019ULL);
  for (auto& word : s_) word = splitmix64(key);
}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double RngStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t RngStream::below(std::uint64_t n) {
  require(n > 0, "RngStream::below: n must be positive");
  // Lemire's multiply-shift with rejection keeps the draw unbiased.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(angle);
  has_spare_ = true;
  return r * std::cos(angle);
}

Vector affine_forward(const Matrix& W, const Vector& b, const Vector& z) {
  require(W.cols() == z.size(), "affine_forward: W.cols() != dim(z)");
  require(W.rows() == b.size(), "affine_forward: W.rows() != dim(b)");
  return W * z + b;
}

Vector gaussian_draw(RngStream& rng, int dim) {
  require(dim >= 1, "gaussian_draw: dim must be >= 1");
  Vector out(dim);
  for (int i = 0; i < dim; ++i) out[i] = rng.normal();
  return out;
}

Matrix gaussian_matrix(RngStream& rng, int rows, int cols) {
  Matrix out(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) out(i, j) = rng.normal();
  return out;
}

Matrix orthogonal_init(int rows, int cols, double gain, RngStream& rng) {
  require(rows >= 1 && cols >= 1, "orthogonal_init: rows and cols must be >= 1");
  // QR of a tall gaussian matrix; the sign fix on R's diagonal makes Q
  // uniformly distributed over the orthogonal group.
  const int tall = std::max(rows, cols);
  const int narrow = std::min(rows, cols);
  Matrix a = gaussian_matrix(rng, tall, narrow);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(tall, narrow);
  const Matrix r = qr.matrixQR().topRows(narrow).triangularView<Eigen::Upper>();
  for (int j = 0; j < narrow; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  if (rows < cols) return gain * q.transpose();
  return gain * q;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               double lr) {
  require(params.size() == grads.size(), "adam_step: params/grads size mismatch");
  require(static_cast<Eigen::Index>(params.size()) == state.first_moment.size() &&
              static_cast<Eigen::Index>(params.size()) == state.second_moment.size(),
          "adam_step: optimizer state shaped differently from params");
  require(lr > 0.0, "adam_step: lr must be positive");

  state.step += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[static_cast<Eigen::Index>(i)];
    double& v = state.second_moment[static_cast<Eigen::Index>(i)];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

}  // namespace alac
