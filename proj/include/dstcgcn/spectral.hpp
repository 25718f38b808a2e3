#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dstcgcn/errors.hpp"

// Real-input discrete Fourier transforms with low-mode truncation.
//
// Convention: the forward transform is unnormalized, the inverse carries
// 1/n. Truncation keeps the lowest `modes` coefficients; dropped modes are
// treated as zero by the inverse.
namespace dstcgcn::spectral {

using Index = Eigen::Index;

template <typename Scalar>
using RealVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using ComplexVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

template <typename Scalar>
struct Spectrum {
  ComplexVector<Scalar> modes;
  Index source_len = 0;

  Index mode_count() const { return modes.size(); }
};

// Largest admissible mode count for a real signal of length n.
constexpr Index max_modes(Index n) { return n / 2 + 1; }

constexpr bool is_power_of_two(Index n) { return n > 0 && (n & (n - 1)) == 0; }

namespace detail {

// In-place iterative radix-2 transform; sign = -1 forward, +1 inverse
// (unnormalized both ways).
template <typename Scalar>
void radix2(ComplexVector<Scalar>& a, int sign) {
  const Index n = a.size();
  for (Index i = 1, j = 0; i < n; ++i) {
    Index bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  std::vector<std::complex<Scalar>> twiddle(static_cast<std::size_t>(n / 2));
  for (Index k = 0; k < n / 2; ++k) {
    const Scalar angle = sign * 2 * std::numbers::pi_v<Scalar> * Scalar(k) / Scalar(n);
    twiddle[static_cast<std::size_t>(k)] = std::polar(Scalar(1), angle);
  }
  for (Index len = 2; len <= n; len <<= 1) {
    const Index half = len / 2;
    const Index step = n / len;
    for (Index i = 0; i < n; i += len) {
      for (Index j = 0; j < half; ++j) {
        const std::complex<Scalar> u = a[i + j];
        const std::complex<Scalar> v = a[i + j + half] * twiddle[static_cast<std::size_t>(j * step)];
        a[i + j] = u + v;
        a[i + j + half] = u - v;
      }
    }
  }
}

// Angle of e^{sign 2 pi i k l / n}, reduced so exact multiples stay exact.
template <typename Scalar>
Scalar reduced_angle(Index k, Index l, Index n, int sign) {
  return sign * 2 * std::numbers::pi_v<Scalar> * Scalar((k * l) % n) / Scalar(n);
}

}  // namespace detail

// First `modes` DFT coefficients of a real vector.
template <typename Derived>
Spectrum<typename Derived::Scalar> rfft(const Eigen::MatrixBase<Derived>& x, Index modes) {
  using Scalar = typename Derived::Scalar;
  const Index n = x.size();
  if (n < 1) throw ContractError("rfft: empty input");
  if (modes < 1 || modes > max_modes(n)) {
    throw ContractError("rfft: mode count " + std::to_string(modes) + " outside [1, " +
                        std::to_string(max_modes(n)) + "] for length " + std::to_string(n));
  }
  Spectrum<Scalar> out;
  out.source_len = n;
  if (is_power_of_two(n)) {
    ComplexVector<Scalar> full = x.template cast<std::complex<Scalar>>();
    detail::radix2(full, -1);
    out.modes = full.head(modes);
  } else {
    out.modes.resize(modes);
    for (Index k = 0; k < modes; ++k) {
      std::complex<Scalar> acc(0, 0);
      for (Index l = 0; l < n; ++l) {
        acc += x[l] * std::polar(Scalar(1), detail::reduced_angle<Scalar>(k, l, n, -1));
      }
      out.modes[k] = acc;
    }
  }
  out.modes[0].imag(0);
  if (n % 2 == 0 && modes == max_modes(n)) out.modes[n / 2].imag(0);
  return out;
}

// Real inverse of a (possibly truncated) half spectrum, scaled by 1/n.
template <typename Scalar>
RealVector<Scalar> irfft(const Spectrum<Scalar>& s, Index out_len) {
  if (s.source_len != out_len) {
    throw ContractError("irfft: spectrum of length " + std::to_string(s.source_len) +
                        " cannot be inverted to length " + std::to_string(out_len));
  }
  const Index n = out_len;
  const Index m = s.mode_count();
  if (m < 1 || m > max_modes(n)) throw ContractError("irfft: invalid mode count");
  RealVector<Scalar> out(n);
  if (is_power_of_two(n)) {
    ComplexVector<Scalar> full = ComplexVector<Scalar>::Zero(n);
    for (Index k = 0; k < m; ++k) {
      full[k] = s.modes[k];
      if (k > 0 && n - k != k) full[n - k] = std::conj(s.modes[k]);
    }
    detail::radix2(full, +1);
    out = full.real() / Scalar(n);
  } else {
    for (Index l = 0; l < n; ++l) {
      Scalar acc = s.modes[0].real();
      for (Index k = 1; k < m; ++k) {
        const Scalar weight = (2 * k == n) ? Scalar(1) : Scalar(2);
        acc += weight *
               (s.modes[k] * std::polar(Scalar(1), detail::reduced_angle<Scalar>(k, l, n, +1))).real();
      }
      out[l] = acc / Scalar(n);
    }
  }
  return out;
}

// Elementwise a * conj(b).
template <typename Scalar>
Spectrum<Scalar> hadamard_conj(const Spectrum<Scalar>& a, const Spectrum<Scalar>& b) {
  if (a.mode_count() != b.mode_count() || a.source_len != b.source_len) {
    throw ContractError("hadamard_conj: spectra have " + std::to_string(a.mode_count()) + " and " +
                        std::to_string(b.mode_count()) + " modes");
  }
  return {a.modes.cwiseProduct(b.modes.conjugate()), a.source_len};
}

// Elementwise a * b.
template <typename Scalar>
Spectrum<Scalar> hadamard(const Spectrum<Scalar>& a, const Spectrum<Scalar>& b) {
  if (a.mode_count() != b.mode_count() || a.source_len != b.source_len) {
    throw ContractError("hadamard: mode count mismatch");
  }
  return {a.modes.cwiseProduct(b.modes), a.source_len};
}

}  // namespace dstcgcn::spectral
