#pragma once

// Peak-parameter perturbation, synthetic fluorescence baselines, and
// per-channel Gaussian noise.

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "ramix/errors.hpp"
#include "ramix/rng.hpp"
#include "ramix/spectral.hpp"

namespace ramix {

/// Per-peak perturbation sigmas, all driven by a single noise level.
struct NoiseParams {
  double level = 0.0;
  double amplitude_sigma = 0.0;  // log-normal, multiplies a0
  double width_sigma = 0.0;      // log-normal, multiplies w
  double position_sigma = 0.0;   // Gaussian, added to p0 (cm^-1)

  friend bool operator==(const NoiseParams&, const NoiseParams&) = default;
};

inline NoiseParams derive_noise_params(double level) {
  if (!(level >= 0.0) || !std::isfinite(level)) throw ValidationError("noise level must be finite and >= 0");
  return {level, level, level / 10.0, level / 10.0};
}

/**
 * Independently perturbs every peak:
 *
 *   a0' = a0 * exp(s_amp * z1)
 *   w'  = w  * exp(s_width * z2)
 *   p0' = p0 + s_pos * z3
 *
 * with z1, z2, z3 drawn from `rng` in that order for each peak. The three
 * draws are consumed even at level 0, so the stream position after the call
 * does not depend on the level.
 */
inline SpectrumSkeleton perturb_skeleton(const SpectrumSkeleton& skeleton, const NoiseParams& params,
                                         RngStream& rng) {
  SpectrumSkeleton out = skeleton;
  for (auto& p : out.peaks) {
    const double z1 = rng.normal();
    const double z2 = rng.normal();
    const double z3 = rng.normal();
    p.amplitude *= std::exp(params.amplitude_sigma * z1);
    p.width *= std::exp(params.width_sigma * z2);
    p.position += params.position_sigma * z3;
  }
  return out;
}

/// Settings for the noisy-sine baseline and the channel noise that accompanies it.
struct BaselineParams {
  bool enabled = false;
  double amplitude_min = 0.1;  // intensity units
  double amplitude_max = 0.5;
  double period_min = 600.0;  // channels
  double period_max = 3600.0;
  double sine_noise_sigma = 0.05;
  int degree = 5;
  int iterations = 20;
  double channel_noise_sigma = 0.01;

  /// Defaults with amplitude range and channel noise scaled by `reference`
  /// (the largest pure-spectrum intensity).
  static BaselineParams scaled_defaults(double reference, bool enabled = true) {
    BaselineParams p;
    p.enabled = enabled;
    p.amplitude_min = 0.1 * reference;
    p.amplitude_max = 0.5 * reference;
    p.channel_noise_sigma = 0.01 * reference;
    return p;
  }

  void validate() const {
    if (degree < 1) throw ValidationError("baseline polynomial degree must be >= 1");
    if (iterations < 1) throw ValidationError("baseline fit iterations must be >= 1");
    if (!(amplitude_min >= 0.0) || amplitude_max < amplitude_min)
      throw ValidationError("baseline amplitude range is empty or negative");
    if (!(period_min > 0.0) || period_max < period_min)
      throw ValidationError("baseline period range is empty or non-positive");
    if (!(sine_noise_sigma >= 0.0) || !(channel_noise_sigma >= 0.0))
      throw ValidationError("baseline noise sigmas must be >= 0");
  }

  friend bool operator==(const BaselineParams&, const BaselineParams&) = default;
};

/**
 * Iterative modified polyfit. Each pass least-squares fits a polynomial of
 * the given degree against the channel index, then clips the working signal
 * to that fit from above; the fit of the last pass is returned. The channel
 * index is mapped affinely onto [-1, 1] before building the Vandermonde
 * matrix, which leaves the polynomial space unchanged.
 */
inline Spectrum polynomial_baseline_fit(const Spectrum& signal, int degree, int iterations) {
  const auto n = static_cast<Eigen::Index>(signal.size());
  if (degree < 0 || degree >= n) throw ValidationError("polynomial degree must be < number of channels");
  if (iterations < 1) throw ValidationError("polynomial fit needs at least one iteration");

  Eigen::MatrixXd vander(n, degree + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = n > 1 ? 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0 : 0.0;
    double pw = 1.0;
    for (int d = 0; d <= degree; ++d) {
      vander(i, d) = pw;
      pw *= u;
    }
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(vander);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, degree + 1);

  Eigen::VectorXd work = Eigen::Map<const Eigen::VectorXd>(signal.intensities.data(), n);
  Eigen::VectorXd fit(n);
  for (int it = 0; it < iterations; ++it) {
    fit.noalias() = q * (q.transpose() * work);
    if (it + 1 < iterations) work = work.cwiseMin(fit);
  }
  return Spectrum(std::vector<double>(fit.data(), fit.data() + n));
}

/// Smooth random background: a noisy sine with random amplitude, period and
/// phase, passed through `polynomial_baseline_fit`.
inline Spectrum generate_baseline(const WavenumberGrid& grid, const BaselineParams& params, RngStream& rng) {
  params.validate();
  const double amplitude = rng.uniform(params.amplitude_min, params.amplitude_max);
  const double period = rng.uniform(params.period_min, params.period_max);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Spectrum sine(grid.channels);
  for (std::size_t i = 0; i < grid.channels; ++i) {
    const double noise = params.sine_noise_sigma * rng.normal();
    sine[i] = amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(i) / period + phase) + noise;
  }
  return polynomial_baseline_fit(sine, params.degree, params.iterations);
}

inline Spectrum add_channel_noise(Spectrum spectrum, double sigma, RngStream& rng) {
  if (!(sigma >= 0.0)) throw ValidationError("channel noise sigma must be >= 0");
  for (auto& v : spectrum.intensities) v += sigma * rng.normal();
  return spectrum;
}

}  // namespace ramix
