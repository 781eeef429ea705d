/* Copyright 2026 The ADPSGD Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Convergence-condition constants and step-size prescriptions for AD-PSGD.
// Everything is templated on the scalar so the same expressions can be
// re-evaluated in extended precision.

#include <cmath>
#include <limits>
#include <cstdint>
#include <optional>
#include <string>

#include "adpsgd/types.hpp"

namespace adpsgd::theory {

class DomainError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

template <typename Scalar = double>
struct TheoryInputs {
  int n = 1;           // workers
  int M = 1;           // batch size
  Scalar L = 1;        // Lipschitz constant of the gradients
  int T = 0;           // staleness cap
  Scalar rho = 0;      // spectral gap of E[W^T W]
  Scalar sigma_sq = 0;
  Scalar varsigma_sq = 0;
  Scalar gamma = 0;
  std::int64_t K = 1;  // iteration budget

  void validate() const {
    if (n < 1 || M < 1 || K < 1) throw DomainError("theory inputs: n, M and K must be >= 1");
    if (T < 0) throw DomainError("theory inputs: T must be >= 0");
    if (!(rho >= 0) || !(rho < 1)) throw DomainError("theory inputs: rho must lie in [0, 1)");
    if (!(L >= 0) || !(sigma_sq >= 0) || !(varsigma_sq >= 0) || !(gamma >= 0))
      throw DomainError("theory inputs: L, sigma^2, varsigma^2 and gamma must be nonnegative");
  }
};

template <typename Scalar>
struct Constants {
  Scalar C1 = 0;
  Scalar C2 = 0;
  Scalar C3 = 0;
  bool valid = false;      // C1 > 0 and C2 >= 0 and C3 <= 1
  std::string diagnostic;  // empty when valid
};

/// 1/(1-rho) + 2 sqrt(rho) / (1 - sqrt(rho))^2, i.e. bar_rho without the (n-1)/n factor.
template <typename Scalar>
Scalar mixing_bracket(Scalar rho) {
  using std::sqrt;
  if (!(rho >= 0) || !(rho < 1)) throw DomainError("rho must lie in [0, 1)");
  const Scalar s = sqrt(rho);
  return Scalar(1) / (Scalar(1) - rho) + Scalar(2) * s / ((Scalar(1) - s) * (Scalar(1) - s));
}

template <typename Scalar>
Scalar bar_rho(Scalar rho, int n) {
  if (n < 1) throw DomainError("bar_rho: n must be >= 1");
  return Scalar(n - 1) / Scalar(n) * mixing_bracket(rho);
}

template <typename Scalar>
Constants<Scalar> constants(const TheoryInputs<Scalar>& in) {
  in.validate();
  const Scalar n = in.n, M = in.M, L = in.L, T = in.T, g = in.gamma;
  const Scalar rb = bar_rho(in.rho, in.n);
  const Scalar lag = T * (n - 1) / n + rb;

  Constants<Scalar> c;
  c.C1 = Scalar(1) - Scalar(24) * M * M * L * L * g * g * lag;
  if (!(c.C1 > 0)) {
    c.C2 = std::numeric_limits<Scalar>::quiet_NaN();
    c.C3 = std::numeric_limits<Scalar>::quiet_NaN();
    c.valid = false;
    c.diagnostic = "C1 <= 0: C2 and C3 are undefined (gamma too large for this topology/staleness)";
    return c;
  }
  const Scalar inner2 = Scalar(6) * g * g * L * L * L * M * M / (n * n) + g * M / n * L * L +
                        Scalar(12) * M * M * M * L * L * L * L * T * T * g * g * g / (n * n * n);
  c.C2 = g * M / (Scalar(2) * n) - g * g * L * M * M / (n * n) -
         Scalar(2) * M * M * M * L * L * T * T * g * g * g / (n * n * n) -
         inner2 * Scalar(4) * M * M * g * g * lag / c.C1;
  const Scalar inner3 = Scalar(6) * g * g * L * L * M * M + g * n * M * L +
                        Scalar(12) * M * M * M * L * L * L * T * T * g * g * g / n;
  c.C3 = Scalar(0.5) + Scalar(2) / c.C1 * inner3 * rb + L * T * T * g * M / n;

  const bool c2_ok = c.C2 >= 0;
  const bool c3_ok = c.C3 <= 1;
  c.valid = c2_ok && c3_ok;
  if (!c2_ok) c.diagnostic = "C2 < 0";
  if (!c3_ok) c.diagnostic += std::string(c.diagnostic.empty() ? "" : "; ") + "C3 > 1";
  return c;
}

/// gamma = n / (10 M L + sqrt(sigma^2 + 6 M varsigma^2) sqrt(K M)).
template <typename Scalar>
Scalar corollary_gamma(int n, int M, Scalar L, Scalar sigma_sq, Scalar varsigma_sq, std::int64_t K) {
  using std::sqrt;
  if (K < 1) throw DomainError("corollary_gamma: K must be >= 1");
  if (!(L > 0)) throw DomainError("corollary_gamma: L must be positive");
  const Scalar noise = sigma_sq + Scalar(6) * Scalar(M) * varsigma_sq;
  return Scalar(n) / (Scalar(10) * Scalar(M) * L + sqrt(noise) * sqrt(Scalar(K) * Scalar(M)));
}

/// Lower bound on K under which the corollary step size satisfies the theorem's conditions.
/// Empty when sigma^2 + 6 M varsigma^2 == 0 (the corollary degenerates to gamma = n / (10 M L)).
template <typename Scalar>
std::optional<Scalar> min_iterations(const TheoryInputs<Scalar>& in) {
  using std::pow;
  using std::sqrt;
  in.validate();
  const Scalar n = in.n, M = in.M, L = in.L, T = in.T;
  const Scalar noise = in.sigma_sq + Scalar(6) * M * in.varsigma_sq;
  if (!(noise > 0)) return std::nullopt;

  const Scalar rb = bar_rho(in.rho, in.n);
  const Scalar t1 = Scalar(192) * (T * (n - 1) / n + rb);
  const Scalar t2 = Scalar(64) * T * T * T * T / (n * n);
  const Scalar t3 = Scalar(1024) * n * n * rb * rb;
  Scalar t4 = 0;
  if (in.n > 1) {
    // bar_rho * n / (n - 1) is the bare mixing bracket.
    const Scalar lead = Scalar(8) * sqrt(Scalar(6)) * pow(T, Scalar(2) / Scalar(3)) + Scalar(8);
    t4 = lead * lead * pow(T + mixing_bracket(in.rho), Scalar(2) / Scalar(3)) * sqrt(n - 1) /
         pow(n, Scalar(1) / Scalar(6));
  }
  Scalar m = t1;
  if (t2 > m) m = t2;
  if (t3 > m) m = t3;
  if (t4 > m) m = t4;
  return M * L * L * n * n / noise * m;
}

class InvalidConstantsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Right-hand side of the main convergence bound on (1/K) sum_k E||grad f(avg model)||^2.
/// Throws InvalidConstantsError when the theorem's conditions do not hold.
template <typename Scalar>
Scalar theorem_bound(const TheoryInputs<Scalar>& in, Scalar f0_minus_fstar) {
  const Constants<Scalar> c = constants(in);
  if (!c.valid) throw InvalidConstantsError("theorem conditions not met: " + c.diagnostic);
  if (!(in.gamma > 0)) throw InvalidConstantsError("theorem bound needs gamma > 0");
  const Scalar n = in.n, M = in.M;
  return Scalar(2) * f0_minus_fstar * n / (in.gamma * Scalar(in.K) * M) +
         Scalar(2) * in.gamma * in.L * (in.sigma_sq + Scalar(6) * M * in.varsigma_sq) / n;
}

struct TheoryReport {
  TheoryInputs<double> inputs;
  double bar_rho = 0;
  double C1 = 0, C2 = 0, C3 = 0;
  bool valid = false;
  std::string diagnostic;
  double gamma_corollary = 0;
  std::optional<double> K_min;
  std::optional<double> bound_rhs;  // only when valid and f0 - f* is known
};

inline TheoryReport make_report(const TheoryInputs<double>& in, std::optional<double> f0_minus_fstar) {
  TheoryReport r;
  r.inputs = in;
  r.bar_rho = bar_rho(in.rho, in.n);
  const auto c = constants(in);
  r.C1 = c.C1;
  r.C2 = c.C2;
  r.C3 = c.C3;
  r.valid = c.valid;
  r.diagnostic = c.diagnostic;
  if (in.L > 0) r.gamma_corollary = corollary_gamma(in.n, in.M, in.L, in.sigma_sq, in.varsigma_sq, in.K);
  r.K_min = min_iterations(in);
  if (c.valid && f0_minus_fstar) r.bound_rhs = theorem_bound(in, *f0_minus_fstar);
  return r;
}

std::string format_report_text(const TheoryReport& report);
std::string format_report_json(const TheoryReport& report);

}  // namespace adpsgd::theory
