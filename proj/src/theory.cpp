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

#include "adpsgd/theory.hpp"

#include <cmath>
#include <string_view>

#include <fmt/format.h>
#include "json.hpp"

namespace adpsgd::theory {

namespace {

nlohmann::ordered_json number_or_null(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

}  // namespace

std::string format_report_text(const TheoryReport& r) {
  const auto& in = r.inputs;
  std::string out;
  auto line = [&out](std::string_view label, const std::string& value) {
    out += fmt::format("{:<26}{}\n", label, value);
  };
  auto num = [](double v) { return fmt::format("{:.6g}", v); };
  line("n", std::to_string(in.n));
  line("M", std::to_string(in.M));
  line("L", num(in.L));
  line("T", std::to_string(in.T));
  line("rho", num(in.rho));
  line("sigma^2", num(in.sigma_sq));
  line("varsigma^2", num(in.varsigma_sq));
  line("gamma", num(in.gamma));
  line("K", std::to_string(in.K));
  line("bar_rho", num(r.bar_rho));
  line("C1", num(r.C1));
  line("C2", num(r.C2));
  line("C3", num(r.C3));
  line("conditions", r.valid ? "satisfied" : "violated (" + r.diagnostic + ")");
  line("corollary gamma", num(r.gamma_corollary));
  line("minimum K", r.K_min ? num(*r.K_min) : "n/a (zero gradient noise)");
  line("bound", r.bound_rhs ? num(*r.bound_rhs) : "n/a");
  return out;
}

std::string format_report_json(const TheoryReport& r) {
  const auto& in = r.inputs;
  nlohmann::ordered_json j;
  j["inputs"] = {{"n", in.n},         {"M", in.M},
                 {"L", in.L},         {"T", in.T},
                 {"rho", in.rho},     {"sigma_sq", in.sigma_sq},
                 {"varsigma_sq", in.varsigma_sq}, {"gamma", in.gamma},
                 {"K", in.K}};
  j["bar_rho"] = number_or_null(r.bar_rho);
  j["C1"] = number_or_null(r.C1);
  j["C2"] = number_or_null(r.C2);
  j["C3"] = number_or_null(r.C3);
  j["valid"] = r.valid;
  j["diagnostic"] = r.diagnostic;
  j["gamma_corollary"] = number_or_null(r.gamma_corollary);
  j["K_min"] = r.K_min ? number_or_null(*r.K_min) : nlohmann::ordered_json(nullptr);
  j["bound_rhs"] = r.bound_rhs ? number_or_null(*r.bound_rhs) : nlohmann::ordered_json(nullptr);
  return j.dump(2);
}

}  // namespace adpsgd::theory
