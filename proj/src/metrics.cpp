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

#include "adpsgd/metrics.hpp"

#include <charconv>
#include <cmath>
#include <ostream>
#include <sstream>

namespace adpsgd {

MetricsRecord make_record(const Problem& problem, const ModelMatrix& models, const Vector& p, std::int64_t k,
                          double simulated_time, int max_staleness, const std::vector<std::int64_t>& updates) {
  MetricsRecord r;
  const Vector avg = average_model(models);
  r.k = k;
  r.simulated_time = simulated_time;
  r.loss_avg = problem.loss(avg);
  r.grad_norm_sq_avg = problem.full_gradient(avg).squaredNorm();
  r.consensus_mk = consensus_distance(models, p);
  r.max_staleness = max_staleness;
  r.worker_updates = updates;
  return r;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string metrics_csv_header(int workers) {
  std::string h = "k,simulated_time,loss_avg_model,grad_norm_sq_avg_model,consensus_Mk,max_staleness";
  for (int i = 0; i < workers; ++i) h += ",worker_updates_" + std::to_string(i);
  return h;
}

void write_metrics_csv(std::ostream& out, const MetricsSeries& series, int workers) {
  out << metrics_csv_header(workers) << '\n';
  for (const auto& r : series.records) {
    out << r.k << ',' << format_double(r.simulated_time) << ',' << format_double(r.loss_avg) << ','
        << format_double(r.grad_norm_sq_avg) << ',' << format_double(r.consensus_mk) << ',' << r.max_staleness;
    for (int i = 0; i < workers; ++i) {
      out << ',' << (i < static_cast<int>(r.worker_updates.size()) ? r.worker_updates[i] : 0);
    }
    out << '\n';
  }
}

std::string metrics_to_csv(const MetricsSeries& series, int workers) {
  std::ostringstream os;
  write_metrics_csv(os, series, workers);
  return os.str();
}

}  // namespace adpsgd
