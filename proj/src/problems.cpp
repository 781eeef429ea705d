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

#include "adpsgd/problems.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace adpsgd {

std::string to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::kQuadratic:
      return "quadratic";
    case ProblemKind::kLogistic:
      return "logistic";
    case ProblemKind::kSmallMlp:
      return "small-mlp";
  }
  return "unknown";
}

double Objective::loss(const Vector& x) const {
  double acc = 0;
  for (std::size_t s = 0; s < num_samples(); ++s) acc += sample_loss(x, s);
  return acc / static_cast<double>(num_samples());
}

Vector Objective::gradient(const Vector& x) const {
  Vector g = Vector::Zero(dimension());
  const double w = 1.0 / static_cast<double>(num_samples());
  for (std::size_t s = 0; s < num_samples(); ++s) add_sample_gradient(x, s, w, g);
  return g;
}

Problem::Problem(ProblemKind kind, std::shared_ptr<const Objective> objective, std::optional<double> optimum_value,
                 std::optional<Vector> optimum)
    : kind_(kind), objective_(std::move(objective)), f_star_(optimum_value), x_star_(std::move(optimum)) {
  if (!objective_) throw ValidationError("problem: null objective");
  if (objective_->num_samples() == 0) throw ValidationError("problem: empty dataset");
}

Vector Problem::shard_gradient(const Vector& x, std::span<const std::size_t> samples) const {
  if (samples.empty()) throw ValidationError("shard_gradient: empty shard");
  Vector g = Vector::Zero(dimension());
  const double w = 1.0 / static_cast<double>(samples.size());
  for (std::size_t s : samples) objective_->add_sample_gradient(x, s, w, g);
  return g;
}

Vector Problem::sample_gradient_of(const Vector& x, std::size_t sample) const {
  Vector g = Vector::Zero(dimension());
  objective_->add_sample_gradient(x, sample, 1.0, g);
  return g;
}

namespace {

// ---------------------------------------------------------------------------
// Quadratic

class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(std::vector<Matrix> a, std::vector<Vector> b) : b_(std::move(b)) {
    if (a.empty() || a.size() != b_.size()) throw ValidationError("quadratic: need one (A_s, b_s) per sample");
    dim_ = static_cast<int>(a.front().cols());
    const bool shared =
        std::all_of(a.begin(), a.end(), [&](const Matrix& m) { return m.rows() == a.front().rows() && m == a.front(); });
    for (std::size_t s = 0; s < a.size(); ++s) {
      if (a[s].cols() != dim_ || a[s].rows() != b_[s].size())
        throw ValidationError("quadratic: inconsistent sample shapes");
    }
    const auto S = static_cast<double>(a.size());
    hessian_ = Matrix::Zero(dim_, dim_);
    linear_ = Vector::Zero(dim_);
    constant_ = 0;
    if (shared) {
      per_sample_hessian_.push_back(a.front().transpose() * a.front());
    }
    for (std::size_t s = 0; s < a.size(); ++s) {
      const Vector c = a[s].transpose() * b_[s];
      per_sample_linear_.push_back(c);
      if (!shared) per_sample_hessian_.push_back(a[s].transpose() * a[s]);
      hessian_ += hessian_of(s) / S;
      linear_ += c / S;
      constant_ += 0.5 * b_[s].squaredNorm() / S;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(hessian_);
    lipschitz_ = eig.eigenvalues().maxCoeff();
  }

  int dimension() const override { return dim_; }
  std::size_t num_samples() const override { return b_.size(); }

  double sample_loss(const Vector& x, std::size_t s) const override {
    const Matrix& h = hessian_of(s);
    return 0.5 * x.dot(h * x) - per_sample_linear_[s].dot(x) + 0.5 * b_[s].squaredNorm();
  }

  void add_sample_gradient(const Vector& x, std::size_t s, double scale, Vector& out) const override {
    out.noalias() += scale * (hessian_of(s) * x);
    out.noalias() -= scale * per_sample_linear_[s];
  }

  double loss(const Vector& x) const override { return 0.5 * x.dot(hessian_ * x) - linear_.dot(x) + constant_; }
  Vector gradient(const Vector& x) const override { return hessian_ * x - linear_; }
  double lipschitz() const override { return lipschitz_; }

  const Matrix& hessian() const { return hessian_; }
  const Vector& linear() const { return linear_; }

 private:
  const Matrix& hessian_of(std::size_t s) const {
    return per_sample_hessian_.size() == 1 ? per_sample_hessian_.front() : per_sample_hessian_[s];
  }

  int dim_ = 0;
  std::vector<Vector> b_;
  std::vector<Matrix> per_sample_hessian_;  // size 1 when every A_s is identical
  std::vector<Vector> per_sample_linear_;
  Matrix hessian_;
  Vector linear_;
  double constant_ = 0;
  double lipschitz_ = 0;
};

Problem quadratic_problem(std::vector<Matrix> a, std::vector<Vector> b) {
  auto obj = std::make_shared<QuadraticObjective>(std::move(a), std::move(b));
  Eigen::LDLT<Matrix> ldlt(obj->hessian());
  std::optional<Vector> x_star;
  std::optional<double> f_star;
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && obj->hessian().determinant() != 0.0) {
    Vector xs = ldlt.solve(obj->linear());
    f_star = obj->loss(xs);
    x_star = std::move(xs);
  }
  return Problem(ProblemKind::kQuadratic, std::move(obj), f_star, x_star);
}

// ---------------------------------------------------------------------------
// Logistic

double log1p_exp(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

class LogisticObjective final : public Objective {
 public:
  LogisticObjective(LabeledDataset data, double l2) : data_(std::move(data)), l2_(l2) {
    if (data_.features.rows() == 0) throw ValidationError("logistic: empty dataset");
    if (data_.features.rows() != data_.labels.size()) throw ValidationError("logistic: label count mismatch");
    if (!data_.features.allFinite()) throw ValidationError("logistic: non-finite features");
    for (Eigen::Index s = 0; s < data_.labels.size(); ++s) {
      if (data_.labels[s] != 1.0 && data_.labels[s] != -1.0)
        throw ValidationError("logistic: labels must be +1 or -1 (row " + std::to_string(s) + ")");
    }
    if (l2_ < 0) throw ValidationError("logistic: l2 must be nonnegative");
    const Matrix gram = data_.features.transpose() * data_.features / static_cast<double>(data_.features.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    lipschitz_ = 0.25 * eig.eigenvalues().maxCoeff() + l2_;
  }

  int dimension() const override { return static_cast<int>(data_.features.cols()); }
  std::size_t num_samples() const override { return static_cast<std::size_t>(data_.features.rows()); }

  double sample_loss(const Vector& w, std::size_t s) const override {
    const double margin = data_.labels[s] * data_.features.row(s).dot(w);
    return log1p_exp(-margin) + 0.5 * l2_ * w.squaredNorm();
  }

  void add_sample_gradient(const Vector& w, std::size_t s, double scale, Vector& out) const override {
    const double y = data_.labels[s];
    const double margin = y * data_.features.row(s).dot(w);
    out.noalias() -= (scale * y * sigmoid(-margin)) * data_.features.row(s).transpose();
    if (l2_ != 0) out.noalias() += (scale * l2_) * w;
  }

  double lipschitz() const override { return lipschitz_; }

 private:
  LabeledDataset data_;
  double l2_;
  double lipschitz_ = 0;
};

// ---------------------------------------------------------------------------
// Small MLP: theta = [W1 (hidden x input, row-major) | b1 | w2 | b2]

class MlpObjective final : public Objective {
 public:
  MlpObjective(int input_dim, int hidden, Matrix inputs, Vector targets, double lipschitz_hint)
      : d_(input_dim), h_(hidden), inputs_(std::move(inputs)), targets_(std::move(targets)),
        lipschitz_(lipschitz_hint) {}

  int dimension() const override { return mlp_parameter_count(d_, h_); }
  std::size_t num_samples() const override { return static_cast<std::size_t>(inputs_.rows()); }

  double sample_loss(const Vector& theta, std::size_t s) const override {
    Vector act;
    const double r = residual(theta, s, act);
    return 0.5 * r * r;
  }

  void add_sample_gradient(const Vector& theta, std::size_t s, double scale, Vector& out) const override {
    Vector act;
    const double r = residual(theta, s, act) * scale;
    const auto w2 = theta.segment(h_ * d_ + h_, h_);
    for (int j = 0; j < h_; ++j) {
      const double da = r * w2[j] * (1.0 - act[j] * act[j]);
      for (int i = 0; i < d_; ++i) out[j * d_ + i] += da * inputs_(s, i);
      out[h_ * d_ + j] += da;
      out[h_ * d_ + h_ + j] += r * act[j];
    }
    out[h_ * d_ + 2 * h_] += r;
  }

  double lipschitz() const override { return lipschitz_; }
  void set_lipschitz(double l) { lipschitz_ = l; }

  double predict(const Vector& theta, std::size_t s) const {
    Vector act;
    return residual(theta, s, act) + targets_[s];
  }

 private:
  double residual(const Vector& theta, std::size_t s, Vector& act) const {
    act.resize(h_);
    double pred = theta[h_ * d_ + 2 * h_];
    for (int j = 0; j < h_; ++j) {
      double z = theta[h_ * d_ + j];
      for (int i = 0; i < d_; ++i) z += theta[j * d_ + i] * inputs_(s, i);
      act[j] = std::tanh(z);
      pred += theta[h_ * d_ + h_ + j] * act[j];
    }
    return pred - targets_[s];
  }

  int d_, h_;
  Matrix inputs_;
  Vector targets_;
  double lipschitz_;
};

// Largest |eigenvalue| of the full-batch Hessian at x via power iteration on
// central-difference Hessian-vector products.
double hessian_power_iteration(const Objective& obj, const Vector& x, Rng& rng) {
  std::normal_distribution<double> normal;
  Vector v(obj.dimension());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  v.normalize();
  const double h = 1e-5;
  double lambda = 0;
  for (int it = 0; it < 100; ++it) {
    const Vector hv = (obj.gradient(x + h * v) - obj.gradient(x - h * v)) / (2 * h);
    const double norm = hv.norm();
    if (norm == 0) return 0;
    const double next = norm;
    v = hv / norm;
    if (std::abs(next - lambda) <= 1e-6 * next) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return lambda;
}

}  // namespace

Problem make_quadratic(const std::vector<Matrix>& a, const std::vector<Vector>& b) { return quadratic_problem(a, b); }

Problem make_quadratic(const QuadraticOptions& o) {
  if (o.dimension < 1) throw ValidationError("make_quadratic: dimension must be positive");
  if (!(o.condition >= 1)) throw ValidationError("make_quadratic: condition must be >= 1");
  if (o.num_samples < 1) throw ValidationError("make_quadratic: need at least one sample");
  if (o.noise < 0 || o.matrix_noise < 0) throw ValidationError("make_quadratic: noise must be nonnegative");

  Rng rng = make_stream(o.seed, 0x9a11);
  std::normal_distribution<double> normal;
  const int n = o.dimension;

  Matrix gauss(n, n);
  for (Eigen::Index i = 0; i < gauss.size(); ++i) gauss.data()[i] = normal(rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(gauss).householderQ();

  Vector sqrt_eig(n);
  for (int i = 0; i < n; ++i) {
    const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
    sqrt_eig[i] = std::sqrt(std::pow(o.condition, -t));  // eigenvalues 1 ... 1/condition
  }
  const Matrix base = sqrt_eig.asDiagonal() * q.transpose();

  Vector x_true(n);
  for (int i = 0; i < n; ++i) x_true[i] = normal(rng);

  std::vector<Matrix> as;
  std::vector<Vector> bs;
  as.reserve(o.num_samples);
  bs.reserve(o.num_samples);
  for (std::size_t s = 0; s < o.num_samples; ++s) {
    Matrix a = base;
    if (o.matrix_noise > 0) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] += o.matrix_noise * normal(rng) / std::sqrt(double(n));
    }
    Vector b = a * x_true;
    if (o.noise > 0) {
      for (int i = 0; i < n; ++i) b[i] += o.noise * normal(rng);
    }
    as.push_back(std::move(a));
    bs.push_back(std::move(b));
  }
  return quadratic_problem(std::move(as), std::move(bs));
}

Problem make_logistic(const LabeledDataset& data, double l2) {
  if (data.features.rows() == 0) throw ValidationError("make_logistic: empty dataset");
  return Problem(ProblemKind::kLogistic, std::make_shared<LogisticObjective>(data, l2));
}

LabeledDataset make_synthetic_classification(int dimension, std::size_t num_samples, double label_noise,
                                             std::uint64_t seed) {
  if (dimension < 1 || num_samples < 1) throw ValidationError("synthetic classification: bad sizes");
  Rng rng = make_stream(seed, 0x1061);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif;
  Vector w(dimension);
  for (int i = 0; i < dimension; ++i) w[i] = normal(rng);
  LabeledDataset data{Matrix(num_samples, dimension), Vector(num_samples)};
  for (std::size_t s = 0; s < num_samples; ++s) {
    for (int i = 0; i < dimension; ++i) data.features(s, i) = normal(rng);
    double y = data.features.row(s).dot(w) >= 0 ? 1.0 : -1.0;
    if (unif(rng) < label_noise) y = -y;
    data.labels[s] = y;
  }
  return data;
}

LabeledDataset load_labeled_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ValidationError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
      }
    }
    if (row.size() < 2) throw ValidationError(path + ":" + std::to_string(lineno) + ": need features and a label");
    if (!rows.empty() && row.size() != rows.front().size())
      throw ValidationError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(path + ": empty dataset");
  const auto cols = static_cast<Eigen::Index>(rows.front().size());
  LabeledDataset data{Matrix(rows.size(), cols - 1), Vector(rows.size())};
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (Eigen::Index c = 0; c + 1 < cols; ++c) data.features(r, c) = rows[r][c];
    data.labels[r] = rows[r].back();
  }
  return data;
}

int mlp_parameter_count(int input_dim, int hidden) { return hidden * input_dim + 2 * hidden + 1; }

Problem make_small_mlp(const MlpOptions& o) {
  if (o.input_dim < 1 || o.hidden < 1 || o.num_samples < 1) throw ValidationError("small-mlp: bad sizes");
  if (mlp_parameter_count(o.input_dim, o.hidden) > 100)
    throw ValidationError("small-mlp: at most 100 parameters allowed");
  Rng rng = make_stream(o.seed, 0x31f);
  std::normal_distribution<double> normal;

  const int p = mlp_parameter_count(o.input_dim, o.hidden);
  Vector teacher(p);
  for (int i = 0; i < p; ++i) teacher[i] = normal(rng);
  Matrix inputs(o.num_samples, o.input_dim);
  for (Eigen::Index i = 0; i < inputs.size(); ++i) inputs.data()[i] = normal(rng);

  const MlpObjective teacher_net(o.input_dim, o.hidden, inputs, Vector::Zero(o.num_samples), 0.0);
  Vector targets(o.num_samples);
  for (std::size_t s = 0; s < o.num_samples; ++s) targets[s] = teacher_net.predict(teacher, s) + o.noise * normal(rng);
  auto final_obj = std::make_shared<MlpObjective>(o.input_dim, o.hidden, std::move(inputs), std::move(targets), 0.0);

  // Heuristic L: max curvature seen at a few random points.
  double l = 0;
  for (int probe = 0; probe < 4; ++probe) {
    Vector x(p);
    for (int i = 0; i < p; ++i) x[i] = normal(rng);
    l = std::max(l, hessian_power_iteration(*final_obj, x, rng));
  }
  final_obj->set_lipschitz(l);
  return Problem(ProblemKind::kSmallMlp, std::move(final_obj));
}

std::vector<std::size_t> largest_remainder_sizes(std::size_t total, const Vector& p) {
  std::vector<std::size_t> sizes(p.size());
  std::vector<std::pair<double, int>> remainders;
  std::size_t assigned = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double quota = static_cast<double>(total) * p[i];
    sizes[i] = static_cast<std::size_t>(std::floor(quota));
    assigned += sizes[i];
    remainders.emplace_back(quota - std::floor(quota), static_cast<int>(i));
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r, ++assigned) {
    ++sizes[remainders[r].second];
  }
  return sizes;
}

DataPartition partition_data(const Problem& problem, const Vector& p, PartitionStrategy strategy,
                             std::uint64_t shuffle_seed) {
  if (p.size() < 1) throw ValidationError("partition_data: empty probability vector");
  if (!p.allFinite() || (p.array() < 0).any() || std::abs(p.sum() - 1.0) > 1e-9)
    throw ValidationError("partition_data: p must be a probability vector");
  const std::size_t total = problem.num_samples();
  DataPartition part;
  part.strategy = strategy;
  part.weights = p;
  if (strategy == PartitionStrategy::kShared) {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), std::size_t{0});
    part.shards.assign(p.size(), all);
    return part;
  }

  const auto sizes = largest_remainder_sizes(total, p);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0 && sizes[i] == 0) {
      throw ValidationError("partition_data: insufficient data, worker " + std::to_string(i) +
                            " has positive weight but an empty shard (" + std::to_string(total) + " samples)");
    }
  }
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_stream(shuffle_seed, 0x5417);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t offset = 0;
  for (std::size_t size : sizes) {
    part.shards.emplace_back(order.begin() + offset, order.begin() + offset + size);
    offset += size;
  }
  return part;
}

void sample_gradient_into(const Problem& problem, const DataPartition& partition, int worker, const Vector& model,
                          int batch, Rng& rng, Vector& out) {
  if (batch < 1) throw ValidationError("sample_gradient: batch size must be >= 1");
  if (worker < 0 || worker >= static_cast<int>(partition.shards.size()))
    throw std::out_of_range("sample_gradient: worker index out of range");
  const auto& shard = partition.shards[worker];
  if (shard.empty()) throw ValidationError("sample_gradient: worker " + std::to_string(worker) + " has an empty shard");
  out.setZero(problem.dimension());
  std::uniform_int_distribution<std::size_t> pick(0, shard.size() - 1);
  for (int m = 0; m < batch; ++m) {
    const std::size_t s = shard.size() == 1 ? shard.front() : shard[pick(rng)];
    problem.objective().add_sample_gradient(model, s, 1.0, out);
  }
}

Vector sample_gradient(const Problem& problem, const DataPartition& partition, int worker, const Vector& model,
                       int batch, Rng& rng) {
  Vector out;
  sample_gradient_into(problem, partition, worker, model, batch, rng, out);
  return out;
}

VarianceEstimate estimate_variances(const Problem& problem, const DataPartition& partition,
                                    const std::vector<Vector>& probe_models, int draws, Rng& rng) {
  if (draws < 100) throw ValidationError("estimate_variances: need at least 100 draws");
  if (probe_models.empty()) throw ValidationError("estimate_variances: need at least one probe model");
  VarianceEstimate est;
  const auto workers = static_cast<int>(partition.shards.size());
  for (const Vector& x : probe_models) {
    const Vector full = problem.full_gradient(x);
    double across = 0;
    for (int i = 0; i < workers; ++i) {
      const double pi = partition.weights[i];
      if (pi == 0 || partition.shards[i].empty()) continue;
      const Vector local = problem.shard_gradient(x, partition.shards[i]);
      across += pi * (local - full).squaredNorm();

      double within = 0;
      Vector g;
      for (int d = 0; d < draws; ++d) {
        sample_gradient_into(problem, partition, i, x, 1, rng, g);
        within += (g - local).squaredNorm();
      }
      est.sigma_sq = std::max(est.sigma_sq, within / draws);
      est.sample_points += static_cast<std::size_t>(draws);
    }
    est.varsigma_sq = std::max(est.varsigma_sq, across);
  }
  return est;
}

VarianceEstimate exact_variances(const Problem& problem, const DataPartition& partition, const Vector& model) {
  VarianceEstimate est;
  const Vector full = problem.full_gradient(model);
  for (std::size_t i = 0; i < partition.shards.size(); ++i) {
    const auto& shard = partition.shards[i];
    if (partition.weights[static_cast<Eigen::Index>(i)] == 0 || shard.empty()) continue;
    const Vector local = problem.shard_gradient(model, shard);
    est.varsigma_sq += partition.weights[static_cast<Eigen::Index>(i)] * (local - full).squaredNorm();
    double within = 0;
    for (std::size_t s : shard) within += (problem.sample_gradient_of(model, s) - local).squaredNorm();
    est.sigma_sq = std::max(est.sigma_sq, within / static_cast<double>(shard.size()));
    est.sample_points += shard.size();
  }
  return est;
}

double estimate_lipschitz(const Problem& problem) { return problem.objective().lipschitz(); }

}  // namespace adpsgd
