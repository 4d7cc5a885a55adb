#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace oracle {

namespace {

int find(std::vector<int>& parent, int x) {
  while (parent[x] != x) x = parent[x] = parent[parent[x]];
  return x;
}

// Flows on a spanning tree by repeatedly peeling leaves.
bool tree_flows(int n, int m, const std::vector<std::pair<int, int>>& edges, const Vector& p,
                const Vector& q, std::vector<double>& flow) {
  const int nodes = n + m;
  std::vector<std::vector<int>> incident(nodes);
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    incident[edges[e].first].push_back(e);
    incident[n + edges[e].second].push_back(e);
  }
  std::vector<long double> supply(nodes);
  for (int i = 0; i < n; ++i) supply[i] = p[i];
  for (int j = 0; j < m; ++j) supply[n + j] = q[j];
  std::vector<int> degree(nodes);
  for (int v = 0; v < nodes; ++v) degree[v] = static_cast<int>(incident[v].size());
  std::vector<bool> used(edges.size(), false);
  flow.assign(edges.size(), 0.0);
  for (std::size_t round = 0; round < edges.size(); ++round) {
    int leaf = -1;
    for (int v = 0; v < nodes && leaf < 0; ++v) {
      if (degree[v] == 1) leaf = v;
    }
    if (leaf < 0) return false;
    int e = -1;
    for (const int cand : incident[leaf]) {
      if (!used[cand]) e = cand;
    }
    const long double f = supply[leaf];
    flow[e] = static_cast<double>(f);
    used[e] = true;
    const int other = leaf < n ? n + edges[e].second : edges[e].first;
    supply[other] -= f;
    degree[leaf] = 0;
    --degree[other];
  }
  return true;
}

}  // namespace

double lp_vertex_min(const Matrix& cost, const Vector& p, const Vector& q) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const int k = n + m - 1;
  std::vector<std::pair<int, int>> all;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) all.emplace_back(i, j);
  }
  std::vector<int> pick(all.size(), 0);
  std::fill(pick.end() - k, pick.end(), 1);
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> flow;
  do {
    std::vector<std::pair<int, int>> edges;
    std::vector<int> parent(n + m);
    std::iota(parent.begin(), parent.end(), 0);
    bool acyclic = true;
    for (std::size_t e = 0; e < all.size() && acyclic; ++e) {
      if (!pick[e]) continue;
      const int a = find(parent, all[e].first);
      const int b = find(parent, n + all[e].second);
      if (a == b) acyclic = false;
      parent[a] = b;
      edges.push_back(all[e]);
    }
    if (!acyclic || !tree_flows(n, m, edges, p, q, flow)) continue;
    double value = 0.0;
    bool feasible = true;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      if (flow[e] < -1e-12) feasible = false;
      value += flow[e] * cost(edges[e].first, edges[e].second);
    }
    if (feasible) best = std::min(best, value);
  } while (std::next_permutation(pick.begin(), pick.end()));
  return best;
}

Matrix naive_sinkhorn(const Matrix& cost, const Vector& a, const Vector& b, double epsilon,
                      int iterations) {
  const auto n = cost.rows();
  const auto m = cost.cols();
  std::vector<long double> u(n, 1.0L), v(m, 1.0L);
  auto kernel = [&](Eigen::Index i, Eigen::Index j) {
    return std::exp(-static_cast<long double>(cost(i, j)) / epsilon);
  };
  for (int t = 0; t < iterations; ++t) {
    for (Eigen::Index j = 0; j < m; ++j) {
      long double s = 0;
      for (Eigen::Index i = 0; i < n; ++i) s += u[i] * kernel(i, j);
      v[j] = b[j] / s;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      long double s = 0;
      for (Eigen::Index j = 0; j < m; ++j) s += kernel(i, j) * v[j];
      u[i] = a[i] / s;
    }
  }
  Matrix plan(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) plan(i, j) = static_cast<double>(u[i] * kernel(i, j) * v[j]);
  }
  return plan;
}

Vector attention_at(const std::vector<sinkformer::AttentionHeadParams>& heads, const Matrix& atoms,
                    const Vector& weights, const Vector& x) {
  Vector out = x;
  for (const auto& h : heads) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(h.query.rows()));
    const Vector qx = h.query * x;
    double z = 0.0;
    Vector mixed = Vector::Zero(h.value.rows());
    for (Eigen::Index j = 0; j < atoms.rows(); ++j) {
      const Vector y = atoms.row(j).transpose();
      double s = 0.0;
      for (Eigen::Index r = 0; r < qx.size(); ++r) s += qx[r] * (h.key.row(r).dot(y));
      const double w = weights[j] * std::exp(s * scale);
      z += w;
      mixed += w * (h.value * y);
    }
    out += h.output * (mixed / z);
  }
  return out;
}

Vector mlp_at(const sinkformer::MlpParams& mlp, const Vector& z) {
  Vector hidden(mlp.w1.rows());
  for (Eigen::Index r = 0; r < mlp.w1.rows(); ++r) {
    double pre = mlp.b1[r];
    for (Eigen::Index c = 0; c < mlp.w1.cols(); ++c) pre += mlp.w1(r, c) * z[c];
    hidden[r] = pre / (1.0 + std::exp(-pre));
  }
  Vector out = mlp.b2;
  for (Eigen::Index r = 0; r < mlp.w2.rows(); ++r) {
    for (Eigen::Index c = 0; c < mlp.w2.cols(); ++c) out[r] += mlp.w2(r, c) * hidden[c];
  }
  if (mlp.residual) out += z;
  return out;
}

Vector encoder_at(const sinkformer::EncoderParams& enc, const Matrix& atoms, const Vector& weights,
                  const Vector& x) {
  Matrix current = atoms;
  Vector point = x;
  for (const auto& layer : enc.layers) {
    Matrix next(current.rows(), layer.mlp.w2.rows());
    for (Eigen::Index i = 0; i < current.rows(); ++i) {
      next.row(i) = mlp_at(layer.mlp, attention_at(layer.heads, current, weights, current.row(i).transpose()))
                        .transpose();
    }
    point = mlp_at(layer.mlp, attention_at(layer.heads, current, weights, point));
    current = next;
  }
  return point;
}

std::vector<double> central_differences(std::vector<double*> theta, const std::function<double()>& f,
                                        double h) {
  std::vector<double> out;
  out.reserve(theta.size());
  for (double* t : theta) {
    const double saved = *t;
    *t = saved + h;
    const double up = f();
    *t = saved - h;
    const double down = f();
    *t = saved;
    out.push_back((up - down) / (2.0 * h));
  }
  return out;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
