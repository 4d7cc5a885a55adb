#include "sinkformer/error.hpp"
#include "sinkformer/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace sinkformer {

GroundMetric euclidean_metric() {
  return {[](const Point& x, const Point& y) { return (x - y).norm(); }, true};
}

namespace {

using Units = std::int64_t;

// Floors w * scale and hands the leftover units to the largest remainders
// (ties broken by index), so the result sums to exactly `scale`.
std::vector<Units> quantize(const Vector& weights, Units scale) {
  const double total = weights.sum();
  const auto n = static_cast<std::size_t>(weights.size());
  std::vector<Units> units(n);
  std::vector<double> remainder(n);
  Units assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = weights[static_cast<Eigen::Index>(i)] / total * static_cast<double>(scale);
    units[i] = static_cast<Units>(std::floor(exact));
    remainder[i] = exact - static_cast<double>(units[i]);
    assigned += units[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return remainder[l] > remainder[r]; });
  Units leftover = scale - assigned;
  for (std::size_t k = 0; leftover > 0; k = (k + 1) % n, --leftover) ++units[order[k]];
  // Overshoot: take units back from the smallest remainders.
  for (std::size_t k = n; leftover < 0 && k-- > 0;) {
    if (units[order[k]] > 0) {
      --units[order[k]];
      ++leftover;
    }
  }
  return units;
}

double total_variation(const Vector& w, const std::vector<Units>& units, Units scale) {
  double acc = 0.0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    acc += std::abs(w[static_cast<Eigen::Index>(i)] / w.sum() -
                    static_cast<double>(units[i]) / static_cast<double>(scale));
  }
  return 0.5 * acc;
}

// Successive shortest paths on the complete bipartite transportation network.
// Supply nodes u_i, demand nodes v_j and a super sink; forward arcs u_i -> v_j
// are uncapacitated, backward arcs exist where flow is positive. Reduced costs
// c + pi(x) - pi(y) stay nonnegative, so each search is a dense Dijkstra.
class TransportNetwork {
 public:
  TransportNetwork(const Matrix& cost, std::vector<Units> supply, std::vector<Units> demand)
      : cost_(cost),
        n_(cost.rows()),
        m_(cost.cols()),
        supply_(std::move(supply)),
        demand_(std::move(demand)),
        flow_(static_cast<std::size_t>(n_ * m_), 0),
        pot_u_(static_cast<std::size_t>(n_), 0.0),
        pot_v_(static_cast<std::size_t>(m_), 0.0) {
    for (Eigen::Index j = 0; j < m_; ++j) pot_v_[idx(j)] = cost_.col(j).minCoeff();
    pot_sink_ = *std::min_element(pot_v_.begin(), pot_v_.end());
  }

  void solve() {
    Units remaining = std::accumulate(supply_.begin(), supply_.end(), Units{0});
    while (remaining > 0) remaining -= augment();
  }

  Units flow(Eigen::Index i, Eigen::Index j) const { return flow_[idx(i * m_ + j)]; }
  double supply_dual(Eigen::Index i) const { return -pot_u_[idx(i)]; }
  double demand_dual(Eigen::Index j) const { return pot_v_[idx(j)]; }

 private:
  static std::size_t idx(Eigen::Index k) { return static_cast<std::size_t>(k); }

  double reduced_forward(Eigen::Index i, Eigen::Index j) const {
    return std::max(0.0, cost_(i, j) + pot_u_[idx(i)] - pot_v_[idx(j)]);
  }
  double reduced_backward(Eigen::Index i, Eigen::Index j) const {
    return std::max(0.0, -cost_(i, j) - pot_u_[idx(i)] + pot_v_[idx(j)]);
  }

  Units augment() {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist_u(idx(n_), kInf), dist_v(idx(m_), kInf);
    std::vector<char> done_u(idx(n_), 0), done_v(idx(m_), 0);
    std::vector<Eigen::Index> parent_u(idx(n_), -1), parent_v(idx(m_), -1);
    double dist_sink = kInf;
    Eigen::Index sink_parent = -1;
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (supply_[idx(i)] > 0) dist_u[idx(i)] = 0.0;
    }

    while (true) {
      double best = dist_sink;
      Eigen::Index pick = -1;
      bool pick_is_u = false;
      for (Eigen::Index i = 0; i < n_; ++i) {
        if (!done_u[idx(i)] && dist_u[idx(i)] < best) {
          best = dist_u[idx(i)];
          pick = i;
          pick_is_u = true;
        }
      }
      for (Eigen::Index j = 0; j < m_; ++j) {
        if (!done_v[idx(j)] && dist_v[idx(j)] < best) {
          best = dist_v[idx(j)];
          pick = j;
          pick_is_u = false;
        }
      }
      if (pick < 0) break;  // the sink is the closest remaining node
      if (pick_is_u) {
        done_u[idx(pick)] = 1;
        for (Eigen::Index j = 0; j < m_; ++j) {
          if (done_v[idx(j)]) continue;
          const double cand = best + reduced_forward(pick, j);
          if (cand < dist_v[idx(j)]) {
            dist_v[idx(j)] = cand;
            parent_v[idx(j)] = pick;
          }
        }
      } else {
        done_v[idx(pick)] = 1;
        if (demand_[idx(pick)] > 0) {
          const double cand = best + std::max(0.0, pot_v_[idx(pick)] - pot_sink_);
          if (cand < dist_sink) {
            dist_sink = cand;
            sink_parent = pick;
          }
        }
        for (Eigen::Index i = 0; i < n_; ++i) {
          if (done_u[idx(i)] || flow(i, pick) == 0) continue;
          const double cand = best + reduced_backward(i, pick);
          if (cand < dist_u[idx(i)]) {
            dist_u[idx(i)] = cand;
            parent_u[idx(i)] = pick;
          }
        }
      }
    }
    if (sink_parent < 0) {
      throw Error(ErrorKind::kNumeric, "transportation network has no augmenting path");
    }

    for (Eigen::Index i = 0; i < n_; ++i) pot_u_[idx(i)] += std::min(dist_u[idx(i)], dist_sink);
    for (Eigen::Index j = 0; j < m_; ++j) pot_v_[idx(j)] += std::min(dist_v[idx(j)], dist_sink);
    pot_sink_ += dist_sink;

    // Walk back from the sink to find the bottleneck, then push.
    Units delta = demand_[idx(sink_parent)];
    Eigen::Index j = sink_parent;
    Eigen::Index i = parent_v[idx(j)];
    while (parent_u[idx(i)] >= 0) {
      const Eigen::Index back = parent_u[idx(i)];
      delta = std::min(delta, flow(i, back));
      j = back;
      i = parent_v[idx(j)];
    }
    delta = std::min(delta, supply_[idx(i)]);

    j = sink_parent;
    i = parent_v[idx(j)];
    demand_[idx(j)] -= delta;
    while (true) {
      flow_[idx(i * m_ + j)] += delta;
      const Eigen::Index back = parent_u[idx(i)];
      if (back < 0) break;
      flow_[idx(i * m_ + back)] -= delta;
      j = back;
      i = parent_v[idx(j)];
    }
    supply_[idx(i)] -= delta;
    return delta;
  }

  const Matrix& cost_;
  Eigen::Index n_;
  Eigen::Index m_;
  std::vector<Units> supply_;
  std::vector<Units> demand_;
  std::vector<Units> flow_;
  std::vector<double> pot_u_;
  std::vector<double> pot_v_;
  double pot_sink_ = 0.0;
};

}  // namespace

W1Result solve_transport_lp(const Matrix& cost, const Vector& p, const Vector& q,
                            bool certify_duality) {
  if (cost.rows() != p.size() || cost.cols() != q.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "transport cost shape does not match weights");
  }
  if (p.size() + q.size() > kMaxW1Support) {
    throw Error(ErrorKind::kSize, "exact W1 oracle is limited to a combined support of " +
                                      std::to_string(kMaxW1Support) + " atoms");
  }
  if (!cost.allFinite()) throw Error(ErrorKind::kInvalidInput, "transport cost is not finite");
  if (p.minCoeff() < 0.0 || q.minCoeff() < 0.0 || !(p.sum() > 0.0) || !(q.sum() > 0.0)) {
    throw Error(ErrorKind::kInvalidInput, "transport weights must be nonnegative with positive mass");
  }

  const auto scale = static_cast<Units>(kW1MassScale);
  std::vector<Units> supply = quantize(p, scale);
  std::vector<Units> demand = quantize(q, scale);
  TransportNetwork network(cost, supply, demand);
  network.solve();

  long double primal = 0.0L;
  for (Eigen::Index i = 0; i < cost.rows(); ++i) {
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      primal += static_cast<long double>(network.flow(i, j)) * cost(i, j);
    }
  }
  primal /= static_cast<long double>(scale);

  W1Result result;
  result.value = static_cast<double>(primal);
  result.metric = certify_duality;
  result.rounding_slack = (cost.maxCoeff() - cost.minCoeff()) *
                          (total_variation(p, supply, scale) + total_variation(q, demand, scale));
  if (certify_duality) {
    long double dual = 0.0L;
    double infeasibility = 0.0;
    for (Eigen::Index i = 0; i < cost.rows(); ++i) {
      dual += static_cast<long double>(supply[static_cast<std::size_t>(i)]) * network.supply_dual(i);
      for (Eigen::Index j = 0; j < cost.cols(); ++j) {
        infeasibility = std::max(
            infeasibility, network.supply_dual(i) + network.demand_dual(j) - cost(i, j));
      }
    }
    for (Eigen::Index j = 0; j < cost.cols(); ++j) {
      dual += static_cast<long double>(demand[static_cast<std::size_t>(j)]) * network.demand_dual(j);
    }
    dual /= static_cast<long double>(scale);
    result.duality_gap = static_cast<double>(std::abs(primal - dual)) + infeasibility;
  }
  return result;
}

W1Result exact_w1(const DiscreteMeasure& p, const DiscreteMeasure& q, const GroundMetric& metric) {
  if (p.dim() != q.dim()) throw Error(ErrorKind::kDimensionMismatch, "W1 measures differ in dimension");
  if (p.size() + q.size() > kMaxW1Support) {
    throw Error(ErrorKind::kSize, "exact W1 oracle is limited to a combined support of " +
                                      std::to_string(kMaxW1Support) + " atoms");
  }
  Matrix cost(p.size(), q.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const Point x = p.atom(i);
    for (Eigen::Index j = 0; j < q.size(); ++j) cost(i, j) = metric.distance(x, q.atom(j));
  }
  return solve_transport_lp(cost, p.weights(), q.weights(), metric.is_metric);
}

namespace {

struct ProductAtoms {
  std::vector<std::pair<Eigen::Index, Eigen::Index>> index;
  Vector weights;
};

ProductAtoms nonzero_atoms(const Coupling& pi) {
  ProductAtoms out;
  std::vector<double> w;
  for (Eigen::Index i = 0; i < pi.mass().rows(); ++i) {
    for (Eigen::Index j = 0; j < pi.mass().cols(); ++j) {
      if (pi.mass()(i, j) > 0.0) {
        out.index.emplace_back(i, j);
        w.push_back(pi.mass()(i, j));
      }
    }
  }
  out.weights = Eigen::Map<Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  return out;
}

}  // namespace

double coupling_w1(const Coupling& a, const Coupling& b) {
  if (a.rows().dim() != b.rows().dim() || a.cols().dim() != b.cols().dim()) {
    throw Error(ErrorKind::kDimensionMismatch, "couplings live on different product spaces");
  }
  const ProductAtoms pa = nonzero_atoms(a);
  const ProductAtoms pb = nonzero_atoms(b);
  Matrix cost(pa.weights.size(), pb.weights.size());
  for (Eigen::Index r = 0; r < cost.rows(); ++r) {
    const auto [ia, ja] = pa.index[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < cost.cols(); ++c) {
      const auto [ib, jb] = pb.index[static_cast<std::size_t>(c)];
      cost(r, c) = (a.rows().support().row(ia) - b.rows().support().row(ib)).norm() +
                   (a.cols().support().row(ja) - b.cols().support().row(jb)).norm();
    }
  }
  return solve_transport_lp(cost, pa.weights, pb.weights, true).value;
}

}  // namespace sinkformer
