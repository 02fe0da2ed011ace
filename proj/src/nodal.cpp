#include "rram/crossbar.hpp"
#include "rram/error.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <numeric>
#include <queue>

namespace rram {

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(int n) : parent_(static_cast<std::size_t>(n)) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }
  int find(int a) {
    while (parent_[a] != a) a = parent_[a] = parent_[parent_[a]];
    return a;
  }
  void unite(int a, int b) { parent_[find(a)] = find(b); }

 private:
  std::vector<int> parent_;
};

struct Edge {
  int a, b;
  double g;
};

}  // namespace

NodalSolution nodal_solve(const Eigen::MatrixXd& g, const std::vector<RowDrive>& row_drive,
                          const std::vector<ColumnTermination>& col_term, double line_r) {
  const int R = static_cast<int>(g.rows()), C = static_cast<int>(g.cols());
  if (!(line_r >= 0.0)) throw Error(ErrorKind::InvalidArgument, "line_r must be >= 0");
  if (static_cast<int>(row_drive.size()) != R || static_cast<int>(col_term.size()) != C)
    throw Error(ErrorKind::InvalidArgument, "drive/termination vectors must match the array shape");
  if ((g.array() < 0.0).any()) throw Error(ErrorKind::InvalidArgument, "negative cell conductance");

  // Node numbering: word-line nodes, bit-line nodes, column terminals, row sources, ground.
  const int wl0 = 0, bl0 = R * C, term0 = 2 * R * C, src0 = term0 + C, ground = src0 + R;
  const int n_nodes = ground + 1;
  auto wl = [&](int r, int c) { return wl0 + r * C + c; };
  auto bl = [&](int r, int c) { return bl0 + r * C + c; };

  std::vector<double> fixed(static_cast<std::size_t>(n_nodes), std::nan(""));
  std::vector<char> active(static_cast<std::size_t>(n_nodes), 0);
  std::fill(active.begin(), active.begin() + term0, 1);
  fixed[ground] = 0.0;

  DisjointSet sets(n_nodes);
  std::vector<Edge> edges;
  auto wire = [&](int a, int b) {
    if (line_r == 0.0) sets.unite(a, b);
    else edges.push_back({a, b, 1.0 / line_r});
  };

  for (int r = 0; r < R; ++r) {
    if (const auto* d = std::get_if<Driven>(&row_drive[r])) {
      fixed[src0 + r] = d->voltage;
      active[src0 + r] = 1;
      wire(src0 + r, wl(r, 0));
    }
    for (int c = 0; c + 1 < C; ++c) wire(wl(r, c), wl(r, c + 1));
  }
  for (int c = 0; c < C; ++c) {
    for (int r = 0; r + 1 < R; ++r) wire(bl(r, c), bl(r + 1, c));
    const auto& t = col_term[c];
    if (std::holds_alternative<Floating>(t)) continue;
    active[term0 + c] = 1;
    wire(term0 + c, bl(0, c));
    if (const auto* d = std::get_if<Driven>(&t)) {
      fixed[term0 + c] = d->voltage;
    } else {
      const double rs = std::get<GroundedThrough>(t).resistance;
      if (rs < 0.0) throw Error(ErrorKind::InvalidArgument, "negative termination resistance");
      if (rs == 0.0) sets.unite(term0 + c, ground);
      else edges.push_back({term0 + c, ground, 1.0 / rs});
    }
  }
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c)
      if (g(r, c) > 0.0) edges.push_back({wl(r, c), bl(r, c), g(r, c)});

  // Resolve classes: fixed potential per class (conflicts are shorted sources).
  std::vector<double> class_fixed(static_cast<std::size_t>(n_nodes), std::nan(""));
  for (int k = 0; k < n_nodes; ++k) {
    if (std::isnan(fixed[k])) continue;
    const int root = sets.find(k);
    if (!std::isnan(class_fixed[root]) && class_fixed[root] != fixed[k])
      throw Error(ErrorKind::InvalidArgument, "two sources at different voltages are shorted");
    class_fixed[root] = fixed[k];
  }
  std::vector<int> unknown(static_cast<std::size_t>(n_nodes), -1);
  int n_unknown = 0;
  for (int k = 0; k < n_nodes; ++k) {
    if (!active[k]) continue;
    const int root = sets.find(k);
    if (std::isnan(class_fixed[root]) && unknown[root] < 0) unknown[root] = n_unknown++;
  }

  // Every unknown class must reach a fixed potential through positive conductances.
  {
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n_nodes));
    for (const auto& e : edges) {
      const int a = sets.find(e.a), b = sets.find(e.b);
      if (a == b) continue;
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::vector<char> seen(static_cast<std::size_t>(n_nodes), 0);
    std::queue<int> frontier;
    for (int k = 0; k < n_nodes; ++k)
      if (sets.find(k) == k && !std::isnan(class_fixed[k])) {
        seen[k] = 1;
        frontier.push(k);
      }
    while (!frontier.empty()) {
      const int a = frontier.front();
      frontier.pop();
      for (int b : adj[a])
        if (!seen[b]) {
          seen[b] = 1;
          frontier.push(b);
        }
    }
    for (int k = 0; k < n_nodes; ++k)
      if (active[k] && !seen[sets.find(k)])
        throw Error(ErrorKind::SingularNetwork, "floating subnetwork with no path to a fixed potential");
  }

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges.size() * 4);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_unknown);
  for (const auto& e : edges) {
    const int a = sets.find(e.a), b = sets.find(e.b);
    if (a == b) continue;
    const int ua = unknown[a], ub = unknown[b];
    if (ua >= 0) triplets.emplace_back(ua, ua, e.g);
    if (ub >= 0) triplets.emplace_back(ub, ub, e.g);
    if (ua >= 0 && ub >= 0) {
      triplets.emplace_back(ua, ub, -e.g);
      triplets.emplace_back(ub, ua, -e.g);
    } else if (ua >= 0) {
      rhs[ua] += e.g * class_fixed[b];
    } else if (ub >= 0) {
      rhs[ub] += e.g * class_fixed[a];
    }
  }
  Eigen::SparseMatrix<double> A(n_unknown, n_unknown);
  A.setFromTriplets(triplets.begin(), triplets.end());

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n_unknown);
  NodalSolution sol;
  if (n_unknown > 0) {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::SingularNetwork, "factorization failed");
    x = solver.solve(rhs);
    if (solver.info() != Eigen::Success || !x.allFinite())
      throw Error(ErrorKind::SingularNetwork, "solve failed");
    const double bn = rhs.norm();
    sol.residual = bn > 0.0 ? (A * x - rhs).norm() / bn : (A * x).norm();
  }

  auto voltage = [&](int node) {
    const int root = sets.find(node);
    return unknown[root] >= 0 ? x[unknown[root]] : class_fixed[root];
  };

  sol.v_wl.resize(R, C);
  sol.v_bl.resize(R, C);
  sol.cell_current.resize(R, C);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) {
      sol.v_wl(r, c) = voltage(wl(r, c));
      sol.v_bl(r, c) = voltage(bl(r, c));
      sol.cell_current(r, c) = g(r, c) * (sol.v_wl(r, c) - sol.v_bl(r, c));
    }
  sol.v_terminal.resize(C);
  for (int c = 0; c < C; ++c)
    sol.v_terminal[c] = std::holds_alternative<Floating>(col_term[c]) ? sol.v_bl(0, c) : voltage(term0 + c);

  // Source currents from the source-side branch where it exists, else from the cells.
  sol.row_injection = Eigen::VectorXd::Zero(R);
  for (int r = 0; r < R; ++r) {
    if (!std::holds_alternative<Driven>(row_drive[r])) continue;
    sol.row_injection[r] = line_r > 0.0 ? (voltage(src0 + r) - voltage(wl(r, 0))) / line_r
                                        : sol.cell_current.row(r).sum();
  }
  sol.col_injection = Eigen::VectorXd::Zero(C);
  for (int c = 0; c < C; ++c) {
    if (std::holds_alternative<Floating>(col_term[c])) continue;
    sol.col_injection[c] = line_r > 0.0 ? (voltage(term0 + c) - voltage(bl(0, c))) / line_r
                                        : -sol.cell_current.col(c).sum();
  }
  const double total = sol.row_injection.cwiseAbs().sum() + sol.col_injection.cwiseAbs().sum();
  const double net = sol.row_injection.sum() + sol.col_injection.sum();
  sol.kcl_residual = total > 0.0 ? std::abs(net) / total : 0.0;
  return sol;
}

NodalSolution nodal_solve(const Crossbar& xbar, const std::vector<RowDrive>& rows,
                          const std::vector<ColumnTermination>& cols, double line_r) {
  return nodal_solve(xbar.conductances(), rows, cols, line_r);
}

namespace {

double sense_resistance(const MarginOptions& opt) {
  if (!(opt.r_sense > 0.0)) throw Error(ErrorKind::InvalidArgument, "sense resistance must be positive");
  return opt.r_sense;
}

}  // namespace

double ideal_margin(double r_on, double r_off, const MarginOptions& opt) {
  const double rs = sense_resistance(opt);
  return opt.v_read * rs * (1.0 / (rs + r_on) - 1.0 / (rs + r_off));
}

double read_margin(int n, double r_on, double r_off, double line_r, const MarginOptions& opt) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "array size must be >= 2");
  if (!(r_on > 0.0) || !(r_off > 0.0)) throw Error(ErrorKind::InvalidArgument, "resistances must be positive");
  const double rs = sense_resistance(opt);
  const int sel = n - 1;  // far corner from the row drivers and column terminals
  const double g_bg = 1.0 / (opt.background_lrs ? r_on : r_off);

  std::vector<RowDrive> rows(static_cast<std::size_t>(n), Floating{});
  std::vector<ColumnTermination> cols(static_cast<std::size_t>(n), Floating{});
  rows[sel] = Driven{opt.v_read};
  cols[sel] = GroundedThrough{rs};
  if (opt.bias == ReadBias::IdealSelector) {
    for (int k = 0; k < n; ++k) {
      if (k != sel) rows[k] = Driven{0.0};
      if (k != sel) cols[k] = GroundedThrough{rs};
    }
  }

  auto sensed = [&](double g_target) {
    Eigen::MatrixXd g;
    if (opt.bias == ReadBias::IdealSelector) g = Eigen::MatrixXd::Zero(n, n);
    else g = Eigen::MatrixXd::Constant(n, n, g_bg);
    g(sel, sel) = g_target;
    return nodal_solve(g, rows, cols, line_r).v_terminal[sel];
  };
  return std::abs(sensed(1.0 / r_on) - sensed(1.0 / r_off));
}

double write_voltage_drop(int n, double r_on, double line_r, double v_write) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "array size must be >= 2");
  if (!(r_on > 0.0)) throw Error(ErrorKind::InvalidArgument, "r_on must be positive");
  const int sel = n - 1;
  std::vector<RowDrive> rows(static_cast<std::size_t>(n), Driven{0.5 * v_write});
  std::vector<ColumnTermination> cols(static_cast<std::size_t>(n), Driven{0.5 * v_write});
  rows[sel] = Driven{v_write};
  cols[sel] = Driven{0.0};
  const Eigen::MatrixXd g = Eigen::MatrixXd::Constant(n, n, 1.0 / r_on);
  const auto sol = nodal_solve(g, rows, cols, line_r);
  return (sol.v_wl(sel, sel) - sol.v_bl(sel, sel)) / v_write;
}

}  // namespace rram
