#include "cng/causal/wasserstein.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "cng/core/errors.hpp"

namespace cng {
namespace {

struct Piece {
  std::size_t i;  // rank in the sorted first sample
  std::size_t j;  // rank in the sorted second sample
  double mass;
};

// Quantile matching: walk both sorted samples, pairing ranks over the
// overlapping probability intervals [i/n, (i+1)/n) and [j/m, (j+1)/m).
std::vector<Piece> quantile_pieces(std::size_t n, std::size_t m) {
  std::vector<Piece> out;
  std::size_t i = 0, j = 0;
  // Work in units of 1/(n*m) so the boundaries are exact integers.
  std::size_t pos = 0;
  const std::size_t total = n * m;
  while (pos < total) {
    const std::size_t next = std::min((i + 1) * m, (j + 1) * n);
    out.push_back({i, j, static_cast<double>(next - pos) / static_cast<double>(total)});
    pos = next;
    if (pos == (i + 1) * m) ++i;
    if (pos == (j + 1) * n) ++j;
  }
  return out;
}

std::vector<std::size_t> argsort(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
  return idx;
}

}  // namespace

double wasserstein1_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return 0.0;
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double w = 0.0;
  for (const Piece& p : quantile_pieces(x.size(), y.size())) w += p.mass * std::abs(x[p.i] - y[p.j]);
  return w;
}

ad::Var wasserstein1(const ad::Var& treated, const ad::Var& control) {
  const Tensor& a = treated.value();
  const Tensor& b = control.value();
  if (a.rows() == 0 || b.rows() == 0) {
    spdlog::warn("wasserstein1: empty {} group, regulariser is 0", a.rows() == 0 ? "treated" : "control");
    return ad::Var::constant(Tensor::scalar(0.0));
  }
  if (a.cols() != b.cols()) {
    throw DimensionError("wasserstein1: widths " + std::to_string(a.cols()) + " and " + std::to_string(b.cols()));
  }
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  const std::vector<Piece> pieces = quantile_pieces(n, m);
  // d(value)/d(entry) for both inputs, accumulated while computing the value.
  Tensor ga({n, d}), gb({m, d});
  double total = 0.0;
  std::vector<double> col_a(n), col_b(m);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < n; ++r) col_a[r] = a(r, c);
    for (std::size_t r = 0; r < m; ++r) col_b[r] = b(r, c);
    const auto ia = argsort(col_a);
    const auto ib = argsort(col_b);
    for (const Piece& p : pieces) {
      const double diff = col_a[ia[p.i]] - col_b[ib[p.j]];
      total += p.mass * std::abs(diff);
      const double s = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
      ga(ia[p.i], c) += p.mass * s / static_cast<double>(d);
      gb(ib[p.j], c) -= p.mass * s / static_cast<double>(d);
    }
  }
  return ad::make_op("wasserstein1", Tensor::scalar(total / static_cast<double>(d)), {treated, control},
                     [ga = std::move(ga), gb = std::move(gb)](ad::Node& self) {
                       const double g = self.grad[0];
                       Tensor da = ga, db = gb;
                       for (auto& v : da.values()) v *= g;
                       for (auto& v : db.values()) v *= g;
                       ad::accumulate(self.inputs[0], da);
                       ad::accumulate(self.inputs[1], db);
                     });
}

}  // namespace cng
