#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "cng/causal/causal.hpp"
#include "cng/core/errors.hpp"
#include "cng/pipeline/synth.hpp"
#include "gradcheck.hpp"
#include "ot_oracle.hpp"

namespace cng {
namespace {

using ad::Var;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double elu(double x) { return x > 0 ? x : std::exp(x) - 1.0; }

std::vector<double> draw(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

Var column(const std::vector<double>& v) { return Var::constant(Tensor({v.size(), 1}, v)); }

TEST(Wasserstein, TwoPointTransport) {
  const std::vector<double> a = {0.0}, b = {1.0};
  EXPECT_EQ(wasserstein1_1d(a, b), 1.0);
  EXPECT_EQ(wasserstein1(column(a), column(b)).value()[0], 1.0);
}

TEST(Wasserstein, IdenticalGroupsGiveZero) {
  Rng rng(1);
  const Tensor x = normal_tensor(7, 3, 1.0, rng);
  EXPECT_EQ(wasserstein1(Var::constant(x), Var::constant(x)).value()[0], 0.0);
}

TEST(Wasserstein, EqualSizesMatchExhaustiveAssignment) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const auto a = draw(n, rng), b = draw(n, rng);
    EXPECT_NEAR(wasserstein1_1d(a, b), testing::exhaustive_assignment_w1(a, b), 1e-9);
  }
}

TEST(Wasserstein, UnequalSizesMatchTransportLp) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = draw(1 + rng.below(6), rng), b = draw(1 + rng.below(6), rng);
    const double w = wasserstein1_1d(a, b);
    EXPECT_NEAR(w, testing::transport_w1(a, b), 1e-9);
    EXPECT_NEAR(w, wasserstein1_1d(b, a), 1e-12);
    EXPECT_GE(w, 0.0);
  }
}

TEST(Wasserstein, ColumnsAreAveraged) {
  Rng rng(4);
  const Tensor a = normal_tensor(5, 3, 1.0, rng), b = normal_tensor(4, 3, 1.0, rng);
  double expected = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> ca, cb;
    for (std::size_t r = 0; r < 5; ++r) ca.push_back(a(r, c));
    for (std::size_t r = 0; r < 4; ++r) cb.push_back(b(r, c));
    expected += testing::transport_w1(ca, cb) / 3.0;
  }
  EXPECT_NEAR(wasserstein1(Var::constant(a), Var::constant(b)).value()[0], expected, 1e-9);
}

TEST(Wasserstein, EmptyGroupGivesZero) {
  Rng rng(5);
  const Var a = Var::constant(normal_tensor(3, 2, 1.0, rng));
  EXPECT_EQ(wasserstein1(a, Var::constant(Tensor({0, 2}))).value()[0], 0.0);
  EXPECT_EQ(wasserstein1_1d(std::vector<double>{}, std::vector<double>{1.0}), 0.0);
}

TEST(Wasserstein, WidthMismatchRejected) {
  EXPECT_THROW(wasserstein1(Var::constant(Tensor({2, 2})), Var::constant(Tensor({2, 3}))), DimensionError);
}

TEST(Wasserstein, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  Var a = Var::parameter(normal_tensor(5, 3, 1.0, rng));
  Var b = Var::parameter(normal_tensor(3, 3, 1.0, rng));
  const auto r = testing::gradient_check({a, b}, [&] { return wasserstein1(a, b); }, 1e-6);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(NeighborWeights, HandExample) {
  // Edges: {0,1,2} and {1,3}; node 4 isolated.
  const Tensor a = incidence_from_hyperedges(5, {{0, 1, 2}, {1, 3}});
  const Tensor w = neighbor_weights(a);
  EXPECT_DOUBLE_EQ(w(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(w(0, 2), 0.5);
  EXPECT_DOUBLE_EQ(w(1, 0), 0.25);
  EXPECT_DOUBLE_EQ(w(1, 2), 0.25);
  EXPECT_DOUBLE_EQ(w(1, 3), 0.5);
  EXPECT_DOUBLE_EQ(w(3, 1), 1.0);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(w(i, i), 0.0);
    EXPECT_EQ(w(4, i), 0.0);
  }
}

TEST(NeighborWeights, SingletonEdgesGiveNoNeighbors) {
  const Tensor w = neighbor_weights(incidence_from_hyperedges(3, {{0}, {1}, {}}));
  for (double v : w.values()) EXPECT_EQ(v, 0.0);
}

EstimatorConfig tiny_config() {
  EstimatorConfig c;
  c.input_dim = 3;
  c.confounder_dim = 4;
  c.interference_dim = 4;
  return c;
}

TEST(HyperSci, ZeroConfounderMapGivesBiasRows) {
  HyperSciEstimator est = HyperSciEstimator::create(tiny_config(), 1);
  est.parameters().get("hypersci.confounder.weight").mutable_value().fill(0.0);
  Rng rng(1);
  const Tensor z = est.confounder(Var::constant(normal_tensor(3, 3, 1.0, rng))).value();
  const Tensor& b = est.parameters().get("hypersci.confounder.bias").value();
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(z(r, c), b[c]);
}

TEST(HyperSci, CreationIsDeterministic) {
  const auto a = encode_checkpoint(HyperSciEstimator::create(tiny_config(), 5).to_checkpoint());
  EXPECT_EQ(a, encode_checkpoint(HyperSciEstimator::create(tiny_config(), 5).to_checkpoint()));
  EXPECT_NE(a, encode_checkpoint(HyperSciEstimator::create(tiny_config(), 6).to_checkpoint()));
}

TEST(HyperSci, NoNeighborsGivesTransformOfZero) {
  HyperSciEstimator est = HyperSciEstimator::create(tiny_config(), 2);
  Rng rng(2);
  const Var z = Var::constant(normal_tensor(4, 4, 1.0, rng));
  const Tensor p = est.interference(z, Tensor({4, 4}), Tensor::filled(4, 1, 1.0)).value();
  const Tensor& b = est.parameters().get("hypersci.interference.0.bias").value();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(p(r, c), elu(b[c]));
}

TEST(HyperSci, ZeroTreatmentSilencesNeighbors) {
  HyperSciEstimator est = HyperSciEstimator::create(tiny_config(), 3);
  Rng rng(3);
  const Var z = Var::constant(normal_tensor(4, 4, 1.0, rng));
  const Tensor w = neighbor_weights(incidence_from_hyperedges(4, {{0, 1, 2, 3}}));
  const Tensor treated0 = est.interference(z, w, Tensor({4, 1})).value();
  const Tensor isolated = est.interference(z, Tensor({4, 4}), Tensor::filled(4, 1, 1.0)).value();
  for (std::size_t i = 0; i < treated0.size(); ++i) EXPECT_EQ(treated0[i], isolated[i]);
}

TEST(HyperSci, TwoNodeInterferenceMatchesHandUnrolling) {
  EstimatorConfig c;
  c.input_dim = 1;
  c.confounder_dim = 2;
  c.interference_dim = 2;
  HyperSciEstimator est = HyperSciEstimator::create(c, 4);
  const Tensor theta = est.parameters().get("hypersci.interference.0.weight").value();
  const Tensor b = est.parameters().get("hypersci.interference.0.bias").value();
  const Tensor z = Tensor::matrix({{0.3, -1.2}, {0.8, 0.5}});
  const Tensor w = neighbor_weights(incidence_from_hyperedges(2, {{0, 1}}));
  const double t2 = 0.7;
  const Tensor p = est.interference(Var::constant(z), w, Tensor::matrix({{1.0}, {t2}})).value();
  for (std::size_t k = 0; k < 2; ++k) {
    const double pre = t2 * (z(1, 0) * theta(0, k) + z(1, 1) * theta(1, k)) + b[k];
    EXPECT_NEAR(p(0, k), elu(pre), 1e-12);
  }
}

TEST(HyperSci, IdenticalHeadsGiveZeroEffectAndOutputsAreProbabilities) {
  HyperSciEstimator est = HyperSciEstimator::create(tiny_config(), 5);
  Rng rng(5);
  const Var z = Var::constant(normal_tensor(6, 4, 3.0, rng));
  const Var p = Var::constant(normal_tensor(6, 4, 3.0, rng));
  const auto o = est.outcomes(z, p);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_GT(o.y1.value()[i], 0.0);
    EXPECT_LT(o.y1.value()[i], 1.0);
    EXPECT_GT(o.y0.value()[i], 0.0);
    EXPECT_LT(o.y0.value()[i], 1.0);
  }
  est.parameters().get("hypersci.head0.weight").mutable_value() = est.head1().weight.value();
  est.parameters().get("hypersci.head0.bias").mutable_value() = est.head1().bias.value();
  const auto same = est.outcomes(z, p);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(same.y1.value()[i] - same.y0.value()[i], 0.0);
}

TEST(HyperSci, GradientsMatchFiniteDifferences) {
  HyperSciEstimator est = HyperSciEstimator::create(tiny_config(), 6);
  Rng rng(6);
  const Tensor w = neighbor_weights(incidence_from_hyperedges(4, {{0, 1, 2}, {2, 3}}));
  const Tensor t = Tensor::matrix({{1.0}, {0.0}, {1.0}, {1.0}});
  Var x = Var::parameter(normal_tensor(4, 3, 1.0, rng));
  const Tensor proj = normal_tensor(4, 1, 1.0, rng);
  auto loss = [&] {
    const CausalLatents l = est.latents(x, w, t);
    const auto o = est.outcomes(l.z, l.p);
    return ad::add(testing::project_to_scalar(o.y1, proj), ad::sum(ad::square(o.y0)));
  };
  std::vector<Var> vars = est.parameters().vars();
  vars.push_back(x);
  const auto r = testing::gradient_check(vars, loss, 1e-5);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

// Two entities sharing one hyperedge, features in one dimension, every
// estimator weight set by hand.
struct HandFixture {
  HyperSciEstimator est;
  CausalSample sample;
  // Dyadic values survive the float32 checkpoint exactly.
  double wc = 0.75, bc = -0.25, theta = 1.5, bp = -0.375;
  double a1 = 0.625, a2 = -1.125, c1 = 0.25, d1 = -0.5, d2 = 0.875, c0 = 0.125;
  std::vector<double> x = {1.0, -0.5};
  double y1 = 0.8;
  std::vector<double> y0 = {0.3, 0.75};

  HandFixture() : est(HyperSciEstimator::create(config(), 0)) {
    auto set = [&](const char* name, Tensor v) { est.parameters().get(name).mutable_value() = std::move(v); };
    set("hypersci.confounder.weight", Tensor::scalar(wc));
    set("hypersci.confounder.bias", Tensor::scalar(bc));
    set("hypersci.interference.0.weight", Tensor::scalar(theta));
    set("hypersci.interference.0.bias", Tensor::scalar(bp));
    set("hypersci.head1.weight", Tensor::matrix({{a1}, {a2}}));
    set("hypersci.head1.bias", Tensor::scalar(c1));
    set("hypersci.head0.weight", Tensor::matrix({{d1}, {d2}}));
    set("hypersci.head0.bias", Tensor::scalar(c0));
    sample.doc_id = "hand";
    sample.features = Tensor::matrix({{x[0]}, {x[1]}});
    sample.neighbors = neighbor_weights(incidence_from_hyperedges(2, {{0, 1}}));
    for (std::size_t i = 0; i < 2; ++i) {
      sample.records.push_back({"hand", i, y1, y0[i], y1 - y0[i], 1});
      sample.records.push_back({"hand", i, y1, y0[i], y1 - y0[i], 0});
    }
  }
  static EstimatorConfig config() {
    EstimatorConfig c;
    c.input_dim = c.confounder_dim = c.interference_dim = 1;
    return c;
  }
  double z(std::size_t i) const { return wc * x[i] + bc; }
  // One neighbor with weight 1; masking i leaves its neighbor untouched.
  double p(std::size_t i) const { return elu(theta * z(1 - i) + bp); }
  double yhat1(std::size_t i) const { return sigmoid(a1 * z(i) + a2 * p(i) + c1); }
  double yhat0_control(std::size_t i) const { return sigmoid(d1 * bc + d2 * p(i) + c0); }
  double squared_error() const {
    double s = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      s += (yhat1(i) - y1) * (yhat1(i) - y1);
      s += (yhat0_control(i) - y0[i]) * (yhat0_control(i) - y0[i]);
    }
    return s;
  }
  // Control confounders all equal bc, so the coupling is forced.
  double w1() const { return (std::abs(z(0) - bc) + std::abs(z(1) - bc)) / 2.0; }
};

TEST(EstimatorLoss, MatchesHandComputation) {
  HandFixture f;
  const std::vector<const CausalSample*> batch = {&f.sample};
  const LossParts l = estimator_loss(f.est, batch, 0.1);
  EXPECT_NEAR(l.squared_error, f.squared_error(), 1e-12);
  EXPECT_NEAR(l.wasserstein, f.w1(), 1e-12);
  EXPECT_NEAR(l.total.value()[0], f.squared_error() + 0.1 * f.w1(), 1e-12);
}

TEST(EstimatorLoss, ZeroAlphaIsPureSquaredError) {
  HandFixture f;
  const std::vector<const CausalSample*> batch = {&f.sample};
  const LossParts l = estimator_loss(f.est, batch, 0.0);
  EXPECT_EQ(l.total.value()[0], l.squared_error);
  EXPECT_GT(l.wasserstein, 0.0);
}

TEST(EstimatorLoss, IteReadOuts) {
  HandFixture f;
  const auto paired = estimate_ite(f.est, f.sample);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(paired[i], f.yhat1(i) - f.yhat0_control(i), 1e-12);
  EstimatorConfig c = HandFixture::config();
  c.ite_mode = IteMode::shared;
  Checkpoint ck = f.est.to_checkpoint();
  ck.config = to_json(c);
  const HyperSciEstimator shared = HyperSciEstimator::from_checkpoint(ck);
  const auto tau = estimate_ite(shared, f.sample);
  for (std::size_t i = 0; i < 2; ++i) {
    const double y0 = sigmoid(f.d1 * f.z(i) + f.d2 * f.p(i) + f.c0);
    EXPECT_NEAR(tau[i], f.yhat1(i) - y0, 1e-12);
  }
}

TEST(EstimatorLoss, GradientMatchesFiniteDifferences) {
  HyperSciEstimator est = HyperSciEstimator::create(tiny_config(), 8);
  Rng rng(8);
  std::vector<CausalSample> samples(2);
  for (std::size_t s = 0; s < 2; ++s) {
    const std::size_t n = 3 + s;
    samples[s].features = normal_tensor(n, 3, 1.0, rng);
    samples[s].neighbors = neighbor_weights(incidence_from_hyperedges(n, {{0, 1}, {1, 2, n - 1}}));
    const double y1 = rng.uniform(0.1, 0.9);
    for (std::size_t i = 0; i < n; ++i) {
      const double y0 = rng.uniform(0.1, 0.9);
      samples[s].records.push_back({"s", i, y1, y0, y1 - y0, 1});
      samples[s].records.push_back({"s", i, y1, y0, y1 - y0, 0});
    }
  }
  const std::vector<const CausalSample*> batch = {&samples[0], &samples[1]};
  const auto r = testing::gradient_check(est.parameters().vars(),
                                         [&] { return estimator_loss(est, batch, 0.5).total; }, 1e-6);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(EffectMetrics, ExactEstimates) {
  const std::vector<double> t = {0.1, -0.2, 0.4};
  const auto m = pehe_ate(t, t);
  EXPECT_EQ(m.pehe, 0.0);
  EXPECT_EQ(m.ate_error, 0.0);
}

TEST(EffectMetrics, ConstantShift) {
  const std::vector<double> t = {0.1, -0.2, 0.4, 0.0};
  std::vector<double> h = t;
  for (auto& v : h) v += 0.1;
  const auto m = pehe_ate(h, t);
  EXPECT_NEAR(m.pehe, 0.1, 1e-12);
  EXPECT_NEAR(m.ate_error, 0.1, 1e-12);
}

TEST(EffectMetrics, FiveElementHandFixture) {
  const std::vector<double> h = {0.5, -0.1, 0.2, 0.0, 0.3};
  const std::vector<double> t = {0.4, 0.1, 0.2, -0.3, 0.1};
  // differences 0.1, -0.2, 0, 0.3, 0.2 -> squares sum 0.18
  const auto m = pehe_ate(h, t);
  EXPECT_NEAR(m.pehe, std::sqrt(0.18 / 5.0), 1e-12);
  EXPECT_NEAR(m.ate_estimated, 0.18, 1e-12);
  EXPECT_NEAR(m.ate_true, 0.1, 1e-12);
  EXPECT_NEAR(m.ate_error, 0.08, 1e-12);
}

TEST(EffectMetrics, BadLengthsRejected) {
  const std::vector<double> a = {0.1}, b = {0.1, 0.2}, none;
  EXPECT_THROW(pehe_ate(a, b), DimensionError);
  EXPECT_THROW(pehe_ate(none, none), ParameterError);
}

BipartiteGraph plain_graph(std::size_t n) {
  Rng rng(n);
  BipartiteGraph g;
  g.doc_id = "g" + std::to_string(n);
  g.entities = Var::constant(normal_tensor(n, 16, 1.0, rng));
  g.incidence = Var::constant(Tensor({n, 7}));
  g.relations = Var::constant(normal_tensor(7, 16, 1.0, rng));
  return g;
}

std::size_t removed_count(const NodeMask& m) {
  std::size_t r = 0;
  for (auto k : m.values()) r += k == 0;
  return r;
}

TEST(Distill, StubFlipsOnSecondRemoval) {
  const BipartiteGraph g = plain_graph(4);
  const std::vector<double> tau = {0.05, 0.4, -0.1, 0.6};
  const MaskedPredictor stub = [](const BipartiteGraph&, const NodeMask& m) {
    return 0.9 - 0.3 * static_cast<double>(removed_count(m));
  };
  const auto r = distill_minimal_subgraph(g, tau, stub);
  EXPECT_EQ(r.removal_order, (std::vector<std::size_t>{3, 1, 0, 2}));
  EXPECT_EQ(r.remaining, (std::vector<std::size_t>{1, 3}));
  EXPECT_TRUE(r.flipped);
  EXPECT_EQ(r.original_prediction, 1);
  EXPECT_DOUBLE_EQ(r.compression_rate, 50.0);
}

TEST(Distill, OneOfTenGivesNinety) {
  const BipartiteGraph g = plain_graph(10);
  std::vector<double> tau(10, 0.0);
  tau[6] = 1.0;
  const MaskedPredictor stub = [](const BipartiteGraph&, const NodeMask& m) { return m.keeps(6) ? 0.8 : 0.2; };
  const auto r = distill_minimal_subgraph(g, tau, stub);
  EXPECT_EQ(r.remaining, std::vector<std::size_t>{6});
  EXPECT_DOUBLE_EQ(r.compression_rate, 90.0);
}

TEST(Distill, NeverFlipping) {
  const BipartiteGraph g = plain_graph(5);
  const std::vector<double> tau = {0.1, 0.2, 0.3, 0.4, 0.5};
  const MaskedPredictor stub = [](const BipartiteGraph&, const NodeMask&) { return 0.7; };
  const auto r = distill_minimal_subgraph(g, tau, stub);
  EXPECT_FALSE(r.flipped);
  EXPECT_EQ(r.compression_rate, 0.0);
  EXPECT_EQ(r.remaining, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Distill, EmptyGraphIsDegenerate) {
  const BipartiteGraph g = plain_graph(0);
  const MaskedPredictor stub = [](const BipartiteGraph&, const NodeMask&) { return 0.3; };
  const auto r = distill_minimal_subgraph(g, {}, stub);
  EXPECT_FALSE(r.flipped);
  EXPECT_EQ(r.compression_rate, 0.0);
  EXPECT_TRUE(r.remaining.empty());
}

TEST(Distill, TiesGoToLowerIndexAndLengthChecked) {
  const std::vector<double> tau = {0.2, 0.5, 0.5, 0.2};
  EXPECT_EQ(ite_order(tau), (std::vector<std::size_t>{1, 2, 0, 3}));
  const MaskedPredictor stub = [](const BipartiteGraph&, const NodeMask&) { return 0.7; };
  EXPECT_THROW(distill_minimal_subgraph(plain_graph(3), tau, stub), DimensionError);
}

TEST(Distill, CriticalOriginalFlipsUpward) {
  const BipartiteGraph g = plain_graph(3);
  const std::vector<double> tau = {-0.3, 0.0, 0.1};
  const MaskedPredictor stub = [](const BipartiteGraph&, const NodeMask& m) { return m.keeps(0) ? 0.2 : 0.6; };
  const auto r = distill_minimal_subgraph(g, tau, stub);
  EXPECT_EQ(r.original_prediction, 0);
  EXPECT_EQ(r.remaining, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_TRUE(r.flipped);
  EXPECT_EQ(r.compression_rate, 0.0);
}

TEST(Distill, GrowDirection) {
  const BipartiteGraph g = plain_graph(4);
  const std::vector<double> tau = {0.05, 0.4, -0.1, 0.6};
  // Conspiracy only once both 3 and 1 are present.
  const MaskedPredictor stub = [](const BipartiteGraph&, const NodeMask& m) {
    return m.keeps(3) && m.keeps(1) ? 0.9 : 0.1;
  };
  const auto r = distill_minimal_subgraph(g, tau, stub, DistillDirection::grow);
  EXPECT_TRUE(r.flipped);
  EXPECT_EQ(r.remaining, (std::vector<std::size_t>{1, 3}));
  EXPECT_DOUBLE_EQ(r.compression_rate, 50.0);
  EXPECT_EQ(distill_direction_from_string("grow"), DistillDirection::grow);
  EXPECT_THROW(distill_direction_from_string("sideways"), ConfigError);
}

TEST(Distill, RandomStubsRespectBoundsAndAreDeterministic) {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(9);
    const BipartiteGraph g = plain_graph(n);
    const auto tau = draw(n, rng);
    std::vector<double> share(n);
    for (auto& s : share) s = rng.uniform(0.0, 0.4);
    const double base = rng.uniform(0.0, 1.0);
    const MaskedPredictor stub = [&](const BipartiteGraph&, const NodeMask& m) {
      double p = base;
      for (std::size_t i = 0; i < n; ++i)
        if (!m.keeps(i)) p -= share[i];
      return std::clamp(p, 0.01, 0.99);
    };
    const auto r = distill_minimal_subgraph(g, tau, stub);
    EXPECT_GE(r.compression_rate, 0.0);
    if (r.flipped) {
      EXPECT_LE(r.compression_rate, 100.0 * (1.0 - 1.0 / static_cast<double>(n)) + 1e-12);
    } else {
      EXPECT_EQ(r.remaining.size(), n);
    }
    EXPECT_EQ(to_json(distill_minimal_subgraph(g, tau, stub)), to_json(r));
  }
}

TEST(CompressionReport, Aggregates) {
  std::vector<DistillationResult> one(1);
  one[0].compression_rate = 90.0;
  one[0].label = 1;
  const auto s1 = compression_report(one);
  EXPECT_EQ(s1.mean, 90.0);
  EXPECT_EQ(s1.stddev, 0.0);
  EXPECT_EQ(s1.max, 90.0);
  EXPECT_FALSE(s1.mean_critical.has_value());
  EXPECT_EQ(*s1.mean_conspiracy, 90.0);

  std::vector<DistillationResult> two(2);
  two[0].compression_rate = 50.0;
  two[0].label = 0;
  two[1].compression_rate = 100.0;
  two[1].label = 1;
  const auto s2 = compression_report(two);
  EXPECT_EQ(s2.mean, 75.0);
  EXPECT_EQ(s2.max, 100.0);
  EXPECT_EQ(s2.stddev, 25.0);
  EXPECT_EQ(*s2.mean_critical, 50.0);
  EXPECT_EQ(*s2.mean_conspiracy, 100.0);
  EXPECT_TRUE(to_json(s1)["mean_critical"].is_null());
  EXPECT_THROW(compression_report({}), ParameterError);
}

// Loo and training against a real (small, untrained) classifier.
struct ModelFixture {
  ClassifierModel model;
  Corpus corpus;
  std::vector<BipartiteGraph> graphs;

  ModelFixture() : model(make()) {
    SynthSpec s;
    s.size = 24;
    s.seed = 3;
    s.width = 16;
    s.min_length = 10;
    s.max_length = 16;
    s.pattern_length = 3;
    corpus = generate_synthetic_corpus(s);
    for (const auto& d : corpus.documents) graphs.push_back(model.build_graph(d));
  }
  static ClassifierModel make() {
    ModelConfig c;
    c.span.embedding_dim = 16;
    return ClassifierModel::create(c, 4);
  }
};

TEST(LooLabels, RecordsMatchIndependentRecomputation) {
  ModelFixture f;
  const auto all = loo_labels_all(f.graphs, f.model);
  for (std::size_t g = 0; g < f.graphs.size(); ++g) {
    const BipartiteGraph& graph = f.graphs[g];
    const std::size_t n = graph.num_entities();
    ASSERT_EQ(all[g].size(), 2 * n);
    EXPECT_EQ(all[g], loo_labels(graph, f.model));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& fact = all[g][2 * i];
      const auto& ctrl = all[g][2 * i + 1];
      EXPECT_EQ(fact.treatment, 1);
      EXPECT_EQ(ctrl.treatment, 0);
      EXPECT_EQ(fact.y1, all[g][0].y1);
      const double independent = f.model.predict(f.corpus.documents[g]) -
                                 f.model.predict_masked(graph, NodeMask::without(n, {i}));
      EXPECT_NEAR(fact.tau_true, independent, 1e-6);
      EXPECT_GT(fact.y0, 0.0);
      EXPECT_LT(fact.y0, 1.0);
    }
  }
}

TEST(LooLabels, ZeroFeatureNodeHasNoEffect) {
  ModelFixture f;
  std::size_t checked = 0;
  for (BipartiteGraph g : f.graphs) {
    const std::size_t n = g.num_entities();
    if (n < 2) continue;
    Tensor x = g.entities.value();
    const std::size_t node = n / 2;
    for (std::size_t c = 0; c < x.cols(); ++c) x(node, c) = 0.0;
    g.entities = Var::constant(x);
    EXPECT_EQ(loo_labels(g, f.model)[2 * node].tau_true, 0.0);
    ++checked;
  }
  EXPECT_GT(checked, 0u);
}

TEST(LooLabels, SingleNodeControlIsBias) {
  ModelFixture f;
  BipartiteGraph g = f.graphs[0];
  g.entities = ad::slice_rows(g.entities, 0, 1);
  g.incidence = ad::slice_rows(g.incidence, 0, 1);
  const auto r = loo_labels(g, f.model);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[1].y0, sigmoid(f.model.readout_bias()), 1e-15);
}

TEST(TrainHyperSci, EmptyRecordSetRejected) {
  HyperSciEstimator est = HyperSciEstimator::create(EstimatorConfig{}, 1);
  EXPECT_THROW(train_hypersci(est, {}, CausalTrainConfig{}), TrainingError);
}

TEST(TrainHyperSci, ReducesLossDeterministicallyAndLeavesClassifierFrozen) {
  ModelFixture f;
  const std::string before = sha256_hex(encode_checkpoint(f.model.to_checkpoint()));
  const auto records = loo_labels_all(f.graphs, f.model);
  std::vector<CausalSample> samples;
  for (std::size_t g = 0; g < f.graphs.size(); ++g)
    samples.push_back(make_causal_sample(f.graphs[g], records[g], f.corpus.documents[g].label));
  std::vector<const CausalSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  CausalTrainConfig tc;
  tc.epochs = 15;
  tc.batch_size = 4;
  tc.seed = 2;
  HyperSciEstimator a = HyperSciEstimator::create(EstimatorConfig{}, 2);
  HyperSciEstimator b = HyperSciEstimator::create(EstimatorConfig{}, 2);
  const auto ha = train_hypersci(a, ptrs, tc);
  train_hypersci(b, ptrs, tc);
  EXPECT_LT(ha.back().mean_loss, ha.front().mean_loss);
  EXPECT_EQ(encode_checkpoint(a.to_checkpoint()), encode_checkpoint(b.to_checkpoint()));
  EXPECT_EQ(sha256_hex(encode_checkpoint(f.model.to_checkpoint())), before);

  const HyperSciEstimator back = HyperSciEstimator::from_checkpoint(decode_checkpoint(encode_checkpoint(a.to_checkpoint())));
  EXPECT_EQ(estimate_ite(back, samples[0]), estimate_ite(a, samples[0]));
  Checkpoint wrong = a.to_checkpoint();
  wrong.kind = kClassifierKind;
  EXPECT_THROW(HyperSciEstimator::from_checkpoint(wrong), CheckpointError);
}

TEST(MakeCausalSample, RecordCountChecked) {
  ModelFixture f;
  EXPECT_THROW(make_causal_sample(f.graphs[0], {}, 0), DimensionError);
}

}  // namespace
}  // namespace cng
