#include <cmath>

#include "doctest.h"
#include "mbtf/nn/adam.hpp"
#include "mbtf/nn/layers.hpp"
#include "mbtf/nn/ops.hpp"
#include "support/oracles.hpp"

using namespace mbtf::nn;
using mbtf::Rng;

namespace {

Var<double> leaf(Tensor<double> t) { return make_leaf(std::move(t), true); }

// Scalar probe loss: <out, R> for a fixed random R.
Var<double> probe(Graph<double>& g, const Var<double>& out, const Tensor<double>& r) {
  return sum(g, mul(g, out, g.constant(r)));
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const Tensor<double>& a) {
  double m = 0;
  for (double v : a.vec()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("conv2d: 1x1 identity and scaling") {
  Rng rng(1);
  auto x = oracle::random_tensor({3, 5, 7}, rng);
  Tensor<double> w({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w[static_cast<std::size_t>(c * 3 + c)] = 1.0;
  const auto g = ConvGeometry::same(1, 1, 1, 1, 1, false);
  CHECK(conv2d_forward(x, w, nullptr, g) == x);
  for (auto& e : w.vec()) e *= 2.0;
  auto y = conv2d_forward(x, w, nullptr, g);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == 2.0 * x[i]);
}

TEST_CASE("conv2d matches the nested-loop oracle, dilation (1,4)") {
  Rng rng(2);
  auto x = oracle::random_tensor({4, 9, 9}, rng);
  auto w = oracle::random_tensor({5, 4, 3, 3}, rng);
  auto b = oracle::random_tensor({5}, rng);
  for (bool causal : {false, true}) {
    const auto g = ConvGeometry::same(3, 3, 1, 1, 4, causal);
    CHECK(max_abs_diff(conv2d_forward(x, w, &b, g), oracle::direct_conv2d(x, w, &b, g)) < 1e-12);
  }
}

TEST_CASE("conv2d shape errors name the offending dimension") {
  Rng rng(3);
  auto x = oracle::random_tensor({3, 5, 5}, rng);
  auto w = oracle::random_tensor({2, 4, 3, 3}, rng);
  const auto g = ConvGeometry::same(3, 3, 1, 1, 1, false);
  CHECK_THROWS_WITH_AS(conv2d_forward(x, w, nullptr, g), doctest::Contains("input channel"),
                       mbtf::ValidationError);
}

TEST_CASE("causal conv2d ignores future frames") {
  Rng rng(4);
  auto x = oracle::random_tensor({2, 6, 12}, rng);
  auto w = oracle::random_tensor({3, 2, 3, 3}, rng);
  const auto g = ConvGeometry::same(3, 3, 1, 1, 2, true);
  auto y0 = conv2d_forward(x, w, nullptr, g);
  const int t0 = 5;
  for (int c = 0; c < 2; ++c)
    for (int f = 0; f < 6; ++f)
      for (int t = t0 + 1; t < 12; ++t) x.at(c, f, t) += 3.0;
  auto y1 = conv2d_forward(x, w, nullptr, g);
  for (int c = 0; c < 3; ++c)
    for (int f = 0; f < 6; ++f)
      for (int t = 0; t <= t0; ++t) CHECK(y0.at(c, f, t) == y1.at(c, f, t));
}

TEST_CASE("conv_transpose2d is the adjoint of conv2d") {
  Rng rng(5);
  for (bool causal : {false, true}) {
    for (int sf : {1, 2}) {
      auto geom = ConvGeometry::transposed_same(5, 2, sf, 1, 1, causal);
      const int f = 9, t = 7;
      auto x = oracle::random_tensor({3, f, t}, rng);
      auto w = oracle::random_tensor({4, 3, 5, 2}, rng);
      auto y = oracle::random_tensor({4, geom.out_f(f), geom.out_t(t)}, rng);
      auto cx = conv2d_forward(x, w, nullptr, geom);
      auto cty = conv2d_input_adjoint(y, w, geom, 3, f, t);
      const double lhs = dot(cx, y), rhs = dot(x, cty);
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("conv_transpose2d: stride-1 identity kernel") {
  Rng rng(6);
  Graph<double> g;
  auto x = g.constant(oracle::random_tensor({2, 4, 5}, rng));
  Tensor<double> w({2, 2, 1, 1});
  w[0] = 1;
  w[3] = 1;
  auto y = conv_transpose2d(g, x, g.constant(w), Var<double>(), ConvGeometry::same(1, 1, 1, 1, 1, false), 4, 5);
  CHECK(y->value == x->value);
}

TEST_CASE("conv_transpose2d output size convention for frequency stride 2") {
  // For kernel 5, pad (2,2), stride 2: an input of F frames is reached from
  // outputs of size 2F-1 and 2F; nothing else maps back to F.
  const auto geom = ConvGeometry::transposed_same(5, 1, 2, 1, 1, false);
  for (int f = 1; f <= 8; ++f) {
    std::vector<int> valid;
    for (int out = 1; out <= 3 * f + 4; ++out) {
      if (geom.out_f(out) == f) valid.push_back(out);
    }
    REQUIRE(valid.size() == 2);
    CHECK(valid[0] == 2 * f - 1);
    CHECK(valid[1] == 2 * f);
  }
  CHECK(geom.out_f(5) == 3);
  CHECK(geom.out_f(6) == 3);
  Graph<double> g;
  Rng rng(7);
  auto x = g.constant(oracle::random_tensor({1, 3, 2}, rng));
  auto w = g.constant(oracle::random_tensor({1, 1, 5, 1}, rng));
  CHECK(conv_transpose2d(g, x, w, Var<double>(), geom, 5, 2)->value.dim(1) == 5);
  CHECK(conv_transpose2d(g, x, w, Var<double>(), geom, 6, 2)->value.dim(1) == 6);
  CHECK_THROWS_AS(conv_transpose2d(g, x, w, Var<double>(), geom, 7, 2), mbtf::ValidationError);
}

TEST_CASE("GRU: zero weights give zero output") {
  Graph<double> g;
  GruWeights<double> w{leaf(Tensor<double>({6, 3})), leaf(Tensor<double>({6, 2})), leaf(Tensor<double>({6})),
                       leaf(Tensor<double>({6}))};
  Rng rng(8);
  auto x = g.constant(oracle::random_tensor({1, 4, 3}, rng));
  auto y = gru(g, x, w, Var<double>());
  CHECK(max_abs(y->value) == 0.0);
}

TEST_CASE("GRU: single step equals hand-computed cell") {
  // D = H = 2, fixed weights.
  const double wih[6][2] = {{0.1, -0.2}, {0.3, 0.4}, {-0.5, 0.2}, {0.05, 0.1}, {0.7, -0.3}, {0.2, 0.6}};
  const double whh[6][2] = {{0.2, 0.1}, {-0.1, 0.3}, {0.4, -0.2}, {0.1, 0.1}, {-0.3, 0.5}, {0.2, -0.4}};
  const double bih[6] = {0.01, -0.02, 0.03, 0.0, 0.1, -0.1};
  const double bhh[6] = {-0.01, 0.02, 0.0, 0.05, -0.05, 0.02};
  const double xin[2] = {0.5, -1.0};
  const double h0[2] = {0.3, -0.6};

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  double expected[2];
  for (int k = 0; k < 2; ++k) {
    auto gi = [&](int row) { return wih[row][0] * xin[0] + wih[row][1] * xin[1] + bih[row]; };
    auto gh = [&](int row) { return whh[row][0] * h0[0] + whh[row][1] * h0[1] + bhh[row]; };
    const double r = sig(gi(k) + gh(k));
    const double z = sig(gi(2 + k) + gh(2 + k));
    const double n = std::tanh(gi(4 + k) + r * gh(4 + k));
    expected[k] = (1 - z) * n + z * h0[k];
  }

  auto flat = [](const double (*m)[2], int rows) {
    Tensor<double> t({rows, 2});
    for (int i = 0; i < rows; ++i) {
      t[static_cast<std::size_t>(2 * i)] = m[i][0];
      t[static_cast<std::size_t>(2 * i + 1)] = m[i][1];
    }
    return t;
  };
  GruWeights<double> w{leaf(flat(wih, 6)), leaf(flat(whh, 6)), leaf(Tensor<double>({6}, {bih, bih + 6})),
                       leaf(Tensor<double>({6}, {bhh, bhh + 6}))};
  Graph<double> g;
  auto y = gru(g, g.constant(Tensor<double>({1, 1, 2}, {xin[0], xin[1]})), w,
               g.constant(Tensor<double>({1, 2}, {h0[0], h0[1]})));
  CHECK(y->value[0] == doctest::Approx(expected[0]).epsilon(1e-14));
  CHECK(y->value[1] == doctest::Approx(expected[1]).epsilon(1e-14));
}

TEST_CASE("GRU: chunked calls with carried state equal one call") {
  Rng rng(9);
  ParamStore<double> store;
  GruLayer<double> layer(store, "gru", 3, 4, rng);
  Graph<double> g;
  auto x = oracle::random_tensor({1, 10, 3}, rng);
  auto full = layer(g, g.constant(x));
  auto part = [&](int b, int e) {
    Tensor<double> t({1, e - b, 3});
    std::copy(x.vec().begin() + b * 3, x.vec().begin() + e * 3, t.vec().begin());
    return g.constant(t);
  };
  auto first = layer(g, part(0, 6));
  Tensor<double> h({1, 4});
  std::copy_n(first->value.ptr() + 5 * 4, 4, h.ptr());
  auto second = layer(g, part(6, 10), g.constant(h));
  for (int t = 0; t < 6; ++t)
    for (int k = 0; k < 4; ++k) CHECK(full->value[static_cast<std::size_t>(t * 4 + k)] == first->value[static_cast<std::size_t>(t * 4 + k)]);
  for (int t = 6; t < 10; ++t)
    for (int k = 0; k < 4; ++k)
      CHECK(full->value[static_cast<std::size_t>(t * 4 + k)] == second->value[static_cast<std::size_t>((t - 6) * 4 + k)]);
}

TEST_CASE("elementwise layers") {
  Graph<double> g;
  Rng rng(10);
  auto x = g.constant(oracle::random_tensor({3, 4, 5}, rng));
  SUBCASE("prelu with slope 1 is identity") {
    auto y = prelu(g, x, g.constant(Tensor<double>({3}, 1.0)));
    CHECK(y->value == x->value);
  }
  SUBCASE("sigmoid(0) = 0.5") {
    auto y = sigmoid(g, g.constant(Tensor<double>({4}, 0.0)));
    for (double v : y->value.vec()) CHECK(v == 0.5);
  }
  SUBCASE("batch norm with batch statistics standardizes each channel") {
    auto big = g.constant(oracle::random_tensor({3, 8, 9}, rng, 20.0));
    Tensor<double> rm({3}), rv({3}, 1.0);
    BatchNormOptions opt;
    opt.training = true;
    auto y = batch_norm(g, big, g.constant(Tensor<double>({3}, 1.0)), g.constant(Tensor<double>({3})), rm, rv, opt);
    for (int c = 0; c < 3; ++c) {
      double m = 0, v = 0;
      for (int i = 0; i < 72; ++i) m += y->value[static_cast<std::size_t>(c * 72 + i)];
      m /= 72;
      for (int i = 0; i < 72; ++i) v += std::pow(y->value[static_cast<std::size_t>(c * 72 + i)] - m, 2);
      v /= 72;
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-6);
    }
    // running statistics moved toward the batch with momentum 0.99
    CHECK(rv[0] != 1.0);
  }
}

TEST_CASE("backward basics") {
  Graph<double> g;
  auto x = leaf(Tensor<double>({4}, {1, -2, 3, 0.5}));
  auto loss = sum(g, scale(g, x, 2.0));
  g.backward(loss);
  for (double v : x->grad.vec()) CHECK(v == 2.0);

  Graph<double> empty;
  CHECK_THROWS_AS(empty.backward(loss), mbtf::StateError);
  CHECK_THROWS_AS(empty.backward(x), mbtf::StateError);
}

TEST_CASE("finite-difference gradient checks per layer kind") {
  Rng rng(11);
  const double tol = 1e-4;

  auto run = [&](const std::vector<Var<double>>& leaves, const std::function<Var<double>(Graph<double>&)>& build) {
    auto loss = [&] {
      Graph<double> g;
      return build(g)->value[0];
    };
    auto analytic = [&] {
      Graph<double> g;
      g.backward(build(g));
    };
    return oracle::grad_check(leaves, loss, analytic);
  };

  SUBCASE("conv2d with stride, dilation, causal padding, groups") {
    struct Case { ConvGeometry g; int ci, co; };
    std::vector<Case> cases = {
        {ConvGeometry::same(3, 3, 1, 1, 2, true), 2, 3},
        {ConvGeometry::same(5, 2, 2, 1, 1, false), 2, 2},
        {ConvGeometry::same(3, 3, 1, 2, 1, false), 3, 2},
        {ConvGeometry::same(1, 3, 1, 1, 2, true, 2), 2, 2},
    };
    for (const auto& c : cases) {
      auto x = leaf(oracle::random_tensor({c.ci, 7, 6}, rng));
      auto w = leaf(oracle::random_tensor({c.co, c.ci / c.g.groups, c.g.kf, c.g.kt}, rng));
      auto b = leaf(oracle::random_tensor({c.co}, rng));
      auto r = oracle::random_tensor({c.co, c.g.out_f(7), c.g.out_t(6)}, rng);
      auto res = run({x, w, b}, [&](Graph<double>& g) { return probe(g, conv2d(g, x, w, b, c.g), r); });
      CHECK(res.max_rel_err < tol);
    }
  }
  SUBCASE("conv_transpose2d") {
    for (bool causal : {true, false}) {
      const auto geom = ConvGeometry::transposed_same(5, 2, 2, 1, 1, causal);
      auto x = leaf(oracle::random_tensor({3, 4, 5}, rng));
      auto w = leaf(oracle::random_tensor({3, 2, 5, 2}, rng));
      auto b = leaf(oracle::random_tensor({2}, rng));
      auto r = oracle::random_tensor({2, 7, 5}, rng);
      auto res = run({x, w, b}, [&](Graph<double>& g) { return probe(g, conv_transpose2d(g, x, w, b, geom, 7, 5), r); });
      CHECK(res.max_rel_err < tol);
    }
  }
  SUBCASE("gru forward and reverse") {
    for (bool reverse : {false, true}) {
      GruWeights<double> w{leaf(oracle::random_tensor({9, 2}, rng, 0.5)), leaf(oracle::random_tensor({9, 3}, rng, 0.5)),
                           leaf(oracle::random_tensor({9}, rng, 0.5)), leaf(oracle::random_tensor({9}, rng, 0.5))};
      auto x = leaf(oracle::random_tensor({2, 5, 2}, rng));
      auto h0 = leaf(oracle::random_tensor({2, 3}, rng));
      auto r = oracle::random_tensor({2, 5, 3}, rng);
      auto res = run({x, h0, w.w_ih, w.w_hh, w.b_ih, w.b_hh},
                     [&](Graph<double>& g) { return probe(g, gru(g, x, w, h0, reverse), r); });
      CHECK(res.max_rel_err < tol);
    }
  }
  SUBCASE("batch norm, training and inference") {
    for (bool training : {true, false}) {
      auto x = leaf(oracle::random_tensor({2, 3, 4}, rng));
      auto gm = leaf(oracle::random_tensor({2}, rng));
      auto bt = leaf(oracle::random_tensor({2}, rng));
      Tensor<double> rm({2}, 0.1), rv({2}, 1.5);
      auto r = oracle::random_tensor({2, 3, 4}, rng);
      auto res = run({x, gm, bt}, [&](Graph<double>& g) {
        Tensor<double> m = rm, v = rv;
        BatchNormOptions opt;
        opt.training = training;
        return probe(g, batch_norm(g, x, gm, bt, m, v, opt), r);
      });
      CHECK(res.max_rel_err < tol);
    }
  }
  SUBCASE("prelu, sigmoid, tanh") {
    auto x = leaf(oracle::random_tensor({2, 3, 4}, rng));
    auto a = leaf(Tensor<double>({2}, {0.25, -0.1}));
    auto r = oracle::random_tensor({2, 3, 4}, rng);
    CHECK(run({x, a}, [&](Graph<double>& g) { return probe(g, prelu(g, x, a), r); }).max_rel_err < tol);
    CHECK(run({x}, [&](Graph<double>& g) { return probe(g, sigmoid(g, x), r); }).max_rel_err < tol);
    CHECK(run({x}, [&](Graph<double>& g) { return probe(g, tanh(g, x), r); }).max_rel_err < tol);
  }
  SUBCASE("linear, complex mask, broadcast, shape plumbing") {
    auto x = leaf(oracle::random_tensor({3, 4}, rng));
    auto w = leaf(oracle::random_tensor({5, 4}, rng));
    auto b = leaf(oracle::random_tensor({5}, rng));
    auto r = oracle::random_tensor({3, 5}, rng);
    CHECK(run({x, w, b}, [&](Graph<double>& g) { return probe(g, linear(g, x, w, b), r); }).max_rel_err < tol);

    auto m = leaf(oracle::random_tensor({4, 3, 2}, rng));
    auto s = leaf(oracle::random_tensor({4, 3, 2}, rng));
    auto r2 = oracle::random_tensor({4, 3, 2}, rng);
    CHECK(run({m, s}, [&](Graph<double>& g) { return probe(g, apply_complex_mask(g, m, s), r2); }).max_rel_err < tol);

    auto a = leaf(oracle::random_tensor({4, 3}, rng));
    CHECK(run({a, s}, [&](Graph<double>& g) { return probe(g, mul_broadcast_last(g, a, s), r2); }).max_rel_err < tol);

    auto r3 = oracle::random_tensor({2, 4, 3}, rng);
    CHECK(run({s}, [&](Graph<double>& g) { return probe(g, permute3(g, s, {2, 0, 1}), r3); }).max_rel_err < tol);
    auto r4 = oracle::random_tensor({4, 3, 3}, rng);
    CHECK(run({s, m}, [&](Graph<double>& g) {
            auto c = concat_last(g, {s, slice_last(g, m, 1, 2)});
            return probe(g, c, r4);
          }).max_rel_err < tol);
    auto r5 = oracle::random_tensor({5, 3, 2}, rng);
    CHECK(run({s, m}, [&](Graph<double>& g) {
            return probe(g, concat0(g, {s, slice0(g, m, 1, 2)}), r5);
          }).max_rel_err < tol);
    CHECK(run({s, m}, [&](Graph<double>& g) { return mse(g, s, m); }).max_rel_err < tol);
  }
}

TEST_CASE("Adam") {
  AdamConfig cfg;
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor<double> p({3}, {1.0, -2.0, 0.5});
    const auto before = p;
    AdamMoments<double> st;
    adam_step(p, Tensor<double>({3}), st, 0.1, cfg);
    CHECK(p == before);
  }
  SUBCASE("first step moves by about lr against the gradient sign") {
    Tensor<double> p({3}, {0.0, 0.0, 0.0});
    AdamMoments<double> st;
    adam_step(p, Tensor<double>({3}, {0.3, -5.0, 1e-3}), st, 0.01, cfg);
    CHECK(p[0] == doctest::Approx(-0.01).epsilon(1e-4));
    CHECK(p[1] == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(p[2] == doctest::Approx(-0.01).epsilon(1e-4));
  }
  SUBCASE("minimizes (w-3)^2") {
    Tensor<double> w({1}, 0.0);
    AdamMoments<double> st;
    for (int i = 0; i < 200; ++i) adam_step(w, Tensor<double>({1}, 2.0 * (w[0] - 3.0)), st, 0.1, cfg);
    CHECK(std::abs(w[0] - 3.0) < 0.05);
  }
}

TEST_CASE("weights container round trip is bit-exact") {
  Rng rng(12);
  std::map<std::string, Tensor<float>> t;
  t["a.weight"] = oracle::random_tensor({2, 3, 1, 1}, rng).cast<float>();
  t["b.bias"] = Tensor<float>({4}, {0.0f, -0.0f, 1e-38f, 3.4e38f});
  ModelWeights w(t, {{"topology", "x"}, {"lambda_t", "0.5"}});
  auto bytes = w.serialize();
  auto back = ModelWeights::deserialize(bytes);
  CHECK(back == w);
  CHECK(back.serialize() == bytes);
  CHECK(back.meta("lambda_t").value() == "0.5");
  bytes[0] = 'X';
  CHECK_THROWS_AS(ModelWeights::deserialize(bytes), mbtf::DataError);
  auto trunc = w.serialize();
  trunc.resize(trunc.size() - 3);
  CHECK_THROWS_AS(ModelWeights::deserialize(trunc), mbtf::DataError);
}
