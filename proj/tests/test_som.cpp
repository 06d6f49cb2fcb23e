#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "empsoa/errors.hpp"
#include "empsoa/ops.hpp"
#include "empsoa/som.hpp"
#include "oracle.hpp"
#include "support.hpp"

using namespace empsoa;
using empsoa::oracle::Mat;

namespace {

struct Fixture {
  ParameterStore store;
  std::mt19937_64 rng{31};
  std::unique_ptr<SelfOtherModulation> som;
  std::size_t d;

  explicit Fixture(std::size_t width = 8, std::size_t heads = 2, EmptySlice empty = EmptySlice::kZero) : d(width) {
    som = std::make_unique<SelfOtherModulation>(SomConfig{heads, empty}, width, ParamBuilder(store, rng, "som"));
    empsoa::testing::randomize(store, rng);
  }
  const Tensor& p(const std::string& path) const { return store.get("som." + path); }
};

// Five tokens: self owns 1 and 2, other owns 0, 3, 4.
ContextStates context(std::size_t d, std::mt19937_64& rng, bool with_self = true) {
  ContextStates c;
  c.states = empsoa::testing::random_tensor({5, d}, rng);
  c.content_length = 5;
  c.self_mask = {0, 1, 1, 0, 0};
  c.other_mask = {1, 0, 0, 1, 1};
  if (!with_self) c.self_mask.assign(5, 0), c.other_mask.assign(5, 1);
  return c;
}

Mat affine(const Mat& x, const Tensor& w, const Tensor& b) { return oracle::plus_row(oracle::mm(x, oracle::of(w)), oracle::of(b)); }

}  // namespace

TEST_CASE("fuse_states against a hand-evaluated gate") {
  Fixture f(4, 2);
  std::mt19937_64 rng(1);
  const Tensor se = empsoa::testing::random_tensor({1, 4}, rng), sc = empsoa::testing::random_tensor({1, 4}, rng);
  const Tensor oe = empsoa::testing::random_tensor({1, 4}, rng), oc = empsoa::testing::random_tensor({1, 4}, rng);
  const auto pair = f.som->fuse_states(se, sc, oe, oc);
  auto expect = [&](const Tensor& e, const Tensor& c, const std::string& name, const Tensor& got) {
    const Tensor& w = f.p(name + ".w");
    const Tensor& b = f.p(name + ".b");
    for (std::size_t j = 0; j < 4; ++j) {
      long double z = b.data()[j];
      for (std::size_t i = 0; i < 4; ++i) z += static_cast<long double>(e.at(0, i)) * w.at(i, j);
      for (std::size_t i = 0; i < 4; ++i) z += static_cast<long double>(c.at(0, i)) * w.at(4 + i, j);
      const long double g = 1.0L / (1.0L + std::exp(-z));
      CHECK(got.at(0, j) == doctest::Approx(static_cast<double>(g * e.at(0, j) + (1 - g) * c.at(0, j))).epsilon(1e-13));
    }
  };
  expect(se, sc, "fuse_self", pair.S);
  expect(oe, oc, "fuse_other", pair.O);
  for (double g : pair.gate_s.data()) CHECK((g > 0.0 && g < 1.0));

  SUBCASE("equal inputs give the input back") {
    const auto same = f.som->fuse_states(se, se, oc, oc);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(same.S.at(0, j) == doctest::Approx(se.at(0, j)).epsilon(1e-14));
      CHECK(same.O.at(0, j) == doctest::Approx(oc.at(0, j)).epsilon(1e-14));
    }
  }
  SUBCASE("a saturated gate picks the emotional state") {
    Tensor w = f.p("fuse_self.w"), b = f.p("fuse_self.b");
    for (auto& x : w.mutable_data()) x = 0.0;
    for (auto& x : b.mutable_data()) x = 50.0;
    const Tensor s = f.som->fuse_self(se, sc);
    for (std::size_t j = 0; j < 4; ++j) CHECK(s.at(0, j) == doctest::Approx(se.at(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("refine_context against concat and a two-layer FFN") {
  Fixture f(4, 2);
  std::mt19937_64 rng(2);
  const auto ctx = context(4, rng);
  AwarenessPair pair{empsoa::testing::random_tensor({1, 4}, rng), empsoa::testing::random_tensor({1, 4}, rng), {}, {}};
  const auto r = f.som->refine_context(ctx, pair);
  auto oracle_slice = [&](const std::vector<std::size_t>& pos, const Tensor& a, const std::string& name) {
    Mat x(pos.size(), 8);
    for (std::size_t i = 0; i < pos.size(); ++i)
      for (std::size_t j = 0; j < 4; ++j) x(i, j) = a.at(0, j), x(i, 4 + j) = ctx.states.at(pos[i], j);
    const Mat hidden = oracle::relu(affine(x, f.p(name + ".in.w"), f.p(name + ".in.b")));
    return affine(hidden, f.p(name + ".out.w"), f.p(name + ".out.b"));
  };
  CHECK(r.self.rows() == 2);
  CHECK(r.other.rows() == 3);
  CHECK(oracle::max_abs_diff(oracle_slice({1, 2}, pair.S, "ffn_self"), r.self) < 1e-12);
  CHECK(oracle::max_abs_diff(oracle_slice({0, 3, 4}, pair.O, "ffn_other"), r.other) < 1e-12);

  SUBCASE("a zero FFN leaves only the output bias") {
    for (const char* w : {"ffn_self.in.w", "ffn_self.in.b", "ffn_self.out.w"}) {
      Tensor t = f.p(w);
      for (auto& x : t.mutable_data()) x = 0.0;
    }
    const auto z = f.som->refine_context(ctx, pair);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(z.self.at(i, j) == f.p("ffn_self.out.b").data()[j]);
  }
  SUBCASE("no self tokens") {
    const auto first_turn = f.som->refine_context(context(4, rng, false), pair);
    CHECK(first_turn.self.rows() == 0);
    CHECK(first_turn.other.rows() == 5);
  }
}

TEST_CASE("modulate against dense cross-attention") {
  Fixture f;
  std::mt19937_64 rng(3);
  // Three query tokens, two keys per branch.
  ContextStates ctx;
  ctx.states = empsoa::testing::random_tensor({3, 8}, rng);
  ctx.content_length = 3;
  RefinedContext refined{empsoa::testing::random_tensor({2, 8}, rng), empsoa::testing::random_tensor({2, 8}, rng)};
  std::vector<AttentionTrace> traces;
  const auto m = f.som->modulate(ctx, refined, &traces);

  auto branch = [&](const Tensor& keys, const std::string& side) {
    using oracle::of;
    const Mat wo = of(f.p("cross_" + side + ".wo"));
    const Mat h = of(ctx.states);
    const Mat a = oracle::attention(h, of(keys), of(f.p("cross_" + side + ".wq")), of(f.p("cross_" + side + ".wk")),
                                    of(f.p("cross_" + side + ".wv")), &wo, 2, {}, true);
    return oracle::layer_norm(oracle::plus(h, a), of(f.p("norm_" + side + ".gamma")), of(f.p("norm_" + side + ".beta")));
  };
  const Mat cs = branch(refined.self, "self"), co = branch(refined.other, "other");
  CHECK(oracle::max_abs_diff(cs, m.C_s) < 1e-12);
  CHECK(oracle::max_abs_diff(co, m.C_o) < 1e-12);
  Mat cat(3, 16);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 8; ++j) cat(i, j) = cs(i, j), cat(i, 8 + j) = co(i, j);
  const Mat g = oracle::sigmoid(affine(cat, f.p("gate.w"), f.p("gate.b")));
  Mat cso(3, 8);
  for (std::size_t i = 0; i < cso.v.size(); ++i) cso.v[i] = g.v[i] * cs.v[i] + (1 - g.v[i]) * co.v[i];
  CHECK(oracle::max_abs_diff(cso, m.C_so) < 1e-12);
  for (double x : m.gate.data()) CHECK((x > 0.0 && x < 1.0));
  for (const auto& t : traces)
    for (const auto& p : t.heads)
      for (std::size_t i = 0; i < 3; ++i) CHECK(p.at(i, 0) + p.at(i, 1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("modulation edge cases") {
  Fixture f;
  std::mt19937_64 rng(4);
  ContextStates ctx;
  ctx.states = empsoa::testing::random_tensor({4, 8}, rng);
  ctx.content_length = 4;

  SUBCASE("a single key hands every query its value projection") {
    // With one key the softmax is 1, so C^s = LN(H + v·wo) for every row.
    const Tensor key = empsoa::testing::random_tensor({1, 8}, rng);
    const auto m = f.som->modulate(ctx, {key, empsoa::testing::random_tensor({2, 8}, rng)});
    using oracle::of;
    const Mat v = oracle::mm(oracle::mm(of(key), of(f.p("cross_self.wv"))), of(f.p("cross_self.wo")));
    Mat expect(4, 8);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 8; ++j) expect(i, j) = ctx.states.at(i, j) + v(0, j);
    expect = oracle::layer_norm(expect, of(f.p("norm_self.gamma")), of(f.p("norm_self.beta")));
    CHECK(oracle::max_abs_diff(expect, m.C_s) < 1e-12);
  }
  SUBCASE("an empty self slice gives a zero branch, still gated") {
    const auto m = f.som->modulate(ctx, {Tensor::zeros({0, 8}), empsoa::testing::random_tensor({3, 8}, rng)});
    for (double x : m.C_s.data()) CHECK(x == 0.0);
    for (std::size_t i = 0; i < m.C_so.size(); ++i)
      CHECK(m.C_so.data()[i] == doctest::Approx((1 - m.gate.data()[i]) * m.C_o.data()[i]).epsilon(1e-14));
  }
  SUBCASE("mirror convention hands over the other branch") {
    Fixture mf(8, 2, EmptySlice::kMirror);
    const Tensor other = empsoa::testing::random_tensor({3, 8}, rng);
    const auto zero = f.som->modulate(ctx, {Tensor::zeros({0, 8}), other});
    const auto m = mf.som->modulate(ctx, {Tensor::zeros({0, 8}), other});
    CHECK(m.C_so.to_vector() == m.C_o.to_vector());
    CHECK(m.C_s.to_vector() == m.C_o.to_vector());
    // Same seed, same parameters: the other branch itself is unaffected.
    CHECK(m.C_o.to_vector() == zero.C_o.to_vector());
    CHECK_THROWS_AS(mf.som->modulate(ctx, {Tensor::zeros({0, 8}), Tensor::zeros({0, 8})}), ContractError);
    CHECK(parse_empty_slice("mirror") == EmptySlice::kMirror);
    CHECK_THROWS_AS(parse_empty_slice("skip"), ConfigError);
  }
  SUBCASE("both empty") {
    CHECK_THROWS_AS(f.som->modulate(ctx, {Tensor::zeros({0, 8}), Tensor::zeros({0, 8})}), ContractError);
  }
  SUBCASE("equal branches pass through the gate") {
    const Tensor x = empsoa::testing::random_tensor({4, 8}, rng);
    const Tensor g = sigmoid(empsoa::testing::random_tensor({4, 8}, rng));
    const Tensor y = gated_blend(g, x, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-14));
  }
}

TEST_CASE("SOM gradients match finite differences") {
  Fixture f;
  std::mt19937_64 rng(5);
  auto ctx = context(8, rng);
  ctx.states.set_requires_grad(true);
  Tensor se = empsoa::testing::random_param({1, 8}, rng), sc = empsoa::testing::random_param({1, 8}, rng);
  Tensor oe = empsoa::testing::random_param({1, 8}, rng), oc = empsoa::testing::random_param({1, 8}, rng);
  const Tensor probe = empsoa::testing::random_tensor({5, 8}, rng);
  std::vector<std::string> names;
  auto params = empsoa::testing::all_params(f.store, &names);
  for (auto [t, n] : {std::pair{ctx.states, "H"}, {se, "S^e"}, {sc, "S^c"}, {oe, "O^e"}, {oc, "O^c"}}) {
    params.push_back(t);
    names.push_back(n);
  }
  const auto report = empsoa::testing::grad_check(
      params,
      [&] {
        const auto pair = f.som->fuse_states(se, sc, oe, oc);
        return sum(mul(f.som->modulate(ctx, f.som->refine_context(ctx, pair)).C_so, probe));
      },
      1e-4, 1e-6, names);
  INFO(report.worst);
  CHECK(report.max_rel_error < 1e-4);
}
