#include <cmath>

#include "doctest.h"
#include "speechut/objectives.hpp"
#include "support.hpp"
#include "toy.hpp"

using namespace speechut;
using namespace testsup;

namespace {

// Straight-line reimplementations of the loss heads from raw buffers. These
// never touch the tape ops and serve as the independent evaluation oracle.
double oracle_s2u_h(const Tensor& h, const Tensor& ws, const Tensor& e, double tau,
                    const std::vector<int>& z, const std::vector<int64_t>& mask) {
  const int64_t t_len = h.rows(), d = h.cols(), de = ws.rows(), k = e.rows();
  double total = 0.0;
  for (int64_t m : mask) {
    std::vector<double> proj(static_cast<size_t>(de), 0.0);
    for (int64_t a = 0; a < de; ++a)
      for (int64_t b = 0; b < d; ++b) proj[static_cast<size_t>(a)] += ws.at(a, b) * h.at(m, b);
    double pn = 0.0;
    for (double v : proj) pn += v * v;
    pn = std::sqrt(pn);
    std::vector<double> logits(static_cast<size_t>(k));
    for (int64_t c = 0; c < k; ++c) {
      double dot = 0.0, en = 0.0;
      for (int64_t a = 0; a < de; ++a) {
        dot += proj[static_cast<size_t>(a)] * e.at(c, a);
        en += e.at(c, a) * e.at(c, a);
      }
      logits[static_cast<size_t>(c)] = dot / (pn * std::sqrt(en)) / tau;
    }
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    total -= logits[static_cast<size_t>(z[static_cast<size_t>(m)])] - lse;
  }
  (void)t_len;
  return total;
}

double oracle_wu_nll(const Tensor& c, const Tensor& wu, const std::vector<int>& z,
                     const std::vector<int64_t>& mask) {
  const int64_t d = c.cols(), k = wu.rows();
  double total = 0.0;
  for (int64_t m : mask) {
    std::vector<double> logits(static_cast<size_t>(k), 0.0);
    for (int64_t a = 0; a < k; ++a)
      for (int64_t b = 0; b < d; ++b) logits[static_cast<size_t>(a)] += wu.at(a, b) * c.at(m, b);
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    total -= logits[static_cast<size_t>(z[static_cast<size_t>(m)])] - lse;
  }
  return total;
}

double oracle_ce(const Tensor& logits, const std::vector<int>& targets) {
  double total = 0.0;
  for (int64_t i = 0; i < logits.rows(); ++i) {
    double mx = logits.at(i, 0);
    for (int64_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits.at(i, j));
    double lse = 0.0;
    for (int64_t j = 0; j < logits.cols(); ++j) lse += std::exp(logits.at(i, j) - mx);
    lse = mx + std::log(lse);
    total -= logits.at(i, targets[static_cast<size_t>(i)]) - lse;
  }
  return total;
}

}  // namespace

TEST_CASE("combine follows the weighted-sum identity") {
  SUBCASE("paper ASR weights") {
    LossBreakdown b = combine(1.2, 0.8, 0.7, 0.3, 0.4, 0.1, 0.5);
    CHECK(b.total == doctest::Approx(2.0 + 0.1 * 1.0 + 0.5 * 0.4).epsilon(1e-15));
    CHECK(std::abs(b.total - ((b.s2u_h + b.s2u_c) + b.lambda * (b.u2t_ce + b.u2t_ctc) + b.gamma * b.mum)) <
          1e-12);
  }
  SUBCASE("2.0 + 0.1*1.0 + 0.5*0.4 = 2.3 at ASR weights") {
    // s2u split across its two terms, u2t across CE and CTC
    LossBreakdown b = combine(1.0, 1.0, 0.6, 0.4, 0.4, 0.1, 0.5);
    CHECK(b.total == doctest::Approx(2.3).epsilon(1e-15));
  }
  SUBCASE("ST weights give 3.2 on the same parts") {
    LossBreakdown b = combine(1.0, 1.0, 0.6, 0.4, 0.4, 1.0, 0.5);
    CHECK(b.total == doctest::Approx(3.2).epsilon(1e-15));
  }
  SUBCASE("zero weights reduce the total to S2U") {
    LossBreakdown b = combine(1.5, 0.5, 123.0, 45.0, 67.0, 0.0, 0.0);
    CHECK(b.total == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("NaN parts are a divergence error") {
    CHECK_THROWS_AS((void)combine(std::nan(""), 0, 0, 0, 0, 0.1, 0.5), NumericError);
    CHECK_THROWS_AS((void)combine(0, 0, kPosInf, 0, 0, 0.1, 0.5), NumericError);
  }
}

TEST_CASE("loss_s2u") {
  Model m(toy_config(), 101);
  Rng rng(103);
  S2UExample ex = toy_s2u_example(m.cfg, 8, rng);

  SUBCASE("empty mask gives zero loss") {
    Tape t;
    Var x = m.speech_prenet(t, ex.wave);
    Var h = m.speech_encoder(t, x);
    Var c = m.unit_encoder(t, h);
    SpanSet empty;
    empty.length = t.val(h).rows();
    S2ULoss l = loss_s2u(t, m, h, c, ex.frame_units, empty);
    CHECK(t.val(l.h_term).scalar_value() == 0.0);
    CHECK(t.val(l.c_term).scalar_value() == 0.0);
  }
  SUBCASE("K=1 predicts with certainty, loss 0") {
    ModelConfig cfg1 = toy_config();
    cfg1.unit_vocab = 1;
    cfg1.d_unit_embed = 2;
    Model m1(cfg1, 107);
    Rng rng1(109);
    S2UExample ex1 = toy_s2u_example(cfg1, 6, rng1);
    Tape t;
    auto fwd = s2u_forward(t, m1, ex1, 5, true);
    CHECK(t.val(fwd.loss.h_term).scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(t.val(fwd.loss.c_term).scalar_value() == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("values equal the straight-line oracle") {
    Tape t;
    auto fwd = s2u_forward(t, m, ex, 17, true);
    const double want_h = oracle_s2u_h(t.val(fwd.h), m.params.at("s2u.ws").value,
                                       m.params.at("s2u.e").value, m.cfg.tau, ex.frame_units,
                                       fwd.mask.positions);
    const double want_c =
        oracle_wu_nll(t.val(fwd.c_s), m.params.at("head.wu").value, ex.frame_units, fwd.mask.positions);
    CHECK(t.val(fwd.loss.h_term).scalar_value() == doctest::Approx(want_h).epsilon(1e-10));
    CHECK(t.val(fwd.loss.c_term).scalar_value() == doctest::Approx(want_c).epsilon(1e-10));
  }
  SUBCASE("mask positions outside the sequence are an index error") {
    Tape t;
    Var x = m.speech_prenet(t, ex.wave);
    Var h = m.speech_encoder(t, x);
    Var c = m.unit_encoder(t, h);
    SpanSet bad;
    bad.length = 8;
    bad.positions = {12};
    CHECK_THROWS_AS((void)loss_s2u(t, m, h, c, ex.frame_units, bad), ContractError);
  }
}

TEST_CASE("loss_u2t_ce") {
  Model m(toy_config(), 113);
  SUBCASE("peaked logits on the target give zero loss") {
    Tape t;
    std::vector<int> target = {2, 5};
    Tensor logits = Tensor::zeros({2, m.cfg.text_vocab});
    logits.at(0, 2) = 1000;
    logits.at(1, 5) = 1000;
    CHECK(t.val(loss_u2t_ce(t, t.input(logits), target)).scalar_value() == doctest::Approx(0.0));
  }
  SUBCASE("uniform logits give |Y| log |vocab|") {
    Tape t;
    std::vector<int> target = {0, 1, 2};
    Var logits = t.input(Tensor::zeros({3, m.cfg.text_vocab}));
    CHECK(t.val(loss_u2t_ce(t, logits, target)).scalar_value() ==
          doctest::Approx(3.0 * std::log(m.cfg.text_vocab)).epsilon(1e-12));
  }
  SUBCASE("matches the per-token oracle on a real decoder forward") {
    Rng rng(127);
    U2TExample ex = toy_u2t_example(m.cfg, 6, 5, rng);
    Tape t;
    Var u = m.unit_prenet(t, ex.units);
    Var c = m.unit_encoder(t, u);
    std::vector<int> prefix = {TextVocab().bos()};
    prefix.insert(prefix.end(), ex.text.begin(), ex.text.end());
    std::vector<int> target = ex.text;
    target.push_back(TextVocab().eos());
    Var logits = m.text_decoder(t, c, prefix);
    CHECK(t.val(loss_u2t_ce(t, logits, target)).scalar_value() ==
          doctest::Approx(oracle_ce(t.val(logits), target)).epsilon(1e-10));
  }
  SUBCASE("length mismatch is a contract error") {
    Tape t;
    Var logits = t.input(Tensor::zeros({3, m.cfg.text_vocab}));
    CHECK_THROWS_AS((void)loss_u2t_ce(t, logits, {0, 1}), ContractError);
  }
}

TEST_CASE("loss_u2t composition") {
  Model m(toy_config(), 131);
  Rng rng(137);
  U2TExample ex = toy_u2t_example(m.cfg, 8, 4, rng);
  SUBCASE("without CTC it equals the CE term exactly") {
    Tape t;
    auto a = u2t_forward(t, m, ex, false);
    Tape t2;
    auto b = u2t_forward(t2, m, ex, true);
    CHECK(t.val(a.loss.total).scalar_value() == t.val(a.loss.ce).scalar_value());
    CHECK(t.val(a.loss.ce).scalar_value() == doctest::Approx(t2.val(b.loss.ce).scalar_value()));
  }
  SUBCASE("with CTC the total is the sum of the parts") {
    Tape t;
    auto fwd = u2t_forward(t, m, ex, true);
    REQUIRE(fwd.loss.ctc_feasible);
    CHECK(t.val(fwd.loss.total).scalar_value() ==
          doctest::Approx(t.val(fwd.loss.ce).scalar_value() + t.val(fwd.loss.ctc).scalar_value())
              .epsilon(1e-12));
  }
  SUBCASE("additivity on given parts: CE 1.0 + CTC 0.5 = 1.5") {
    LossBreakdown b = combine(0, 0, 1.0, 0.5, 0, 1.0, 0.0);
    CHECK(b.total == doctest::Approx(1.5));
  }
}

TEST_CASE("loss_mum") {
  Model m(toy_config(), 139);
  Rng rng(149);
  MUMExample ex = toy_mum_example(m.cfg, 9, rng);
  SUBCASE("empty mask gives zero") {
    Tape t;
    std::vector<int> z = ex.units;
    Var u = m.unit_prenet(t, z);
    Var c = m.unit_encoder(t, u);
    SpanSet empty;
    empty.length = 9;
    CHECK(t.val(loss_mum(t, m, c, z, empty).term).scalar_value() == 0.0);
  }
  SUBCASE("matches the W^u oracle") {
    Tape t;
    auto fwd = mum_forward(t, m, ex, 31);
    const double want =
        oracle_wu_nll(t.val(fwd.c_u), m.params.at("head.wu").value, ex.units, fwd.mask.positions);
    CHECK(t.val(fwd.loss.term).scalar_value() == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("loss positivity") {
  Model m(toy_config(), 151);
  Rng rng(157);
  for (int trial = 0; trial < 5; ++trial) {
    Tape t;
    auto s2u = s2u_forward(t, m, toy_s2u_example(m.cfg, 7, rng), trial, true);
    CHECK(t.val(s2u.loss.h_term).scalar_value() >= 0.0);
    CHECK(t.val(s2u.loss.c_term).scalar_value() >= 0.0);
    Tape t2;
    auto u2t = u2t_forward(t2, m, toy_u2t_example(m.cfg, 7, 4, rng), true);
    CHECK(t2.val(u2t.loss.ce).scalar_value() >= 0.0);
    if (u2t.loss.ctc_feasible) CHECK(t2.val(u2t.loss.ctc).scalar_value() >= 0.0);
    Tape t3;
    auto mum = mum_forward(t3, m, toy_mum_example(m.cfg, 8, rng), trial);
    CHECK(t3.val(mum.loss.term).scalar_value() >= 0.0);
  }
}

// Gradients of all five loss components against finite differences; this is
// the same check the acceptance suite runs at scale (20 seeds there).
TEST_CASE("loss gradients match finite differences on the 2-layer toy model") {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    Model m(toy_config(), seed);
    Rng rng(seed * 1000 + 7);
    S2UExample s2u_ex = toy_s2u_example(m.cfg, 7, rng);
    U2TExample u2t_ex = toy_u2t_example(m.cfg, 7, 4, rng);
    MUMExample mum_ex = toy_mum_example(m.cfg, 8, rng);

    auto total_loss = [&](Tape& t) -> Var {
      auto s2u = s2u_forward(t, m, s2u_ex, seed, true);
      auto u2t = u2t_forward(t, m, u2t_ex, true);
      auto mum = mum_forward(t, m, mum_ex, seed + 1);
      Var sum = t.add(s2u.loss.h_term, s2u.loss.c_term);
      sum = t.add(sum, t.scale(u2t.loss.total, 0.1));
      return t.add(sum, t.scale(mum.loss.term, 0.5));
    };
    {
      Tape t;
      t.backward(total_loss(t));
    }
    auto fwd = [&]() {
      Tape t;
      return t.val(total_loss(t)).scalar_value();
    };
    auto params = all_params(m);
    auto res = testsup::finite_diff_check(params, fwd);
    INFO("seed ", seed, " pass fraction ", res.pass_fraction(), " worst rel ", res.worst_rel);
    CHECK(res.pass_fraction() >= 0.99);
    m.params.zero_grads();
  }
}

// both S2U branches and both W^u heads feed the shared tensors
TEST_CASE("shared parameters receive gradient from every path") {
  Model m(toy_config(), 163);
  Rng rng(167);
  S2UExample s2u_ex = toy_s2u_example(m.cfg, 7, rng);
  MUMExample mum_ex = toy_mum_example(m.cfg, 8, rng);

  // pick the first corruption seed whose mask is non-empty (short sequences
  // can draw empty masks)
  uint64_t ex_seed = 0;
  while (sample_spans(7, m.cfg.mask_prob, m.cfg.mask_len, derive_seed(ex_seed, "m")).count() == 0) ++ex_seed;

  Tape t;
  auto s2u = s2u_forward(t, m, s2u_ex, ex_seed, true);
  REQUIRE(s2u.mask.count() > 0);
  t.backward(t.add(s2u.loss.h_term, s2u.loss.c_term));
  double wu_from_s2u = 0, enc_from_s2u = 0;
  for (double g : m.params.at("head.wu").grad.v) wu_from_s2u += std::abs(g);
  for (double g : m.params.at("speech_enc.l0.attn.wq").grad.v) enc_from_s2u += std::abs(g);
  CHECK(wu_from_s2u > 0);
  CHECK(enc_from_s2u > 0);
  m.params.zero_grads();

  uint64_t mum_seed = 0;
  while (sample_spans(8, m.cfg.mask_prob, m.cfg.mask_len, derive_seed(mum_seed, "m")).count() == 0) ++mum_seed;
  Tape t2;
  auto mum = mum_forward(t2, m, mum_ex, mum_seed);
  REQUIRE(mum.mask.count() > 0);
  t2.backward(mum.loss.term);
  double wu_from_mum = 0;
  for (double g : m.params.at("head.wu").grad.v) wu_from_mum += std::abs(g);
  CHECK(wu_from_mum > 0);
  m.params.zero_grads();
}
