#include <cmath>

#include "doctest.h"
#include "speechut/ctc.hpp"
#include "support.hpp"

using namespace speechut;
using testsup::finite_diff_check;
using testsup::random_logprob_rows;

namespace {

Tensor uniform_logprobs(int64_t t, int64_t cols) {
  return Tensor::full({t, cols}, -std::log(static_cast<double>(cols)));
}

}  // namespace

TEST_CASE("single-frame single-path instance") {
  // vocab {a, blank}, uniform: Y="a" has exactly one path
  Tensor lp = uniform_logprobs(1, 2);
  Tape t;
  auto res = ctc::ctc_loss(t, t.input(lp), {0});
  CHECK(res.feasible);
  CHECK(t.val(res.loss).scalar_value() == doctest::Approx(-std::log(0.5)).epsilon(1e-10));
}

TEST_CASE("two-frame instance enumerates three paths") {
  // paths {aa, a-, -a} at p=1/4 each -> p(Y) = 0.75
  Tensor lp = uniform_logprobs(2, 2);
  Tape t;
  auto res = ctc::ctc_loss(t, t.input(lp), {0});
  CHECK(t.val(res.loss).scalar_value() == doctest::Approx(-std::log(0.75)).epsilon(1e-10));
  CHECK(ctc::ctc_oracle(lp, {0}) == doctest::Approx(-std::log(0.75)).epsilon(1e-10));
}

TEST_CASE("repeated symbol needs a separating blank") {
  Tensor lp = uniform_logprobs(2, 2);
  Tape t;
  auto res = ctc::ctc_loss(t, t.input(lp), {0, 0});  // "aa" needs >= 3 frames
  CHECK_FALSE(res.feasible);
  CHECK(std::isinf(t.val(res.loss).scalar_value()));
  CHECK(ctc::min_frames_for({0, 0}) == 3);
}

TEST_CASE("ctc_loss equals brute-force oracle on random tiny instances") {
  Rng rng(1234);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t t_len = 1 + static_cast<int64_t>(rng.uniform_int(6));
    const int vocab = 1 + static_cast<int>(rng.uniform_int(3));
    Tensor lp = random_logprob_rows(t_len, vocab + 1, rng);
    const int y_len = static_cast<int>(rng.uniform_int(4));
    std::vector<int> target;
    for (int i = 0; i < y_len; ++i) target.push_back(static_cast<int>(rng.uniform_int(vocab)));

    const double oracle = ctc::ctc_oracle(lp, target);
    Tape t;
    auto res = ctc::ctc_loss(t, t.input(lp), target);
    const double dp = t.val(res.loss).scalar_value();
    if (std::isinf(oracle)) {
      CHECK_FALSE(res.feasible);
      CHECK(std::isinf(dp));
    } else {
      CHECK(std::abs(dp - oracle) < 1e-10);
    }
  }
}

TEST_CASE("oracle edge cases") {
  SUBCASE("empty target is the product of blank probabilities") {
    Tensor lp = Tensor::matrix(2, 2, {std::log(0.1), std::log(0.9), std::log(0.2), std::log(0.8)});
    CHECK(ctc::ctc_oracle(lp, {}) == doctest::Approx(-std::log(0.9 * 0.8)).epsilon(1e-10));
    Tape t;
    auto res = ctc::ctc_loss(t, t.input(lp), {});
    CHECK(t.val(res.loss).scalar_value() == doctest::Approx(-std::log(0.9 * 0.8)).epsilon(1e-10));
  }
  SUBCASE("one-hot rows give zero NLL iff collapsed argmax equals the target") {
    // frames: a, blank, a  -> collapse "aa"
    const double big = 50.0;
    Tensor logits = Tensor::matrix(3, 2, {big, 0, 0, big, big, 0});
    Tensor lp;
    kern::log_softmax_rows(logits, lp);
    CHECK(ctc::ctc_oracle(lp, {0, 0}) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(ctc::ctc_oracle(lp, {0}) > 10.0);
  }
  SUBCASE("size caps are enforced") {
    Tensor lp = uniform_logprobs(9, 2);
    CHECK_THROWS_AS((void)ctc::ctc_oracle(lp, {0}), ContractError);
  }
}

TEST_CASE("greedy decode") {
  SUBCASE("all blank collapses to empty") {
    Tensor logits = Tensor::matrix(3, 3, {0, 0, 5, 0, 0, 5, 0, 0, 5});
    Tensor lp;
    kern::log_softmax_rows(logits, lp);
    CHECK(ctc::ctc_greedy_decode(lp).empty());
  }
  SUBCASE("a a blank a collapses to aa") {
    Tensor logits = Tensor::matrix(4, 2, {5, 0, 5, 0, 0, 5, 5, 0});
    Tensor lp;
    kern::log_softmax_rows(logits, lp);
    CHECK(ctc::ctc_greedy_decode(lp) == std::vector<int>{0, 0});
  }
  SUBCASE("matches the oracle argmax on peaked distributions") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
      const int64_t t_len = 1 + static_cast<int64_t>(rng.uniform_int(5));
      const int vocab = 2;
      Tensor logits = Tensor::zeros({t_len, vocab + 1});
      for (int64_t i = 0; i < t_len; ++i) logits.at(i, rng.uniform_int(vocab + 1)) = 30.0;  // strongly peaked
      Tensor lp;
      kern::log_softmax_rows(logits, lp);
      const auto hyp = ctc::ctc_greedy_decode(lp);
      // exhaustive argmax over candidate outputs of length <= T'
      std::vector<int> best;
      double best_nll = kPosInf;
      std::vector<std::vector<int>> cands = {{}};
      for (int64_t l = 1; l <= t_len; ++l) {
        std::vector<std::vector<int>> next;
        for (auto& c : cands)
          if (static_cast<int64_t>(c.size()) == l - 1)
            for (int s = 0; s < vocab; ++s) {
              auto e = c;
              e.push_back(s);
              next.push_back(e);
            }
        for (auto& e : next) cands.push_back(e);
      }
      for (auto& c : cands) {
        double nll = ctc::ctc_oracle(lp, c);
        if (nll < best_nll) {
          best_nll = nll;
          best = c;
        }
      }
      CHECK(hyp == best);
    }
  }
}

TEST_CASE("prefix scoring") {
  Rng rng(5);
  SUBCASE("empty prefix scores log 1") {
    Tensor lp = random_logprob_rows(4, 3, rng);
    CHECK(ctc::ctc_prefix_score(lp, {}) == doctest::Approx(0.0));
  }
  SUBCASE("worked two-frame example") {
    Tensor lp = uniform_logprobs(2, 2);
    // P(starts with "a") = 1 - P(all blank) = 0.75
    CHECK(ctc::ctc_prefix_score(lp, {0}) == doctest::Approx(std::log(0.75)).epsilon(1e-12));
  }
  SUBCASE("complete probability is consistent with ctc_loss") {
    for (int trial = 0; trial < 30; ++trial) {
      const int64_t t_len = 2 + static_cast<int64_t>(rng.uniform_int(4));
      Tensor lp = random_logprob_rows(t_len, 4, rng);
      std::vector<int> y;
      const int y_len = 1 + static_cast<int>(rng.uniform_int(2));
      for (int i = 0; i < y_len; ++i) y.push_back(static_cast<int>(rng.uniform_int(3)));
      ctc::CtcPrefixScorer scorer(lp);
      auto st = scorer.initial();
      for (int tok : y) st = scorer.extend(st, tok);
      Tape t;
      auto res = ctc::ctc_loss(t, t.input(lp), y);
      if (!res.feasible) continue;
      CHECK(std::abs(scorer.complete_logprob(st) + t.val(res.loss).scalar_value()) < 1e-10);
    }
  }
  SUBCASE("prefix scores are monotone non-increasing under extension") {
    for (int trial = 0; trial < 20; ++trial) {
      Tensor lp = random_logprob_rows(5, 4, rng);
      ctc::CtcPrefixScorer scorer(lp);
      auto st = scorer.initial();
      double prev = 0.0;
      for (int step = 0; step < 4; ++step) {
        st = scorer.extend(st, static_cast<int>(rng.uniform_int(3)));
        CHECK(st.psi <= prev + 1e-12);
        prev = st.psi;
      }
    }
  }
}

TEST_CASE("shift invariance of the loss under renormalization") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits = testsup::random_tensor({4, 3}, rng, 2.0);
    Tensor lp1;
    kern::log_softmax_rows(logits, lp1);
    Tensor shifted = logits;
    for (int64_t i = 0; i < shifted.rows(); ++i)
      for (int64_t j = 0; j < shifted.cols(); ++j) shifted.at(i, j) += 7.5;
    Tensor lp2;
    kern::log_softmax_rows(shifted, lp2);
    Tape t;
    auto a = ctc::ctc_loss(t, t.input(lp1), {0, 1});
    auto b = ctc::ctc_loss(t, t.input(lp2), {0, 1});
    CHECK(std::abs(t.val(a.loss).scalar_value() - t.val(b.loss).scalar_value()) < 1e-10);
  }
}

TEST_CASE("ctc_loss gradient matches finite differences on feasible instances") {
  Rng rng(2024);
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Parameter logits("logits", testsup::random_tensor({5, 4}, rng));
    std::vector<int> target = {0, 2};
    auto fwd = [&]() {
      Tape t;
      Var lp = t.log_softmax_rows(t.param(logits));
      auto res = ctc::ctc_loss(t, lp, target);
      return t.val(res.loss).scalar_value();
    };
    {
      Tape t;
      Var lp = t.log_softmax_rows(t.param(logits));
      auto res = ctc::ctc_loss(t, lp, target);
      REQUIRE(res.feasible);
      t.backward(res.loss);
    }
    auto check = finite_diff_check({&logits}, fwd);
    INFO("worst rel ", check.worst_rel);
    CHECK(check.all_ok());
  }
}
