#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include "cdp/cascade.hpp"
#include "cdp/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cdp;
using cdp::testing::make_dialog;
using cdp::testing::pseudo_word;
using cdp::testing::random_text;

namespace {

std::vector<Document> docs_of(const std::vector<std::string>& texts) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({"doc" + std::to_string(i), texts[i], 0});
  return docs;
}

RankedList ranking(std::initializer_list<const char*> ids) {
  RankedList r;
  double s = 10.0;
  for (const char* id : ids) r.entries.push_back({id, s--});
  return r;
}

struct Fixture {
  std::vector<Document> docs;
  std::vector<Dialog> train;
  FieldedIndex index;
};

Fixture random_corpus(std::uint64_t seed, std::size_t n_docs) {
  std::mt19937_64 rng(seed);
  std::vector<Document> docs;
  for (std::size_t i = 0; i < n_docs; ++i) docs.push_back({"u" + std::to_string(i), random_text(rng, 80, 5, 40), 0});
  std::vector<Dialog> train;
  for (std::size_t k = 0; k < n_docs; ++k)
    train.push_back(make_dialog("t" + std::to_string(k),
                                {{Speaker::User, random_text(rng, 80, 2, 10)}, {Speaker::Agent, random_text(rng, 80, 2, 10)}},
                                docs[rng() % n_docs].doc_id));
  auto index = attach_anchor_text(build_index(docs), train);
  return {std::move(docs), std::move(train), std::move(index)};
}

Dialog random_dialog(std::mt19937_64& rng, std::size_t id) {
  std::vector<std::pair<Speaker, std::string>> turns;
  for (std::size_t t = 0, n = 1 + rng() % 5; t < n; ++t)
    turns.emplace_back(t % 2 ? Speaker::Agent : Speaker::User, random_text(rng, 80, 1, 12));
  return make_dialog("q" + std::to_string(id), turns, "u0");
}

Matrix random_affinity(std::mt19937_64& rng, std::size_t n, double zero_fraction = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix w(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = u(rng) < zero_fraction ? 0.0 : u(rng);
      w(i, j) = v;
      w(j, i) = v;
    }
  return w;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.n, m.n);
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j) e(i, j) = m(i, j);
  return e;
}

}  // namespace

TEST_SUITE("cascade") {
  TEST_CASE("utterance_query weights by position") {
    auto one = utterance_query(make_dialog("d", {{Speaker::User, "printer"}}));
    REQUIRE(one.clauses().size() == 1);
    CHECK(one.clauses()[0].weight == 1.0);

    auto three = utterance_query(make_dialog(
        "d", {{Speaker::User, "printer jam"}, {Speaker::Agent, "reboot"}, {Speaker::User, "printer again"}}));
    REQUIRE(three.clauses().size() == 3);
    CHECK(three.clauses()[0].weight == doctest::Approx(1.0 / 6).epsilon(1e-15));
    CHECK(three.clauses()[1].weight == doctest::Approx(2.0 / 6).epsilon(1e-15));
    CHECK(three.clauses()[2].weight == doctest::Approx(3.0 / 6).epsilon(1e-15));
    CHECK(three.weights().at("printer") == doctest::Approx(4.0 / 6).epsilon(1e-15));

    CHECK_THROWS_AS(utterance_query(make_dialog("d", {{Speaker::User, "the a"}})), InvalidArgument);
  }

  TEST_CASE("relevance model on a single MLE document") {
    const auto index = build_index(docs_of({"x x y", "z"}));
    RelevanceModelParams p;
    p.fb_docs = 1;
    p.mu = 0.0;
    const auto rm = relevance_model(index, WeightedQuery::from_weights({{"x", 1.0}}), ranking({"doc0"}), p);
    REQUIRE(rm.size() == 2);
    CHECK(rm[0].first == "x");
    CHECK(std::abs(rm[0].second - 2.0 / 3) < 1e-15);
    CHECK(std::abs(rm[1].second - 1.0 / 3) < 1e-15);
  }

  TEST_CASE("relevance model matches the brute-force sum") {
    const std::vector<std::string> texts = {"printer jam paper tray paper", "printer driver update windows",
                                            "paper tray empty printer", "keyboard driver windows",
                                            "monitor flicker cable driver"};
    const auto index = build_index(docs_of(texts));
    std::vector<oracle::Bag> bags;
    for (const auto& t : texts) bags.push_back(analyze(t).terms);
    const auto query = WeightedQuery::from_weights({{"printer", 0.7}, {"driver", 0.3}});
    const auto first = retrieve(index, {}, query, 5);
    std::vector<std::size_t> fb;
    for (std::size_t i = 0; i < 3; ++i) fb.push_back(std::stoul(first[i].doc_id.substr(3)));

    for (double mu : {0.0, 5.0, 2000.0}) {
      RelevanceModelParams p{3, 2, 0.5, mu};
      const auto expected = oracle::relevance_model(bags, fb, query.weights(), mu);
      const auto rm = relevance_model(index, query, first, p);
      REQUIRE(rm.size() == expected.size());
      for (const auto& [term, prob] : rm) CHECK(std::abs(prob - static_cast<double>(expected.at(term))) < 1e-9);

      // Expansion: mix * normalized original + (1 - mix) * normalized top-2 expansion.
      const auto expanded = expand_relevance_model(index, query, first, p);
      const double top2 = rm[0].second + rm[1].second;
      std::map<std::string, double> want = {{"printer", 0.5 * 0.7}, {"driver", 0.5 * 0.3}};
      want[rm[0].first] += 0.5 * rm[0].second / top2;
      want[rm[1].first] += 0.5 * rm[1].second / top2;
      REQUIRE(expanded.weights().size() == want.size());
      for (const auto& [term, w] : want) CHECK(std::abs(expanded.weights().at(term) - w) < 1e-9);
    }
  }

  TEST_CASE("relevance model mixing identity and fb clamp") {
    const auto index = build_index(docs_of({"a b", "b c", "c d"}));
    const auto query = WeightedQuery::from_weights({{"b", 2.0}, {"c", 1.0}});
    const auto first = retrieve(index, {}, query, 3);
    RelevanceModelParams p;
    p.mix = 1.0;
    CHECK(expand_relevance_model(index, query, first, p).weights() == query.normalized().weights());

    p = {};
    p.fb_docs = 50;
    RelevanceModelParams clamped = p;
    clamped.fb_docs = first.size();
    CHECK(relevance_model(index, query, first, p) == relevance_model(index, query, first, clamped));
    CHECK_THROWS_AS(relevance_model(index, query, RankedList{}, p), InvalidArgument);
  }

  TEST_CASE("manifold ranking trivial cases") {
    std::mt19937_64 rng(1);
    const Matrix w = random_affinity(rng, 6);
    const std::vector<double> y = {1.0, 0.0, 0.3, 0.5, 0.9, 0.2};
    const auto r0 = manifold_rank(w, y, 0.0, 1e-6, 100);
    CHECK(r0.scores == y);
    const std::vector<double> single = {0.4};
    CHECK(manifold_rank(Matrix(1), single, 0.6, 1e-6, 100).scores == single);
    const std::vector<double> bad = {0.1, NAN};
    CHECK_THROWS_AS(manifold_rank(Matrix(2), bad, 0.6, 1e-6, 100), InvalidArgument);
    CHECK_THROWS_AS(manifold_rank(w, y, 1.0, 1e-6, 100), InvalidArgument);
  }

  TEST_CASE("manifold ranking matches the closed form") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int it = 0; it < 40; ++it) {
      const std::size_t n = 5 + rng() % 20;
      const Matrix w = random_affinity(rng, n, it % 4 == 0 ? 0.6 : 0.0);
      std::vector<double> y(n);
      for (auto& v : y) v = u(rng);
      y = min_max(y);
      const auto got = manifold_rank(w, y, 0.6, 1e-12, 5000);
      REQUIRE(got.converged);
      const Eigen::VectorXd want = oracle::manifold_closed_form(to_eigen(w), Eigen::Map<Eigen::VectorXd>(y.data(), n), 0.6);
      for (std::size_t i = 0; i < n; ++i) REQUIRE(std::abs(got.scores[i] - want(static_cast<Eigen::Index>(i))) < 1e-9);
    }
  }

  TEST_CASE("manifold max-norm step shrinks after the first iteration") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t violations = 0;
    for (int it = 0; it < 100; ++it) {
      const std::size_t n = 5 + rng() % 30;
      std::vector<LanguageModel> lms;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> terms;
        for (int k = 3 + rng() % 20; k > 0; --k) terms.push_back(pseudo_word('w', rng() % 25));
        lms.push_back(estimate_lm(terms, {}, Smoothing::mle()));
      }
      std::vector<double> y(n);
      for (auto& v : y) v = u(rng);
      const auto r = manifold_rank(lms, min_max(y), 0.6, 1e-10, 500);
      REQUIRE(r.converged);
      for (std::size_t k = 2; k < r.deltas.size(); ++k)
        if (r.deltas[k] > r.deltas[k - 1] * (1 + 1e-12)) ++violations;
    }
    CHECK(violations == 0);
  }

  TEST_CASE("fast Dirichlet affinity agrees with the generic language-model path") {
    const auto f = random_corpus(5, 40);
    std::vector<DocIndex> docs;
    for (DocIndex d = 0; d < 25; ++d) docs.push_back(d);
    for (double mu : {1.0, 50.0, 2000.0}) {
      const Matrix fast = dirichlet_affinity(f.index, docs, mu);
      const auto lms = candidate_language_models(f.index, docs, mu);
      const Matrix slow = bhattacharyya_affinity(lms);
      for (std::size_t i = 0; i < docs.size(); ++i) {
        CHECK(fast(i, i) == 0.0);
        for (std::size_t j = 0; j < docs.size(); ++j) REQUIRE(std::abs(fast(i, j) - slow(i, j)) < 1e-12);
      }
    }
  }

  TEST_CASE("symmetric normalization keeps zero-degree rows at zero") {
    Matrix w(3);
    w(0, 1) = w(1, 0) = 0.5;
    const Matrix s = symmetric_normalize(w);
    CHECK(s(0, 1) == doctest::Approx(1.0));
    CHECK(s(2, 0) == 0.0);
    CHECK(s(2, 2) == 0.0);
  }

  TEST_CASE("fixed-point weights") {
    const auto index = build_index(docs_of({"printer jam paper", "printer driver", "paper tray", "keyboard key",
                                            "printer paper tray", "driver update", "monitor cable", "jam tray",
                                            "keyboard driver", "cable printer"}));
    FixedPointParams p;
    p.delta = 0.0;
    const auto query = analyze("printer printer paper jam keyboard");
    const auto base = fixed_point_weights(index, query, p).weights;

    const auto single = fixed_point_weights(index, analyze("printer printer"), {}).weights;
    CHECK(single.weights.size() == 1);
    CHECK(single.get("printer") == 1.0);
    CHECK_THROWS_AS(fixed_point_weights(index, analyze("the"), {}), InvalidArgument);

    std::vector<oracle::Bag> bags;
    for (const char* t : {"printer jam paper", "printer driver", "paper tray", "keyboard key", "printer paper tray",
                          "driver update", "monitor cable", "jam tray", "keyboard driver", "cable printer"})
      bags.push_back(analyze(t).terms);
    for (long double delta : {0.0L, 0.5L}) {
      FixedPointParams q;
      q.delta = static_cast<double>(delta);
      q.tolerance = 1e-14;
      q.max_iterations = 500;
      const auto got = fixed_point_weights(index, query, q);
      const auto want = oracle::fixed_point(query.terms, bags, delta);
      REQUIRE(got.weights.weights.size() == want.size());
      for (const auto& [term, w] : want) CHECK(std::abs(got.weights.get(term) - static_cast<double>(w)) < 1e-9);
      if (delta == 0.0L)
        for (const auto& [term, w] : want) CHECK(std::abs(base.get(term) - static_cast<double>(w)) < 1e-12);
    }

    // Default tolerance still lands within 1e-6 of the fixed point.
    const auto coarse = fixed_point_weights(index, query, {});
    const auto want = oracle::fixed_point(query.terms, bags, 0.5L);
    CHECK(coarse.converged);
    for (const auto& [term, w] : want) CHECK(std::abs(coarse.weights.get(term) - static_cast<double>(w)) < 1e-4);
  }

  TEST_CASE("two co-occurring terms oscillate at rate delta") {
    // With two terms the support operator swaps them: the error flips sign and
    // shrinks by delta per step, so delta = 0.9 needs ~90 steps for 1e-4.
    std::vector<std::string> texts = {"rare common", "common", "common", "common", "common x", "y", "z", "w"};
    const auto index = build_index(docs_of(texts));
    std::vector<oracle::Bag> bags;
    for (const auto& t : texts) bags.push_back(analyze(t).terms);
    const auto query = analyze("rare common");
    FixedPointParams p;
    p.delta = 0.9;
    const auto capped = fixed_point_weights(index, query, p);
    CHECK_FALSE(capped.converged);
    CHECK(capped.iterations == 50);
    p.max_iterations = 200;
    const auto full = fixed_point_weights(index, query, p);
    CHECK(full.converged);
    CHECK(full.iterations > 50);
    const auto want = oracle::fixed_point(query.terms, bags, 0.9L);
    for (const auto& [term, w] : want) CHECK(std::abs(full.weights.get(term) - static_cast<double>(w)) < 1e-4);
    CHECK(std::abs(capped.weights.sum() - 1.0) < 1e-12);
  }

  TEST_CASE("utterance-biased reweighting") {
    const Dialog two = make_dialog("d", {{Speaker::User, "alpha"}, {Speaker::Agent, "beta"}});
    const TermWeights fp{{{"alpha", 0.5}, {"beta", 0.5}}};
    const auto out = utterance_biased_reweight(two, fp);
    CHECK(std::abs(out.get("alpha") - 1.0 / 3) < 1e-15);
    CHECK(std::abs(out.get("beta") - 2.0 / 3) < 1e-15);

    const Dialog one = make_dialog("d", {{Speaker::User, "alpha beta gamma beta"}});
    const TermWeights fp3{{{"alpha", 0.2}, {"beta", 0.3}, {"gamma", 0.5}}};
    const auto same = utterance_biased_reweight(one, fp3);
    for (const auto& [t, w] : fp3.weights) CHECK(same.get(t) == doctest::Approx(w).epsilon(1e-14));

    const TermWeights with_zero{{{"alpha", 0.0}, {"beta", 1.0}}};
    CHECK(utterance_biased_reweight(two, with_zero).get("alpha") == 0.0);
  }

  TEST_CASE("fixed-point and reweighting properties on random dialogs") {
    const auto f = random_corpus(6, 80);
    std::mt19937_64 rng(7);
    for (int it = 0; it < 100; ++it) {
      const Dialog d = random_dialog(rng, static_cast<std::size_t>(it));
      for (double delta : {0.1, 0.5, 0.9}) {
        FixedPointParams p;
        p.delta = delta;
        const auto fp = fixed_point_weights(f.index, d, p);
        if (delta < 0.9) REQUIRE(fp.converged);
        REQUIRE(std::abs(fp.weights.sum() - 1.0) < 1e-9);
        const auto rw = utterance_biased_reweight(d, fp.weights);
        REQUIRE(std::abs(rw.sum() - 1.0) < 1e-9);
        for (const auto& [t, w] : rw.weights) {
          REQUIRE(w >= 0.0);
          REQUIRE(fp.weights.weights.contains(t));
        }
      }
    }
  }

  TEST_CASE("min_max") {
    const std::vector<double> s = {2.0, 4.0, 3.0};
    CHECK(min_max(s) == std::vector<double>{0.0, 1.0, 0.5});
    const std::vector<double> flat = {3.0, 3.0};
    CHECK(min_max(flat) == std::vector<double>{1.0, 1.0});
  }

  TEST_CASE("cascade configuration") {
    const auto c = parse_cascade_config(R"({"first_pass": 50, "rerank_pool": 20, "manifold": {"alpha": 0.3}})");
    CHECK(c.first_pass == 50);
    CHECK(c.rerank_pool == 20);
    CHECK(c.manifold.alpha == 0.3);
    CHECK(c.fp.delta == 0.5);
    CHECK(parse_cascade_config(to_json(c)).manifold.alpha == 0.3);
    CHECK_THROWS_AS(parse_cascade_config(R"({"frist_pass": 5})"), InvalidArgument);
    CHECK_THROWS_AS(parse_cascade_config(R"({"stage_weights": [0.5, 0.5, 0.5, 0.5]})"), InvalidArgument);
    CHECK_THROWS_AS(parse_cascade_config(R"({"first_pass": 5, "rerank_pool": 10})"), InvalidArgument);
    CHECK_THROWS(parse_cascade_config("not json"));
  }

  TEST_CASE("cascade structure on random dialogs") {
    const auto f = random_corpus(8, 150);
    CascadeConfig config;
    config.first_pass = 120;
    config.rerank_pool = 40;
    std::mt19937_64 rng(9);
    for (int it = 0; it < 100; ++it) {
      const Dialog d = random_dialog(rng, static_cast<std::size_t>(it));
      const auto trace = cascade_rank_traced(f.index, d, config);
      const auto first = trace.first_pass.doc_ids();
      const std::size_t pool = std::min<std::size_t>(40, first.size());
      const std::set<std::string> pool_ids(first.begin(), first.begin() + static_cast<std::ptrdiff_t>(pool));
      for (const auto& stage : trace.stages) {
        auto ids = stage.doc_ids();
        REQUIRE(ids.size() == pool);
        REQUIRE(std::set<std::string>(ids.begin(), ids.end()) == pool_ids);
      }
      const auto final_ids = trace.final.doc_ids();
      REQUIRE(final_ids.size() == first.size());
      REQUIRE(std::set<std::string>(final_ids.begin(), final_ids.end()).size() == final_ids.size());
      REQUIRE(std::set<std::string>(final_ids.begin(), final_ids.end()) == std::set<std::string>(first.begin(), first.end()));
      for (std::size_t i = pool; i < first.size(); ++i) REQUIRE(final_ids[i] == first[i]);
      for (std::size_t i = 1; i < trace.final.size(); ++i) REQUIRE(trace.final[i - 1].score >= trace.final[i].score);
    }
  }

  TEST_CASE("cascade with stage weights (1,0,0,0) reproduces stage one") {
    const auto f = random_corpus(10, 120);
    CascadeConfig config;
    config.first_pass = 100;
    config.rerank_pool = 30;
    config.stage_weights = {1.0, 0.0, 0.0, 0.0};
    std::mt19937_64 rng(11);
    for (int it = 0; it < 30; ++it) {
      const Dialog d = random_dialog(rng, static_cast<std::size_t>(it));
      const auto trace = cascade_rank_traced(f.index, d, config);
      CHECK(trace.final.doc_ids() == trace.first_pass.doc_ids());
    }
  }

  TEST_CASE("scaling every BM25 score leaves the cascade order unchanged") {
    const auto f = random_corpus(12, 120);
    std::mt19937_64 rng(13);
    for (int it = 0; it < 30; ++it) {
      const Dialog d = random_dialog(rng, static_cast<std::size_t>(it));
      CascadeConfig base;
      base.first_pass = 100;
      base.rerank_pool = 30;
      const auto reference = cascade_rank(f.index, d, base).doc_ids();
      for (double factor : {0.25, 4.0}) {
        CascadeConfig scaled = base;
        scaled.boosts = {factor, factor};
        CHECK(cascade_rank(f.index, d, scaled).doc_ids() == reference);
      }
    }
  }

  TEST_CASE("cascade on a dialog that matches nothing") {
    const auto f = random_corpus(14, 20);
    const auto r = cascade_rank(f.index, make_dialog("x", {{Speaker::User, "zzzzqqq"}}), {});
    CHECK(r.empty());
    CHECK(r.provenance == "irc");
  }
}
