#include <doctest.h>

#include <cmath>
#include <functional>

#include "memefusion/config.hpp"
#include "memefusion/corpus.hpp"
#include "memefusion/encoders.hpp"
#include "memefusion/errors.hpp"
#include "memefusion/training.hpp"

using namespace memefusion;

namespace {

double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (-f(x + 2 * h) + 8 * f(x + h) - 8 * f(x - h) + f(x - 2 * h)) / (12 * h);
}

// Text carries a class word, the image is blank: separable for M1.
EmbeddedDataset separable_text_data(int n, std::uint64_t seed) {
  HashingTokenizer tok;
  ToyTextEncoder enc(7);
  Rng rng(seed);
  const char* filler[] = {"look", "at", "this", "one", "today", "again", "the", "city"};
  EmbeddedDataset d;
  d.num_classes = 2;
  d.text.resize(n, kTextEmbeddingDim);
  d.image = Matrix::Zero(n, kImageEmbeddingDim);
  for (int i = 0; i < n; ++i) {
    const int y = i % 2;
    std::string s = y ? "awful" : "splendid";
    for (int w = 0; w < 4; ++w) s += std::string(" ") + filler[rng.below(8)];
    d.text.row(i) = encode_text(tokenize_text(s, tok), enc).vector.transpose();
    d.ids.push_back("t" + std::to_string(i));
    d.labels.push_back(y);
  }
  return d;
}

TrainConfig fast_config() {
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  cfg.max_epochs = 40;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("class weights") {
  const std::vector<long> balanced = {50, 50, 50};
  for (double w : compute_class_weights(balanced, 0.3).weights) CHECK(w == 1.0);
  const std::vector<long> skewed = {10, 400};
  for (double w : compute_class_weights(skewed, 0.0).weights) CHECK(w == 1.0);

  const std::vector<long> skewed_counts = {100, 207};
  const auto w = compute_class_weights(skewed_counts, 0.3);
  CHECK(w.weights[0] == doctest::Approx(std::pow(2.07, 0.3)));
  CHECK(w.weights[0] == doctest::Approx(1.2439).epsilon(1e-4));
  CHECK(w.weights[1] == 1.0);

  const std::vector<long> three = {39, 50, 29};
  const auto w3 = compute_class_weights(three, 0.3);
  CHECK(w3.weights[1] == 1.0);
  CHECK(w3.weights[2] >= w3.weights[0]);
  CHECK(w3.weights[0] >= w3.weights[1]);

  const std::vector<long> zero = {0, 3};
  CHECK_THROWS_AS(compute_class_weights(zero, 0.3), DataError);
}

TEST_CASE("smoothed weighted cross-entropy") {
  const ClassWeights unit{{1.0, 1.0}};
  SUBCASE("smoothed target") {
    const auto q = smoothed_target(2, 0, 0.1);
    CHECK(q[0] == doctest::Approx(0.95));
    CHECK(q[1] == doctest::Approx(0.05));
  }
  SUBCASE("uniform logits give W ln 2") {
    const ClassWeights w{{1.2439, 1.0}};
    for (double eps : {0.0, 0.1, 0.5}) {
      CHECK(smoothed_weighted_ce(Vector::Zero(2), 0, w, eps) == doctest::Approx(1.2439 * std::log(2.0)));
      CHECK(smoothed_weighted_ce(Vector::Zero(2), 1, w, eps) == doctest::Approx(std::log(2.0)));
    }
  }
  SUBCASE("eps = 0 is plain weighted CE") {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
      Vector z(3);
      for (int c = 0; c < 3; ++c) z[c] = rng.uniform(-5, 5);
      const ClassWeights w{{1.3, 1.0, 2.0}};
      const int target = static_cast<int>(rng.below(3));
      const double lse = std::log(std::exp(z[0]) + std::exp(z[1]) + std::exp(z[2]));
      CHECK(std::abs(smoothed_weighted_ce(z, target, w, 0.0) - w.weights[target] * (lse - z[target])) < 1e-12);
    }
  }
  SUBCASE("positive for eps > 0") {
    Vector z(2);
    z << 80, -80;
    CHECK(smoothed_weighted_ce(z, 0, unit, 0.1) > 0);
  }
  SUBCASE("gradient matches finite differences") {
    Rng rng(2);
    double worst = 0;
    for (int t = 0; t < 200; ++t) {
      const int K = 2 + static_cast<int>(rng.below(2));
      Vector z(K);
      for (int c = 0; c < K; ++c) z[c] = rng.uniform(-3, 3);
      ClassWeights w;
      for (int c = 0; c < K; ++c) w.weights.push_back(1.0 + rng.uniform());
      const int target = static_cast<int>(rng.below(K));
      Vector g;
      smoothed_weighted_ce(z, target, w, 0.1, &g);
      for (int c = 0; c < K; ++c) {
        const double num = central_diff(
            [&](double v) {
              Vector a = z;
              a[c] = v;
              return smoothed_weighted_ce(a, target, w, 0.1);
            },
            z[c], 1e-4);
        worst = std::max(worst, std::abs(g[c] - num) / std::max({std::abs(g[c]), std::abs(num), 1e-6}));
      }
    }
    CHECK(worst < 1e-6);
  }
  SUBCASE("batch mean and gradient") {
    Matrix z(2, 2);
    z << 1, 0, 0, 2;
    const std::vector<int> t = {0, 1};
    Matrix g;
    const double batch = smoothed_weighted_ce(z, t, unit, 0.1, &g);
    Vector g0, g1;
    const double a = smoothed_weighted_ce(Vector(z.row(0).transpose()), 0, unit, 0.1, &g0);
    const double b = smoothed_weighted_ce(Vector(z.row(1).transpose()), 1, unit, 0.1, &g1);
    CHECK(batch == doctest::Approx((a + b) / 2));
    CHECK(g(0, 0) == doctest::Approx(g0[0] / 2));
    CHECK(g(1, 1) == doctest::Approx(g1[1] / 2));
  }
  SUBCASE("non-finite logits") {
    Vector z(2);
    z << std::nan(""), 0;
    CHECK_THROWS_AS(smoothed_weighted_ce(z, 0, unit, 0.1), std::domain_error);
  }
}

TEST_CASE("plateau scheduler") {
  TrainConfig cfg;
  cfg.learning_rate = 1.0;
  SUBCASE("strict improvement keeps lr") {
    auto s = scheduler_init(cfg);
    for (int e = 0; e < 20; ++e) s = scheduler_step(s, 0.1 + 0.01 * e, cfg);
    CHECK(s.current_lr == 1.0);
  }
  SUBCASE("a 6-epoch plateau halves once") {
    auto s = scheduler_init(cfg);
    s = scheduler_step(s, 0.5, cfg);
    for (int e = 0; e < 5; ++e) s = scheduler_step(s, 0.5, cfg);
    CHECK(s.current_lr == 1.0);
    s = scheduler_step(s, 0.5, cfg);
    CHECK(s.current_lr == 0.5);
    CHECK(s.reductions == 1);
  }
  SUBCASE("two plateaus quarter the rate") {
    auto s = scheduler_init(cfg);
    s = scheduler_step(s, 0.5, cfg);
    for (int e = 0; e < 12; ++e) s = scheduler_step(s, 0.5, cfg);
    CHECK(s.current_lr == 0.25);
  }
  SUBCASE("gains below min_delta do not count") {
    auto s = scheduler_init(cfg);
    s = scheduler_step(s, 0.5, cfg);
    for (int e = 1; e <= 6; ++e) s = scheduler_step(s, 0.5 + 0.00001 * e, cfg);
    CHECK(s.current_lr == 0.5);
  }
}

TEST_CASE("early stopping") {
  TrainConfig cfg;
  SUBCASE("11 plateau epochs stop, 10 do not") {
    StopState s;
    s = early_stop_step(s, 0.7, cfg);
    for (int e = 0; e < 10; ++e) {
      s = early_stop_step(s, 0.7, cfg);
      CHECK_FALSE(s.stop_flag);
    }
    s = early_stop_step(s, 0.7, cfg);
    CHECK(s.stop_flag);
    CHECK(s.best_epoch == 1);
  }
  SUBCASE("improvement inside a plateau resets") {
    StopState s;
    s = early_stop_step(s, 0.7, cfg);
    for (int e = 0; e < 8; ++e) s = early_stop_step(s, 0.7, cfg);
    s = early_stop_step(s, 0.8, cfg);
    for (int e = 0; e < 10; ++e) s = early_stop_step(s, 0.8, cfg);
    CHECK_FALSE(s.stop_flag);
    CHECK(s.best_epoch == 10);
  }
  SUBCASE("monotone improvement never stops") {
    StopState s;
    for (int e = 0; e < 100; ++e) {
      s = early_stop_step(s, e * 0.01, cfg);
      CHECK_FALSE(s.stop_flag);
    }
  }
}

TEST_CASE("train_fold") {
  const auto train = separable_text_data(64, 1);
  const auto val = separable_text_data(32, 2);
  const auto cfg = fast_config();

  SUBCASE("separable data reaches macro-F1 1.0") {
    const auto r = train_fold(ModelConfigId::of(ModelKind::M1), train, val, cfg, HybridHeadConfig{});
    double best = 0;
    for (const auto& e : r.record.epochs) best = std::max(best, e.val_macro_f1);
    CHECK(best == 1.0);
    CHECK(r.record.stopped_epoch <= cfg.max_epochs);
    for (std::size_t i = 1; i < r.record.epochs.size(); ++i) {
      CHECK(r.record.epochs[i].lr <= r.record.epochs[i - 1].lr);
    }
    // returned model is the best-epoch snapshot
    const auto preds = argmax_rows(predict_proba(r.model, val));
    CHECK(evaluate_predictions(preds, val.labels, 2).macro_f1 ==
          r.record.epochs[r.record.best_epoch - 1].val_macro_f1);
    CHECK(r.record.to_csv().rfind("epoch,loss,val_macro_f1,lr\n", 0) == 0);
  }
  SUBCASE("same seed, identical record") {
    auto c = cfg;
    c.max_epochs = 8;
    const auto a = train_fold(ModelConfigId::of(ModelKind::M7), train, val, c, HybridHeadConfig{});
    const auto b = train_fold(ModelConfigId::of(ModelKind::M7), train, val, c, HybridHeadConfig{});
    CHECK(a.record == b.record);
    c.seed = 6;
    const auto d = train_fold(ModelConfigId::of(ModelKind::M7), train, val, c, HybridHeadConfig{});
    CHECK_FALSE(a.record == d.record);
  }
  SUBCASE("frozen parameters are untouched") {
    auto c = cfg;
    c.max_epochs = 3;
    FusionModel m(ModelConfigId::of(ModelKind::M1), HybridHeadConfig{}, 3);
    Matrix before;
    for (auto* p : m.parameters()) if (p->name == "classifier.hidden.weight") before = p->value;
    REQUIRE(before.size() > 0);
    auto r = train_fold(m, train, val, c, {"classifier.hidden.weight"});
    for (auto* p : r.model.parameters()) {
      if (p->name == "classifier.hidden.weight") CHECK(p->value == before);
      if (p->name == "classifier.output.weight") CHECK(p->value != Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  SUBCASE("divergence reports the epoch") {
    auto bad = train;
    bad.text *= 1e300;
    bad.text *= 1e300;
    try {
      train_fold(ModelConfigId::of(ModelKind::M1), bad, val, cfg, HybridHeadConfig{});
      FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
      CHECK(e.epoch() == 1);
    }
  }
  SUBCASE("bad config") {
    auto c = cfg;
    c.label_smoothing = 1.0;
    CHECK_THROWS_AS(train_fold(ModelConfigId::of(ModelKind::M1), train, val, c, HybridHeadConfig{}), ConfigError);
  }
}

TEST_CASE("run_cv") {
  auto data = separable_text_data(10, 3);
  DatasetManifest m;
  m.task = Task::A;
  for (std::size_t i = 0; i < data.size(); ++i) {
    MemeSample s;
    s.id = data.ids[i];
    s.label_a = data.labels[i];
    m.samples.push_back(s);
  }
  const auto folds = stratified_kfold(m, 2, 42);
  auto cfg = fast_config();
  cfg.max_epochs = 5;
  const auto results = run_cv(ModelConfigId::of(ModelKind::M1), data, folds, cfg, HybridHeadConfig{});
  REQUIRE(results.size() == 2);
  std::vector<int> seen(10, 0);
  for (const auto& r : results) {
    CHECK(r.val_rows.size() == 5);
    CHECK(r.predictions.size() == 5);
    for (auto row : r.val_rows) seen[row]++;
  }
  for (int s : seen) CHECK(s == 1);
}

TEST_CASE("run config file") {
  const auto cfg = parse_run_config(R"({"learning_rate": 0.001, "max_epochs": 7, "latent_dim": 64, "folds": 3})");
  CHECK(cfg.train.learning_rate == 0.001);
  CHECK(cfg.train.max_epochs == 7);
  CHECK(cfg.train.weight_decay == 1e-2);
  CHECK(cfg.head.latent_dim == 64);
  CHECK(cfg.folds == 3);
  CHECK_THROWS_AS(parse_run_config(R"({"learning_rat": 0.1})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"dropout_rate": 1.5})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1,2]"), ConfigError);
  const auto back = parse_run_config(run_config_to_json(cfg));
  CHECK(back.train.max_epochs == 7);
  CHECK(back.head.latent_dim == 64);
}
