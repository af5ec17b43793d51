#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "voicing/train.hpp"

using namespace voicing;
using namespace voicing::models;

namespace {

// Two well-separated Gaussian blobs in 2-D.
void make_blobs(std::vector<std::vector<double>>& x, std::vector<int>& y,
                std::size_t per_class, unsigned seed, double spread = 0.3) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, spread);
  for (std::size_t i = 0; i < per_class; ++i) {
    x.push_back({2.0 + gauss(rng), 2.0 + gauss(rng)});
    y.push_back(1);
    x.push_back({-2.0 + gauss(rng), -2.0 + gauss(rng)});
    y.push_back(-1);
  }
}

void check_kkt(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
               const SvmModel& model, double c_pos, double c_neg, double tol) {
  // Recover each training point's alpha from the stored support vectors.
  for (std::size_t i = 0; i < x.size(); ++i) {
    double alpha = 0.0;
    for (std::size_t s = 0; s < model.support_vectors.size(); ++s)
      if (model.support_vectors[s] == x[i] && model.labels[s] == double(y[i]))
        alpha = model.alphas[s];
    const double box = y[i] > 0 ? c_pos : c_neg;
    const double r = double(y[i]) * model.decision(x[i]);
    if (alpha <= 1e-9)
      CHECK(r >= 1.0 - tol);
    else if (alpha >= box - 1e-9)
      CHECK(r <= 1.0 + tol);
    else
      CHECK(std::abs(r - 1.0) <= tol);
  }
}

features::FeatureSet synthetic_feature_set(std::size_t n, std::size_t dim,
                                           unsigned seed, double separation = 2.0) {
  // Class-dependent bump location plus noise, a stand-in for FB40 spectra.
  features::FeatureSet set;
  set.variant = dim == 40 ? features::FeatureVariant::kFb40 : features::FeatureVariant::kCues;
  set.corpus_id = "synthetic";
  std::mt19937 rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.5);
  for (std::size_t i = 0; i < n; ++i) {
    const bool voiced = i % 2 == 0;
    features::FeatureRow row;
    row.utterance_id = "u" + std::to_string(i / 8);
    row.landmark_time_s = 0.01 * double(i);
    row.landmark_type = corpus::LandmarkType::kFc;
    row.label = voiced ? corpus::Voicing::kVoiced : corpus::Voicing::kUnvoiced;
    row.values.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      const double center = voiced ? double(dim) * 0.25 : double(dim) * 0.75;
      const double bump = separation * std::exp(-0.05 * (double(d) - center) * (double(d) - center));
      row.values[d] = bump + gauss(rng);
    }
    set.rows.push_back(std::move(row));
  }
  return set;
}

}  // namespace

TEST_SUITE_BEGIN("models");

TEST_CASE("class weights") {
  SUBCASE("inverse frequency from the training counts") {
    auto [w_v, w_u] = class_weights(56269, 40475);
    CHECK(w_v == doctest::Approx(0.8597).epsilon(1e-4));
    CHECK(w_u == doctest::Approx(1.1951).epsilon(1e-4));
    // Exact formula values.
    CHECK(w_v == doctest::Approx(96744.0 / 112538.0).epsilon(1e-12));
    CHECK(w_u == doctest::Approx(96744.0 / 80950.0).epsilon(1e-12));
  }
  SUBCASE("balanced labels give unit weights") {
    auto [w_v, w_u] = class_weights(500, 500);
    CHECK(w_v == 1.0);
    CHECK(w_u == 1.0);
  }
  SUBCASE("small counts") {
    auto [w_v, w_u] = class_weights(3, 1);
    CHECK(w_v == doctest::Approx(2.0 / 3.0));
    CHECK(w_u == doctest::Approx(2.0));
  }
  SUBCASE("single class rejected") {
    CHECK_THROWS_AS(class_weights(10, 0), DataError);
  }
}

TEST_CASE("stratified split") {
  std::vector<int> y;
  for (int i = 0; i < 70; ++i) y.push_back(1);
  for (int i = 0; i < 30; ++i) y.push_back(-1);

  auto split = stratified_split(y, 0.10, 42);
  CHECK(split.dev.size() == 10);
  CHECK(split.train.size() == 90);
  std::size_t dev_pos = 0;
  for (const auto i : split.dev)
    if (y[i] > 0) ++dev_pos;
  CHECK(dev_pos == 7);  // proportions preserved

  auto split2 = stratified_split(y, 0.10, 42);
  CHECK(split2.dev == split.dev);
  CHECK(split2.train == split.train);

  std::vector<int> tiny{1, 1, 1, -1};
  CHECK_THROWS_AS(stratified_split(tiny, 0.10, 1), DataError);
}

TEST_CASE("early stopping follows the patience rule") {
  // Scripted losses: improvement at epochs 1 and 2, then 10 non-improving.
  std::vector<double> losses{0.5, 0.4};
  for (int i = 0; i < 10; ++i) losses.push_back(0.41 + 0.001 * i);

  EarlyStopper stopper(10);
  int stopped_at = -1;
  for (int epoch = 1; epoch <= int(losses.size()); ++epoch) {
    if (stopper.observe(epoch, losses[std::size_t(epoch - 1)])) {
      stopped_at = epoch;
      break;
    }
  }
  CHECK(stopped_at == 12);
  CHECK(stopper.best_epoch() == 2);
  CHECK(stopper.best_loss() == doctest::Approx(0.4));

  SUBCASE("equal loss does not count as improvement") {
    EarlyStopper s(2);
    CHECK(!s.observe(1, 0.3));
    CHECK(!s.observe(2, 0.3));
    CHECK(s.observe(3, 0.3));
    CHECK(s.best_epoch() == 1);
  }
}

TEST_CASE("adam optimizer") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    std::vector<double> params{1.0, -2.0};
    AdamState state(2);
    adam_step(state, params, {0.0, 0.0});
    CHECK(params[0] == 1.0);
    CHECK(params[1] == -2.0);
  }

  SUBCASE("first step moves by about lr in the gradient sign direction") {
    std::vector<double> params{0.0, 0.0};
    AdamState state(2, 1e-3);
    adam_step(state, params, {0.5, -3.0});
    CHECK(params[0] == doctest::Approx(-1e-3).epsilon(1e-4));
    CHECK(params[1] == doctest::Approx(1e-3).epsilon(1e-4));
  }

  SUBCASE("three scripted steps match the hand-rolled recurrence") {
    const std::vector<std::vector<double>> grads{{0.3}, {-0.7}, {0.2}};
    std::vector<double> params{0.1};
    AdamState state(1, 0.01);
    double m = 0.0, v = 0.0, theta = 0.1;
    for (std::size_t t = 1; t <= grads.size(); ++t) {
      adam_step(state, params, grads[t - 1]);
      const double g = grads[t - 1][0];
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double m_hat = m / (1.0 - std::pow(0.9, double(t)));
      const double v_hat = v / (1.0 - std::pow(0.999, double(t)));
      theta -= 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8);
      CHECK(params[0] == doctest::Approx(theta).epsilon(1e-12));
    }
  }
}

TEST_CASE("network forward basics") {
  NetworkConfig cfg;
  cfg.input_len = 16;
  cfg.conv_blocks = {{2, 3, 2}};
  cfg.fc_sizes = {4};
  cfg.seed = 3;
  Network net(cfg);
  Workspace ws;

  SUBCASE("all-zero parameters give probability one half") {
    std::fill(net.params().begin(), net.params().end(), 0.0);
    std::vector<double> input(16, 0.7);
    CHECK(net.forward(input, ws) == doctest::Approx(0.5));
  }

  SUBCASE("weighted loss with unit weight equals the plain cross-entropy") {
    std::vector<double> input(16);
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : input) v = dist(rng);
    const double p = net.forward(input, ws);
    const double direct = -(1.0 * std::log(p));
    CHECK(net.loss(input, 1.0, 1.0, ws) == doctest::Approx(direct).epsilon(1e-12));
    const double direct0 = -std::log(1.0 - p);
    CHECK(net.loss(input, 0.0, 1.0, ws) == doctest::Approx(direct0).epsilon(1e-12));
    CHECK(net.loss(input, 1.0, 2.5, ws) == doctest::Approx(2.5 * direct).epsilon(1e-12));
  }

  SUBCASE("max-pool routes gradient only to the argmax position") {
    NetworkConfig pool_cfg;
    pool_cfg.input_len = 8;
    pool_cfg.conv_blocks = {{1, 1, 2}};  // 1-tap conv keeps values visible
    pool_cfg.fc_sizes = {};
    pool_cfg.seed = 5;
    Network pnet(pool_cfg);
    // Make the conv an identity: weight 1, bias 0.
    pnet.params()[0] = 1.0;
    pnet.params()[1] = 0.0;
    std::vector<double> input{0.9, 0.1, 0.2, 0.8, 0.3, 0.4, 0.7, 0.6};
    std::vector<double> grad(pnet.n_params(), 0.0);
    Workspace pws;
    pnet.backward(input, 1.0, 1.0, pws, grad);
    // argmax positions: 0, 3, 5(=0.4? no: window {0.3,0.4} -> index 5), 6
    REQUIRE(pws.argmax[1].size() == 4);
    CHECK(pws.argmax[1][0] == 0);
    CHECK(pws.argmax[1][1] == 3);
    CHECK(pws.argmax[1][2] == 5);
    CHECK(pws.argmax[1][3] == 6);
  }
}

TEST_CASE("gradient check against central finite differences") {
  const double h = 1e-5;
  auto check_network = [&](NetworkConfig cfg, unsigned input_seed) {
    Network net(cfg);
    std::vector<double> input(std::size_t(cfg.input_len * cfg.input_channels));
    std::mt19937 rng(input_seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (auto& v : input) v = dist(rng);
    const double y = 1.0, w = 1.3;

    Workspace ws;
    std::vector<double> grad(net.n_params(), 0.0);
    net.backward(input, y, w, ws, grad);

    std::size_t checked = 0;
    for (std::size_t p = 0; p < net.n_params(); ++p) {
      const double saved = net.params()[p];
      net.params()[p] = saved + h;
      const double lp = net.loss(input, y, w, ws);
      net.params()[p] = saved - h;
      const double lm = net.loss(input, y, w, ws);
      net.params()[p] = saved;
      const double numeric = (lp - lm) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(grad[p]), 1e-6});
      CHECK(std::abs(grad[p] - numeric) / denom < 1e-4);
      ++checked;
    }
    CHECK(checked == net.n_params());
  };

  SUBCASE("tiny CNN: input 16, one conv block, fc 4") {
    NetworkConfig cfg;
    cfg.input_len = 16;
    cfg.conv_blocks = {{2, 3, 2}};
    cfg.fc_sizes = {4};
    cfg.seed = 11;
    check_network(cfg, 101);
  }

  SUBCASE("two conv blocks") {
    NetworkConfig cfg;
    cfg.input_len = 40;
    cfg.conv_blocks = {{3, 5, 2}, {4, 3, 2}};
    cfg.fc_sizes = {8};
    cfg.seed = 13;
    check_network(cfg, 102);
  }

  SUBCASE("feedforward") {
    NetworkConfig cfg;
    cfg.input_len = 8;
    cfg.fc_sizes = {5, 3};
    cfg.seed = 17;
    check_network(cfg, 103);
  }
}

TEST_CASE("conv stack is translation-covariant across the pool stride") {
  NetworkConfig cfg;
  cfg.input_len = 24;
  cfg.conv_blocks = {{3, 3, 2}};
  cfg.fc_sizes = {};
  cfg.seed = 23;
  Network net(cfg);

  std::vector<double> base(24, 0.0);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(0.1, 1.0);
  for (std::size_t i = 4; i < 18; ++i) base[i] = dist(rng);
  std::vector<double> shifted(24, 0.0);
  for (std::size_t i = 2; i < 24; ++i) shifted[i] = base[i - 2];  // shift by pool stride

  Workspace ws1, ws2;
  net.forward(base, ws1);
  net.forward(shifted, ws2);
  // Stage 2 is the post-pool feature map: 3 channels x 11.
  const auto& m1 = ws1.stages[2];
  const auto& m2 = ws2.stages[2];
  const int out_len = 11;
  for (int c = 0; c < 3; ++c)
    for (int i = 2; i < out_len; ++i)
      CHECK(m2[std::size_t(c * out_len + i)] ==
            doctest::Approx(m1[std::size_t(c * out_len + i - 1)]).epsilon(1e-12));
}

TEST_CASE("SMO on separable blobs") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(x, y, 20, 123);
  SvmConfig cfg;
  cfg.c = 10.0;
  cfg.gamma = 0.5;
  auto model = svm_train(x, y, cfg);

  SUBCASE("perfect training accuracy") {
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(svm_predict(model, x[i]).positive == (y[i] > 0));
  }

  SUBCASE("KKT conditions hold within tolerance") {
    check_kkt(x, y, model, cfg.c, cfg.c, 1e-3);
  }

  SUBCASE("dual constraint sum alpha_i y_i = 0") {
    double acc = 0.0;
    for (std::size_t s = 0; s < model.alphas.size(); ++s)
      acc += model.alphas[s] * model.labels[s];
    CHECK(std::abs(acc) < 1e-6);
  }

  SUBCASE("decision equals a direct kernel-sum recomputation") {
    std::mt19937 rng(9);
    std::uniform_real_distribution<double> dist(-3.0, 3.0);
    for (int probe = 0; probe < 20; ++probe) {
      std::vector<double> p{dist(rng), dist(rng)};
      double direct = model.bias;
      for (std::size_t s = 0; s < model.support_vectors.size(); ++s) {
        const double dx = p[0] - model.support_vectors[s][0];
        const double dy = p[1] - model.support_vectors[s][1];
        direct += model.alphas[s] * model.labels[s] * std::exp(-model.gamma * (dx * dx + dy * dy));
      }
      CHECK(std::abs(model.decision(p) - direct) < 1e-10);
    }
  }

  SUBCASE("support vectors of the separable fit classify correctly") {
    for (std::size_t s = 0; s < model.support_vectors.size(); ++s)
      CHECK(svm_predict(model, model.support_vectors[s]).positive == (model.labels[s] > 0));
  }

  SUBCASE("dimension mismatch rejected") {
    CHECK_THROWS_AS(model.decision(std::vector<double>{1.0, 2.0, 3.0}), DataError);
  }
}

TEST_CASE("SMO separates XOR with the RBF kernel") {
  const std::vector<std::vector<double>> x{{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  const std::vector<int> y{1, -1, -1, 1};
  SvmConfig cfg;
  cfg.c = 10.0;
  cfg.gamma = 1.0;
  auto model = svm_train(x, y, cfg);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(svm_predict(model, x[i]).positive == (y[i] > 0));
  check_kkt(x, y, model, cfg.c, cfg.c, 1e-3);
}

TEST_CASE("duplicating every training point keeps the decision function") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(x, y, 12, 321);
  SvmConfig cfg;
  cfg.c = 50.0;           // wide box: no alpha lands on the bound
  cfg.tolerance = 1e-8;   // both solves must sit at the exact dual optimum
  cfg.gamma = 0.5;
  auto base = svm_train(x, y, cfg);

  auto x2 = x;
  auto y2 = y;
  x2.insert(x2.end(), x.begin(), x.end());
  y2.insert(y2.end(), y.begin(), y.end());
  auto doubled = svm_train(x2, y2, cfg);

  for (double px = -3.0; px <= 3.0; px += 1.0)
    for (double py = -3.0; py <= 3.0; py += 1.0) {
      std::vector<double> probe{px, py};
      CHECK(base.decision(probe) == doctest::Approx(doubled.decision(probe)).epsilon(1e-6));
    }
}

TEST_CASE("vanishing gamma flattens the decision function") {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  make_blobs(x, y, 8, 55);
  SvmConfig cfg;
  cfg.c = 1.0;
  cfg.gamma = 1e-9;
  auto model = svm_train(x, y, cfg);
  const double m1 = model.decision(std::vector<double>{3.0, 3.0});
  const double m2 = model.decision(std::vector<double>{-3.0, -3.0});
  CHECK(std::abs(m1 - m2) < 1e-3);
}

TEST_CASE("svm rejects non-finite features and single-class labels") {
  CHECK_THROWS_AS(
      svm_train({{1.0, std::nan("")}, {0.0, 1.0}}, {1, -1}, SvmConfig{}), DataError);
  CHECK_THROWS_AS(svm_train({{1.0}, {2.0}}, {1, 1}, SvmConfig{}), DataError);
}

TEST_CASE("train() on synthetic separable data") {
  TrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.patience = 10;
  cfg.batch_size = 16;
  cfg.seed = 2024;

  SUBCASE("CNN on FB40-shaped inputs reaches 0.99 training accuracy") {
    auto set = synthetic_feature_set(240, 40, 77);
    auto result = train(ModelFamily::kCnn, set, cfg);
    std::size_t correct = 0;
    for (const auto& row : set.rows)
      if (result.artifact.predict(row.values).label == row.label) ++correct;
    CHECK(double(correct) / double(set.rows.size()) >= 0.99);
    CHECK(!result.log.empty());
  }

  SUBCASE("MLP trains too") {
    auto set = synthetic_feature_set(240, 40, 78);
    auto result = train(ModelFamily::kMlp, set, cfg);
    std::size_t correct = 0;
    for (const auto& row : set.rows)
      if (result.artifact.predict(row.values).label == row.label) ++correct;
    CHECK(double(correct) / double(set.rows.size()) >= 0.99);
  }

  SUBCASE("SVM on 8-dim cues-shaped inputs") {
    auto set = synthetic_feature_set(240, 8, 79);
    auto result = train(ModelFamily::kSvm, set, cfg);
    std::size_t correct = 0;
    for (const auto& row : set.rows)
      if (result.artifact.predict(row.values).label == row.label) ++correct;
    CHECK(double(correct) / double(set.rows.size()) >= 0.99);
    CHECK(result.log.size() == 1);  // no grid search: a single candidate row
  }

  SUBCASE("same seed gives byte-identical artifacts") {
    auto set = synthetic_feature_set(160, 40, 80);
    auto a = train(ModelFamily::kCnn, set, cfg);
    auto b = train(ModelFamily::kCnn, set, cfg);
    CHECK(serialize_model(a.artifact) == serialize_model(b.artifact));
  }

  SUBCASE("restored network parameters reproduce the logged minimum dev loss") {
    auto set = synthetic_feature_set(200, 40, 81);
    auto result = train(ModelFamily::kCnn, set, cfg);
    double min_dev = 1e9;
    for (const auto& row : result.log) min_dev = std::min(min_dev, row.dev_loss);

    // Recompute the dev loss of the restored parameters over the same split.
    std::vector<int> y;
    for (const auto& row : set.rows)
      y.push_back(row.label == corpus::Voicing::kVoiced ? 1 : -1);
    auto split = stratified_split(y, cfg.dev_fraction, cfg.seed);
    std::size_t pos = 0, neg = 0;
    for (const auto i : split.train) (y[i] > 0 ? pos : neg)++;
    auto [w_pos, w_neg] = class_weights(pos, neg);
    auto net = Network::deserialize(*result.artifact.net_config, result.artifact.net_params);
    Workspace ws;
    double dev_loss = 0.0;
    for (const auto i : split.dev) {
      const auto xs = result.artifact.standardizer.apply(set.rows[i].values);
      dev_loss += net.loss(xs, y[i] > 0 ? 1.0 : 0.0, y[i] > 0 ? w_pos : w_neg, ws);
    }
    dev_loss /= double(split.dev.size());
    CHECK(dev_loss == doctest::Approx(min_dev).epsilon(1e-9));
  }
}

TEST_CASE("non-finite activations raise with the stage index") {
  NetworkConfig cfg;
  cfg.input_len = 8;
  cfg.fc_sizes = {4};
  cfg.seed = 2;
  Network net(cfg);
  net.params()[0] = 1e308;
  net.params()[1] = 1e308;
  std::vector<double> input(8, 1e5);
  Workspace ws;
  try {
    net.forward(input, ws);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("stage") != std::string::npos);
  }
}

TEST_CASE("model serialization") {
  TrainConfig cfg;
  cfg.max_epochs = 8;
  cfg.patience = 5;
  cfg.seed = 9;

  SUBCASE("round trip preserves predictions exactly") {
    auto set = synthetic_feature_set(120, 40, 91);
    auto result = train(ModelFamily::kCnn, set, cfg);
    const auto text = serialize_model(result.artifact);
    auto restored = deserialize_model(text);
    std::mt19937 rng(14);
    std::uniform_real_distribution<double> dist(-2.0, 4.0);
    for (int probe = 0; probe < 100; ++probe) {
      std::vector<double> x(40);
      for (auto& v : x) v = dist(rng);
      const auto a = result.artifact.predict(x);
      const auto b = restored.predict(x);
      CHECK(a.label == b.label);
      CHECK(a.score == b.score);  // bit-exact parameters
    }
    CHECK(serialize_model(restored) == text);
  }

  SUBCASE("svm artifacts round trip") {
    auto set = synthetic_feature_set(120, 8, 92);
    auto result = train(ModelFamily::kSvm, set, cfg);
    auto restored = deserialize_model(serialize_model(result.artifact));
    for (const auto& row : set.rows) {
      const auto a = result.artifact.predict(row.values);
      const auto b = restored.predict(row.values);
      CHECK(a.score == b.score);
    }
  }

  SUBCASE("corrupted parameter blob fails the checksum") {
    auto set = synthetic_feature_set(120, 8, 93);
    auto result = train(ModelFamily::kSvm, set, cfg);
    auto text = serialize_model(result.artifact);
    const auto pos = text.find("\"alphas\": \"");
    REQUIRE(pos != std::string::npos);
    const auto corrupt_at = pos + std::string("\"alphas\": \"").size() + 2;
    text[corrupt_at] = text[corrupt_at] == 'A' ? 'B' : 'A';
    CHECK_THROWS_WITH_AS(deserialize_model(text) /* checksum must differ */,
                         doctest::Contains("checksum"), DataError);
  }

  SUBCASE("artifact refuses inputs of the wrong dimension") {
    auto set = synthetic_feature_set(120, 40, 94);
    auto result = train(ModelFamily::kCnn, set, cfg);
    std::vector<double> wrong(513, 0.0);
    CHECK_THROWS_AS(result.artifact.predict(wrong), DataError);
  }

  SUBCASE("container version mismatch rejected") {
    auto set = synthetic_feature_set(120, 8, 96);
    auto result = train(ModelFamily::kSvm, set, cfg);
    auto text = serialize_model(result.artifact);
    const auto pos = text.find("\"version\": 1");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, std::string("\"version\": 1").size(), "\"version\": 9");
    CHECK_THROWS_WITH_AS(deserialize_model(text), doctest::Contains("version"), DataError);
  }

  SUBCASE("save/load through a file") {
    namespace fs = std::filesystem;
    auto set = synthetic_feature_set(120, 8, 95);
    auto result = train(ModelFamily::kSvm, set, cfg);
    const auto path = fs::temp_directory_path() / "voicing_model_test.json";
    save_model(result.artifact, path);
    auto loaded = load_model(path);
    CHECK(serialize_model(loaded) == serialize_model(result.artifact));
    fs::remove(path);
  }
}

TEST_SUITE_END();
