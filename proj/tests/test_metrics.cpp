#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "unlbench/data.hpp"
#include "unlbench/errors.hpp"
#include "unlbench/metrics.hpp"
#include "unlbench/model.hpp"

using namespace unlbench;

namespace {

LogitGaps gaps(double f, double r, double tf, double tr) {
  LogitGaps g;
  g.g_f = f;
  g.g_r = r;
  g.g_tf = tf;
  g.g_tr = tr;
  return g;
}

ReprScores repr3(const double gk[3], const double cka[3]) {
  ReprScores r;
  const char* names[3] = {"oh-like", "cub-like", "dn-like"};
  for (int i = 0; i < 3; ++i) r.datasets.push_back({names[i], 0, 0, gk[i], cka[i], 0});
  return r;
}

Dataset rows_dataset(const Matrix& x) {
  Dataset d;
  d.x = x;
  d.num_classes = 3;
  d.y.assign(x.rows(), 0);
  return d;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("AGL reproduces published gap rows") {
  CHECK(std::abs(compute_agl(gaps(0.010, 0.035, 0.010, 0.009)) - 0.94) <= 0.005);
  CHECK(std::abs(compute_agl(gaps(0.009, 0.014, 0.009, 0.011)) - 0.96) <= 0.005);
  CHECK(compute_agl(gaps(0, 0, 0, 0)) == 1.0);
  CHECK_THROWS_AS(compute_agl(gaps(1.2, 0, 0, 0)), DomainError);
  CHECK_THROWS_AS(compute_agl(gaps(-0.1, 0, 0, 0)), DomainError);
}

TEST_CASE("AGR and H-LR reproduce published rows") {
  const double duck_g[3] = {0.025, 0.021, 0.007}, duck_c[3] = {0.907, 0.832, 0.849};
  const double pl_g[3] = {0.030, 0.064, 0.020}, pl_c[3] = {0.916, 0.847, 0.845};
  CHECK(std::abs(compute_agr(repr3(duck_g, duck_c), ScenarioKind::Random, std::nullopt) - 0.85) <= 0.005);
  CHECK(std::abs(compute_agr(repr3(pl_g, pl_c), ScenarioKind::Random, std::nullopt) - 0.84) <= 0.005);
  const double zero[3] = {0, 0, 0}, one[3] = {1, 1, 1};
  CHECK(compute_agr(repr3(zero, one), ScenarioKind::Random, std::nullopt) == 1.0);

  CHECK(std::abs(compute_hlr(0.96, 0.85) - 0.90) <= 0.005);
  CHECK(std::abs(compute_hlr(0.94, 0.84) - 0.89) <= 0.005);
  CHECK(compute_hlr(1, 1) == 1.0);
  CHECK(compute_hlr(0, 0.7) == 0.0);
  CHECK_THROWS_AS(compute_hlr(1.1, 0.5), DomainError);
}

TEST_CASE("AGR scenario dataset selection") {
  const double g[3] = {0.1, 0.5, 0.2}, c[3] = {0.9, 0.4, 0.8};
  const ReprScores r = repr3(g, c);
  CHECK(agr_datasets(r, ScenarioKind::Random, std::nullopt).size() == 3);
  CHECK(agr_datasets(r, ScenarioKind::Top, std::string("cub-like")) == std::vector<std::string>{"cub-like"});
  CHECK(compute_agr(r, ScenarioKind::Top, std::string("cub-like")) == doctest::Approx(0.5 * 0.4));
  CHECK_THROWS_AS(compute_agr(r, ScenarioKind::Top, std::nullopt), ConfigError);
  CHECK_THROWS_AS(compute_agr(r, ScenarioKind::Top, std::string("missing")), ConfigError);
}

TEST_CASE("AGL, AGR and H-LR monotonicity and bounds") {
  SeededRng rng(12, 0);
  for (int t = 0; t < 500; ++t) {
    double v[4];
    for (auto& x : v) x = rng.uniform();
    const double base = compute_agl(gaps(v[0], v[1], v[2], v[3]));
    const int k = static_cast<int>(rng.uniform_index(4));
    double w[4] = {v[0], v[1], v[2], v[3]};
    w[k] *= rng.uniform();
    CHECK(compute_agl(gaps(w[0], w[1], w[2], w[3])) >= base);

    double gk[3], ck[3];
    for (auto& x : gk) x = rng.uniform();
    for (auto& x : ck) x = rng.uniform();
    const double agr = compute_agr(repr3(gk, ck), ScenarioKind::Random, std::nullopt);
    double ck2[3] = {ck[0], ck[1], ck[2]};
    ck2[t % 3] = ck2[t % 3] + (1.0 - ck2[t % 3]) * rng.uniform();
    CHECK(compute_agr(repr3(gk, ck2), ScenarioKind::Random, std::nullopt) >= agr);
    double gk2[3] = {gk[0], gk[1], gk[2]};
    gk2[t % 3] *= rng.uniform();
    CHECK(compute_agr(repr3(gk2, ck), ScenarioKind::Random, std::nullopt) >= agr);

    const double a = rng.uniform(), b = rng.uniform();
    const double h = compute_hlr(a, b);
    CHECK(h >= std::min(a, b) - 1e-15);
    CHECK(h <= std::max(a, b) + 1e-15);
    CHECK(h <= std::sqrt(a * b) + 1e-15);
  }
}

TEST_CASE("CKA properties") {
  SeededRng rng(21, 0);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 8 + rng.uniform_index(20);
    const Matrix a = oracle::random_matrix(n, 3 + rng.uniform_index(5), rng);
    const Matrix b = oracle::random_matrix(n, 2 + rng.uniform_index(6), rng);
    const double ab = compute_cka(a, b);
    CHECK(std::abs(compute_cka(a, a) - 1.0) <= 1e-9);
    CHECK(std::abs(ab - compute_cka(b, a)) <= 1e-9);
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0 + 1e-9);
    CHECK(std::abs(ab - oracle::cka(a, b)) <= 1e-9);
    const Matrix q = oracle::random_orthogonal(a.cols(), rng);
    CHECK(std::abs(compute_cka(matmul(a, q), b) - ab) <= 1e-9);
    Matrix scaled = b;
    for (auto& v : scaled.values()) v *= 3.7;
    CHECK(std::abs(compute_cka(a, scaled) - ab) <= 1e-9);
  }
}

TEST_CASE("CKA edge cases") {
  SeededRng rng(22, 0);
  const Matrix a = oracle::random_matrix(8, 3, rng);
  const Matrix b = oracle::random_matrix(8, 5, rng);
  CHECK(std::abs(compute_cka(a, b) - oracle::cka(a, b)) <= 1e-9);
  const Matrix q = oracle::random_orthogonal(3, rng);
  CHECK(std::abs(compute_cka(a, matmul(a, q)) - 1.0) <= 1e-9);
  CHECK(compute_cka(a, Matrix(8, 2, 1.0)) == 0.0);
  CHECK_THROWS_AS(compute_cka(a, oracle::random_matrix(7, 3, rng)), ShapeError);
  CHECK_THROWS_AS(compute_cka(Matrix(2, 3, 1.0), Matrix(2, 3, 1.0)), DegenerateInputError);
  const double std_form = compute_cka(a, b);
  const double lit = compute_cka(a, b, CkaForm::LiteralSquared);
  CHECK(std::isfinite(lit));
  CHECK(lit != std_form);
}

TEST_CASE("k-NN trivial cases") {
  Matrix x(40, 2);
  std::vector<Label> y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    y[i] = i < 20 ? 0 : 1;
    x(i, 0) = y[i] == 0 ? 1.0 : 0.01 * static_cast<double>(i);
    x(i, 1) = y[i] == 0 ? 0.01 * static_cast<double>(i) : 1.0;
  }
  CHECK(compute_knn_accuracy(x, y, 2, 1, 3) == 1.0);

  const Matrix same(30, 3, 0.7);
  const std::vector<Label> mixed = [] {
    std::vector<Label> l;
    for (int i = 0; i < 30; ++i) l.push_back(static_cast<Label>(2 - i % 3));
    return l;
  }();
  // Training rows are class-major, so equal distances resolve to the lowest class.
  const auto split = stratified_split(mixed, 3, 8);
  std::vector<Label> train_y;
  for (auto r : split.train) train_y.push_back(mixed[r]);
  const auto pred = knn_predict(select_rows(same, split.train), train_y, Matrix(4, 3, 0.7), 5, 3);
  for (auto p : pred) CHECK(p == 0);
  CHECK(compute_knn_accuracy(same, mixed, 3, 5, 8) == doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(compute_knn_accuracy(same, mixed, 3, 9, 1), DegenerateInputError);
}

TEST_CASE("stratified split") {
  std::vector<Label> y;
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < 11 + c; ++i) y.push_back(static_cast<Label>(c));
  const auto s = stratified_split(y, 3, 4);
  CHECK(s.test.size() == 2 + 2 + 2);
  CHECK(s.train.size() + s.test.size() == y.size());
  CHECK(std::is_sorted(s.test.begin(), s.test.end()));
  for (std::size_t i = 1; i < s.train.size(); ++i)
    if (y[s.train[i]] == y[s.train[i - 1]]) CHECK(s.train[i] > s.train[i - 1]);
    else CHECK(y[s.train[i]] > y[s.train[i - 1]]);
  const auto again = stratified_split(y, 3, 4);
  CHECK(again.test == s.test);
}

TEST_CASE("k-NN equals the brute-force oracle") {
  SeededRng rng(31, 0);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 30 + rng.uniform_index(71);
    const std::size_t classes = 2 + rng.uniform_index(3);
    Matrix x = oracle::random_matrix(n, 2 + rng.uniform_index(4), rng);
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<Label>(i % classes);
    // Duplicate rows and zero rows exercise the tie contracts.
    for (std::size_t i = 0; i + 7 < n; i += 7) {
      auto dst = x.row(i + 1);
      const auto src = x.row(i);
      std::copy(src.begin(), src.end(), dst.begin());
    }
    if (t % 5 == 0) std::fill(x.row(3).begin(), x.row(3).end(), 0.0);
    const auto split = stratified_split(y, classes, 1000 + t);
    std::vector<Label> ty, sy;
    for (auto r : split.train) ty.push_back(y[r]);
    for (auto r : split.test) sy.push_back(y[r]);
    const Matrix tr = select_rows(x, split.train), te = select_rows(x, split.test);
    const auto got = knn_predict(tr, ty, te, 5, classes);
    CHECK(got == oracle::knn(tr, ty, te, 5, classes));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < got.size(); ++i) correct += got[i] == sy[i] ? 1 : 0;
    CHECK(compute_knn_accuracy(x, y, classes, 5, 1000 + t) ==
          static_cast<double>(correct) / static_cast<double>(got.size()));
  }
}

TEST_CASE("linear SVM separates a separable line") {
  Matrix x(40, 1);
  std::vector<int> l(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = i < 20 ? -1.0 - 0.05 * i : 1.0 + 0.05 * i;
    l[i] = i < 20 ? -1 : 1;
  }
  LinearSvm svm;
  svm.fit(x, l, {});
  for (int i = 0; i < 40; ++i) CHECK((svm.decision(x.row(i)) > 0) == (l[i] > 0));
  const std::vector<int> one(40, 1);
  CHECK_THROWS_AS(svm.fit(x, one, {}), DegenerateInputError);
}

TEST_CASE("MIA on a separable construction") {
  // Class-0 logit = 10 * x0; every other logit is 0.
  MlpParams p = MlpParams::zeros(2, 2, 2, 3);
  p.w1 = Matrix::identity(2);
  p.w2 = Matrix::identity(2);
  p.w_head(0, 0) = 10.0;
  Matrix members(50, 2), non_members(50, 2), forget(20, 2);
  for (std::size_t i = 0; i < 50; ++i) {
    members(i, 0) = 3.0 + 0.01 * static_cast<double>(i);
    non_members(i, 0) = 0.002 * static_cast<double>(i);
  }
  const auto conf = max_confidence(p, members);
  CHECK(conf[0] > 0.999999);
  CHECK(max_confidence(p, forget)[0] == doctest::Approx(1.0 / 3.0));
  for (auto scale : {ConfidenceScale::Raw, ConfidenceScale::NegLogComplement}) {
    MiaOptions o;
    o.scale = scale;
    CHECK(mia_efficacy(p, rows_dataset(members), rows_dataset(non_members), rows_dataset(forget), o) == 1.0);
    CHECK(mia_efficacy(p, rows_dataset(members), rows_dataset(non_members), rows_dataset(members), o) == 0.0);
  }
  CHECK_THROWS_AS(mia_efficacy(p, rows_dataset(members), rows_dataset(forget), rows_dataset(forget)), ShapeError);
  CHECK_THROWS_AS(mia_efficacy(p, rows_dataset(Matrix(0, 2)), rows_dataset(Matrix(0, 2)), rows_dataset(forget)),
                  DegenerateInputError);
}

TEST_CASE("log-complement confidence matches the raw confidence where both are accurate") {
  SeededRng rng(40, 0);
  const MlpParams p = MlpParams::glorot(4, 6, 3, 5, rng);
  const Matrix x = oracle::random_matrix(20, 4, rng);
  const auto raw = max_confidence(p, x);
  const auto nlc = neg_log_complement_confidence(p, x);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(nlc[i] == doctest::Approx(-std::log1p(-raw[i])).epsilon(1e-10));
}

TEST_CASE("MIA is invariant to swapping the SVM classes and bounded") {
  SeededRng rng(41, 0);
  const MlpParams p = MlpParams::glorot(4, 8, 4, 3, rng);
  for (int t = 0; t < 20; ++t) {
    const Dataset m = rows_dataset(oracle::random_matrix(30, 4, rng));
    Matrix nx = oracle::random_matrix(30, 4, rng);
    for (auto& v : nx.values()) v *= 0.3;
    const Dataset n = rows_dataset(nx);
    const Dataset f = rows_dataset(oracle::random_matrix(25, 4, rng));
    MiaOptions a, b;
    a.svm.seed = b.svm.seed = static_cast<std::uint64_t>(t);
    b.swap_classes = true;
    const double ea = mia_efficacy(p, m, n, f, a);
    CHECK(ea == mia_efficacy(p, m, n, f, b));
    CHECK(ea >= 0.0);
    CHECK(ea <= 1.0);
  }
}

TEST_CASE("last-layer analysis with both runs frozen compares identical encoders") {
  SyntheticSpec s;
  s.num_train_classes = 5;
  s.per_class_train = 30;
  s.per_class_test = 10;
  s.downstream_specs.clear();
  const Universe u = generate_universe(s);
  const ForgetSplit split = split_random_forget(u.train, u.test, 1, 2);
  TrainConfig tc;
  tc.epochs = 8;
  const MlpParams o = sgd_train(initial_params(32, 16, 8, 5, 1), u.train, tc);
  const MlpParams r = sgd_train(initial_params(32, 16, 8, 5, 2), split.retain_train, tc);
  UnlearnConfig pl = default_unlearn_config(Method::PL);
  pl.base.freeze_encoder = true;
  const auto res = last_layer_analysis(o, r, split, pl);
  CHECK(std::abs(res.cka_full_vs_head - 1.0) <= 1e-9);
  CHECK(res.agl_gap == 0.0);
}

TEST_CASE("logit gaps") {
  const Accuracies u{0.2, 0.9, 0.1, 0.8}, r{0.0, 1.0, 0.0, 0.85};
  const LogitGaps g = logit_gaps(u, r);
  CHECK(g.g_f == doctest::Approx(0.2));
  CHECK(g.g_r == doctest::Approx(0.1));
  CHECK(g.g_tr == doctest::Approx(0.05));
  CHECK(compute_agl(logit_gaps(r, r)) == 1.0);
}

}  // TEST_SUITE
