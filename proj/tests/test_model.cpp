#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "oracles.hpp"
#include "unlbench/data.hpp"
#include "unlbench/errors.hpp"
#include "unlbench/matrix.hpp"
#include "unlbench/model.hpp"

using namespace unlbench;

namespace {

Dataset tiny_dataset(std::size_t n, std::size_t in, std::size_t classes, std::uint64_t seed) {
  SeededRng rng(seed, 77);
  Dataset d;
  d.num_classes = classes;
  d.x = oracle::random_matrix(n, in, rng);
  for (std::size_t i = 0; i < n; ++i) d.y.push_back(static_cast<Label>(rng.uniform_index(classes)));
  return d;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("zero parameters give uniform softmax") {
  const MlpParams p = MlpParams::zeros(4, 5, 3, 6);
  SeededRng rng(1, 0);
  const Matrix x = oracle::random_matrix(3, 4, rng);
  const auto f = forward(p, x);
  CHECK(f.logits == Matrix(3, 6));
  const Matrix s = softmax_rows(f.logits);
  for (double v : s.values()) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("hand-sized forward pass") {
  MlpParams p = MlpParams::zeros(2, 2, 2, 2);
  p.w1 = Matrix::from_rows({{1, -1}, {2, 0.5}});
  p.b1 = Matrix::from_rows({{0.1, -3}});
  p.w2 = Matrix::from_rows({{1, 2}, {-1, 1}});
  p.b2 = Matrix::from_rows({{0, 0.5}});
  p.w_head = Matrix::from_rows({{1, 0}, {0.5, -2}});
  p.b_head = Matrix::from_rows({{0.25, 0}});
  const Matrix x = Matrix::from_rows({{1, 2}});
  // pre1 = [1*1 + 2*2 + 0.1, 1*-1 + 2*0.5 - 3] = [5.1, -3]; h1 = [5.1, 0]
  // pre2 = [5.1, 10.2 + 0.5] = [5.1, 10.7]; features = [5.1, 10.7]
  // logits = [5.1 + 5.35 + 0.25, -21.4] = [10.7, -21.4]
  const auto f = forward(p, x);
  CHECK(std::abs(f.features(0, 0) - 5.1) <= 1e-12);
  CHECK(std::abs(f.features(0, 1) - 10.7) <= 1e-12);
  CHECK(std::abs(f.logits(0, 0) - 10.7) <= 1e-12);
  CHECK(std::abs(f.logits(0, 1) + 21.4) <= 1e-12);
}

TEST_CASE("duplicated rows give identical features") {
  SeededRng rng(2, 0);
  const MlpParams p = MlpParams::glorot(5, 8, 4, 3, rng);
  Matrix x = oracle::random_matrix(1, 5, rng);
  x = vstack(x, x);
  const auto f = forward(p, x);
  for (std::size_t j = 0; j < 4; ++j) CHECK(f.features(0, j) == f.features(1, j));
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SeededRng rng(seed, 3);
    const MlpParams p = MlpParams::glorot(6, 9, 5, 4, rng);
    const Dataset d = tiny_dataset(3, 6, 4, seed);
    CHECK(oracle::worst_block_fd_error(p, d.x, d.y) < 1e-4);
  }
}

TEST_CASE("saturated correct prediction has negligible gradient") {
  MlpParams p = MlpParams::zeros(2, 3, 2, 2);
  p.b_head = Matrix::from_rows({{50, -50}});
  const Matrix x = Matrix::from_rows({{0.3, -0.2}});
  const std::vector<Label> y = {0};
  const MlpParams g = grad_cross_entropy(p, x, y, false);
  double sq = 0.0;
  for (const auto* b : g.blocks())
    for (double v : b->values()) sq += v * v;
  CHECK(std::sqrt(sq) < 1e-6);
}

TEST_CASE("freeze_encoder zeroes encoder gradients and leaves encoder bits") {
  SeededRng rng(4, 0);
  const MlpParams p = MlpParams::glorot(6, 9, 5, 4, rng);
  const Dataset d = tiny_dataset(40, 6, 4, 4);
  const MlpParams g = grad_cross_entropy(p, d.x, d.y, true);
  const auto blocks = g.blocks();
  for (std::size_t b = 0; b < MlpParams::kEncoderBlocks; ++b)
    for (double v : blocks[b]->values()) CHECK(v == 0.0);

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.freeze_encoder = true;
  const MlpParams trained = sgd_train(p, d, cfg);
  CHECK(encoder_equal(trained, p));
  CHECK_FALSE(trained.w_head == p.w_head);
}

TEST_CASE("sgd_train no-op cases") {
  SeededRng rng(5, 0);
  const MlpParams p = MlpParams::glorot(6, 9, 5, 4, rng);
  const Dataset d = tiny_dataset(40, 6, 4, 5);
  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK(sgd_train(p, d, cfg) == p);
  cfg.epochs = 4;
  cfg.lr = 0.0;
  CHECK(sgd_train(p, d, cfg) == p);
}

TEST_CASE("zero gradient noise is bit-identical to the noiseless path") {
  SeededRng rng(6, 0);
  const MlpParams p = MlpParams::glorot(6, 9, 5, 4, rng);
  const Dataset d = tiny_dataset(40, 6, 4, 6);
  TrainConfig a;
  a.epochs = 3;
  TrainConfig b = a;
  b.grad_noise_sigma = 0.0;
  b.seed = a.seed;
  CHECK(sgd_train(p, d, a) == sgd_train(p, d, b));
  TrainConfig noisy = a;
  noisy.grad_noise_sigma = 0.1;
  CHECK_FALSE(sgd_train(p, d, noisy) == sgd_train(p, d, a));
}

TEST_CASE("sgd optimizer respects the mask") {
  SeededRng rng(7, 0);
  MlpParams p = MlpParams::glorot(3, 4, 2, 2, rng);
  const MlpParams before = p;
  MlpParams g = MlpParams::zeros_like(p);
  for (auto* b : g.blocks())
    for (auto& v : b->values()) v = 1.0;
  ParamMask mask;
  const auto pb = p.blocks();
  for (std::size_t b = 0; b < pb.size(); ++b) {
    mask.blocks[b].assign(pb[b]->size(), false);
    mask.blocks[b][0] = true;
  }
  TrainConfig cfg;
  cfg.lr = 0.5;
  SgdOptimizer opt(p, cfg);
  opt.step(p, g, 1.0, &mask);
  const auto ab = p.blocks();
  const auto bb = before.blocks();
  for (std::size_t b = 0; b < ab.size(); ++b) {
    CHECK(ab[b]->values()[0] == doctest::Approx(bb[b]->values()[0] - 0.5));
    for (std::size_t i = 1; i < ab[b]->size(); ++i) CHECK(ab[b]->values()[i] == bb[b]->values()[i]);
  }
}

TEST_CASE("momentum update rule") {
  MlpParams p = MlpParams::zeros(1, 1, 1, 1);
  MlpParams g = MlpParams::zeros_like(p);
  g.b_head(0, 0) = 1.0;
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.momentum = 0.5;
  SgdOptimizer opt(p, cfg);
  opt.step(p, g);  // v = 1, theta = -0.1
  opt.step(p, g);  // v = 1.5, theta = -0.25
  CHECK(p.b_head(0, 0) == doctest::Approx(-0.25).epsilon(1e-14));

  MlpParams q = MlpParams::zeros(1, 1, 1, 1);
  cfg.nesterov = true;
  SgdOptimizer nag(q, cfg);
  nag.step(q, g);  // v = 1, step = 1 + 0.5 = 1.5
  CHECK(q.b_head(0, 0) == doctest::Approx(-0.15).epsilon(1e-14));
  nag.step(q, g, -1.0);  // ascent flips the gradient: v = 0.5 - 1, step = -1 - 0.25
  CHECK(q.b_head(0, 0) == doctest::Approx(-0.15 + 0.125).epsilon(1e-14));
}

TEST_CASE("seeded training reaches a regression floor on the default universe") {
  const Universe u = generate_universe(SyntheticSpec::desk_default());
  TrainConfig cfg;
  cfg.seed = 11;
  const MlpParams p0 = initial_params(u.train.x.cols(), kDefaultHidden, kDefaultFeatureDim,
                                      u.train.num_classes, cfg.seed);
  const MlpParams p = sgd_train(p0, u.train, cfg);
  CHECK(accuracy(p, u.train) >= 0.95);

  // Brute-force recount on the held-out test set.
  const Matrix z = forward(p, u.test.x).logits;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < z.cols(); ++c)
      if (z(i, c) > z(i, best)) best = c;
    correct += best == u.test.y[i] ? 1 : 0;
  }
  CHECK(accuracy(p, u.test) == static_cast<double>(correct) / static_cast<double>(u.test.size()));

  CHECK(sgd_train(p0, u.train, cfg) == p);
}

TEST_CASE("accuracy tie-break and single sample") {
  const MlpParams p = MlpParams::zeros(2, 2, 2, 3);
  Dataset d;
  d.num_classes = 3;
  d.x = Matrix(4, 2, 0.5);
  d.y = {0, 0, 0, 0};
  CHECK(accuracy(p, d) == 1.0);
  d.y = {0, 1, 2, 0};
  CHECK(accuracy(p, d) == 0.5);
  CHECK(argmax_rows(Matrix::from_rows({{1, 3, 3}})) == std::vector<Label>{1});
}

TEST_CASE("cross entropy values") {
  const Matrix z = Matrix::from_rows({{0, 0}, {std::log(3.0), 0}});
  const std::vector<Label> y = {0, 0};
  // (ln 2 + ln(4/3)) / 2
  CHECK(cross_entropy(z, y) == doctest::Approx((std::log(2.0) + std::log(4.0 / 3.0)) / 2).epsilon(1e-14));
  const Matrix g = cross_entropy_grad(z, y);
  CHECK(g(0, 0) == doctest::Approx(-0.25));
  CHECK(g(1, 1) == doctest::Approx(0.125));
}

TEST_CASE("checkpoint round trip is byte-identical") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "unlbench_test_ckpt";
  fs::remove_all(dir);
  SeededRng rng(8, 0);
  ModelCheckpoint c;
  c.params = MlpParams::glorot(4, 6, 3, 5, rng);
  c.provenance = {42, "cfg", "parent", "original", ""};
  save_checkpoint(dir / "a", c);
  const ModelCheckpoint d = load_checkpoint(dir / "a");
  CHECK(d.params == c.params);
  CHECK(d.provenance.role == "original");
  save_checkpoint(dir / "b", d);
  for (const char* f : {"W1.ubm1", "b1.ubm1", "W2.ubm1", "b2.ubm1", "Whead.ubm1", "bhead.ubm1",
                        "manifest.json"})
    CHECK(read_file_bytes(dir / "a" / f) == read_file_bytes(dir / "b" / f));

  // A tensor swapped behind the manifest's back is detected.
  MlpParams other = c.params;
  other.b1(0, 0) += 1.0;
  write_ubm1(dir / "a" / "b1.ubm1", other.b1);
  CHECK_THROWS_AS(load_checkpoint(dir / "a"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("train config hash and json") {
  TrainConfig a;
  TrainConfig b = a;
  CHECK(a.hash() == b.hash());
  b.momentum = 0.8;
  CHECK(a.hash() != b.hash());
  CHECK(train_config_to_json(train_config_from_json(train_config_to_json(b))) == train_config_to_json(b));
  TrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}  // TEST_SUITE
