#include <cmath>

#include <catch_amalgamated.hpp>

#include "resfgb/embed.hpp"
#include "testutil.hpp"

using namespace resfgb;
using testutil::rel_err;

namespace {

Matrix unit_rows(int n, int d, SplitMix64& rng) {
  Matrix t = testutil::gaussian_matrix(n, d, rng);
  for (int i = 0; i < n; ++i) {
    double nrm = t.row(i).norm();
    if (nrm > 0) t.row(i) /= nrm;
  }
  return t;
}

// Smallest |pre-activation| across hidden layers; finite differences near a
// ReLU kink are unusable.
double min_preact_gap(const Embedding& e, const Matrix& z) {
  Matrix a = z;
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < e.w.size(); ++l) {
    Matrix pre = (a * e.w[l].transpose()).rowwise() + e.b[l].transpose();
    gap = std::min(gap, pre.cwiseAbs().minCoeff());
    a = pre.cwiseMax(0.0);
  }
  return gap;
}

}  // namespace

TEST_CASE("initialization is seeded and fan-in bounded") {
  EmbedConfig cfg;
  cfg.hidden = {5, 4};
  cfg.seed = 9;
  Embedding a = init_embedding(3, 2, cfg);
  Embedding b = init_embedding(3, 2, cfg);
  cfg.seed = 10;
  Embedding c = init_embedding(3, 2, cfg);

  REQUIRE(a.in_dim() == 3);
  REQUIRE(a.out_dim() == 2);
  REQUIRE(a.layer_count() == 3);
  REQUIRE(a.w[0].rows() == 5);
  REQUIRE(a.w[1].rows() == 4);

  for (std::size_t l = 0; l < a.w.size(); ++l) {
    REQUIRE(a.w[l] == b.w[l]);
    REQUIRE(a.b[l] == b.b[l]);
    REQUIRE(a.b[l].cwiseAbs().maxCoeff() == 0.0);
    double limit = std::sqrt(6.0 / a.w[l].cols());
    REQUIRE(a.w[l].cwiseAbs().maxCoeff() <= limit);
  }
  REQUIRE(a.w[0] != c.w[0]);
}

TEST_CASE("projection caps the output norm, raw forward does not") {
  EmbedConfig cfg;
  cfg.hidden = {6};
  cfg.seed = 21;
  Embedding e = init_embedding(4, 4, cfg);
  // Scale the output layer up so raw outputs clearly leave the ball.
  e.w.back() *= 50.0;

  SplitMix64 rng(22);
  Matrix z = testutil::gaussian_matrix(30, 4, rng) * 2.0;
  Matrix raw = e.raw_forward(z);
  Matrix proj = e.forward(z);

  bool some_outside = false;
  for (int i = 0; i < z.rows(); ++i) {
    if (raw.row(i).norm() > 1.0) some_outside = true;
    REQUIRE(proj.row(i).norm() <= 1.0 + 1e-12);
  }
  REQUIRE(some_outside);

  e.project_unit_ball = false;
  REQUIRE(e.forward(z) == raw);
}

TEST_CASE("batch forward equals per-row forward bitwise") {
  EmbedConfig cfg;
  cfg.hidden = {5, 3};
  cfg.seed = 23;
  Embedding e = init_embedding(4, 4, cfg);
  SplitMix64 rng(24);
  Matrix z = testutil::gaussian_matrix(12, 4, rng);
  Matrix batch = e.forward(z);
  for (int i = 0; i < z.rows(); ++i) {
    Vector single = e.forward(Vector(z.row(i).transpose()));
    REQUIRE(batch.row(i).transpose() == single);
  }
}

TEST_CASE("backprop gradients match finite differences everywhere") {
  EmbedConfig cfg;
  cfg.hidden = {4, 3};
  SplitMix64 rng(25);

  Embedding e;
  Matrix z;
  for (std::uint64_t seed = 31;; ++seed) {
    cfg.seed = seed;
    e = init_embedding(3, 2, cfg);
    SplitMix64 zrng(seed * 7 + 1);
    z = testutil::gaussian_matrix(6, 3, zrng);
    if (min_preact_gap(e, z) > 1e-4) break;
  }
  Matrix targets = testutil::gaussian_matrix(6, 2, rng) * 0.4;

  std::vector<Matrix> gw;
  std::vector<Vector> gb;
  detail::embed_mse_and_grads(e, z, targets, &gw, &gb);

  const double h = 1e-5;
  auto fd = [&](double* param) {
    double keep = *param;
    *param = keep + h;
    double up = detail::embed_full_mse(e, z, targets);
    *param = keep - h;
    double down = detail::embed_full_mse(e, z, targets);
    *param = keep;
    return (up - down) / (2 * h);
  };

  for (std::size_t l = 0; l < e.w.size(); ++l) {
    for (int a = 0; a < e.w[l].rows(); ++a) {
      for (int b = 0; b < e.w[l].cols(); ++b)
        REQUIRE(rel_err(gw[l](a, b), fd(&e.w[l](a, b))) < 1e-4);
      REQUIRE(rel_err(gb[l](a), fd(&e.b[l](a))) < 1e-4);
    }
  }
}

TEST_CASE("affine embedding gradient has the closed form") {
  EmbedConfig cfg;
  cfg.hidden = {};  // single affine layer
  cfg.seed = 33;
  Embedding e = init_embedding(3, 2, cfg);
  SplitMix64 rng(34);
  Matrix z = testutil::gaussian_matrix(5, 3, rng);
  Matrix targets = testutil::gaussian_matrix(5, 2, rng);

  std::vector<Matrix> gw;
  std::vector<Vector> gb;
  detail::embed_mse_and_grads(e, z, targets, &gw, &gb);

  Matrix diff = ((z * e.w[0].transpose()).rowwise() + e.b[0].transpose()) - targets;
  Matrix want = 2.0 / 5.0 * diff.transpose() * z;
  REQUIRE((gw[0] - want).cwiseAbs().maxCoeff() < 1e-14);
  Vector wantb = 2.0 / 5.0 * diff.colwise().sum().transpose();
  REQUIRE((gb[0] - wantb).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("fitting reduces the error and never returns a worse map") {
  EmbedConfig cfg;
  cfg.hidden = {16};
  cfg.epochs = 40;
  cfg.batch = 8;
  cfg.lr = 0.05;
  cfg.seed = 35;

  SplitMix64 rng(36);
  Matrix z = testutil::gaussian_matrix(40, 3, rng);
  Matrix targets = unit_rows(40, 3, rng);

  Embedding e = init_embedding(3, 3, cfg);
  EmbedFitStats stats = fit_to_targets(e, z, targets, cfg);
  REQUIRE(stats.epochs_run == 40);
  REQUIRE(stats.final_mse <= stats.initial_mse);
  REQUIRE(stats.final_mse < 0.9 * stats.initial_mse);  // actually learned
  REQUIRE(detail::embed_full_mse(e, z, targets) == stats.final_mse);
}

TEST_CASE("partial batches cycle correctly across epochs") {
  EmbedConfig cfg;
  cfg.hidden = {4};
  cfg.epochs = 5;
  cfg.batch = 7;  // 10 rows: batches of 7 and 3 per epoch
  cfg.lr = 0.02;
  cfg.seed = 37;

  SplitMix64 rng(38);
  Matrix z = testutil::gaussian_matrix(10, 3, rng);
  Matrix targets = unit_rows(10, 3, rng);
  Embedding e = init_embedding(3, 3, cfg);
  EmbedFitStats stats = fit_to_targets(e, z, targets, cfg);
  REQUIRE(stats.epochs_run == 5);
  REQUIRE(std::isfinite(stats.final_mse));
}

TEST_CASE("fitting is deterministic in the seed") {
  EmbedConfig cfg;
  cfg.hidden = {8};
  cfg.epochs = 10;
  cfg.batch = 4;
  cfg.seed = 39;

  SplitMix64 rng(40);
  Matrix z = testutil::gaussian_matrix(20, 3, rng);
  Matrix targets = unit_rows(20, 3, rng);

  Embedding a = init_embedding(3, 3, cfg);
  Embedding b = init_embedding(3, 3, cfg);
  fit_to_targets(a, z, targets, cfg);
  fit_to_targets(b, z, targets, cfg);
  for (std::size_t l = 0; l < a.w.size(); ++l) {
    REQUIRE(a.w[l] == b.w[l]);
    REQUIRE(a.b[l] == b.b[l]);
  }
}

TEST_CASE("fit rejects bad targets") {
  EmbedConfig cfg;
  cfg.seed = 41;
  Embedding e = init_embedding(3, 3, cfg);
  SplitMix64 rng(42);
  Matrix z = testutil::gaussian_matrix(5, 3, rng);

  Matrix outside = testutil::gaussian_matrix(5, 3, rng);
  outside.row(2) *= 10.0 / outside.row(2).norm();
  REQUIRE_THROWS_AS(fit_to_targets(e, z, outside, cfg), std::invalid_argument);

  Matrix wrong_shape = unit_rows(5, 2, rng);
  REQUIRE_THROWS_AS(fit_to_targets(e, z, wrong_shape, cfg),
                    std::invalid_argument);

  Matrix bad_z = z;
  bad_z(1, 1) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(fit_to_targets(e, bad_z, unit_rows(5, 3, rng), cfg),
                    std::runtime_error);
}

TEST_CASE("oracle embedding is an exact lookup") {
  SplitMix64 rng(43);
  Matrix keys = testutil::gaussian_matrix(4, 3, rng);
  Matrix values = unit_rows(4, 2, rng);
  OracleEmbedding oracle(keys, values);

  for (int i = 0; i < 4; ++i) {
    Vector got = oracle.forward(Vector(keys.row(i).transpose()));
    REQUIRE(got == values.row(i).transpose());
  }
  Matrix batch = oracle.forward(keys);
  REQUIRE(batch == values);

  Vector off = keys.row(0).transpose();
  off(0) += 1e-12;
  REQUIRE_THROWS_AS(oracle.forward(off), std::runtime_error);
}

TEST_CASE("hand-checked forward values") {
  SECTION("identity linear layer passes the input through") {
    EmbedConfig cfg;
    cfg.hidden = {};
    cfg.project_unit_ball = false;
    Embedding e = init_embedding(2, 2, cfg);
    e.w[0] = Matrix::Identity(2, 2);
    e.b[0].setZero();
    Vector z(2);
    z << 0.3, -0.7;
    REQUIRE(e.forward(z) == z);
  }
  SECTION("relu clips negative pre-activations") {
    EmbedConfig cfg;
    cfg.hidden = {2};
    cfg.project_unit_ball = false;
    Embedding e = init_embedding(2, 2, cfg);
    e.w[0] = Matrix::Identity(2, 2);
    e.b[0].setZero();
    e.w[1] = Matrix::Identity(2, 2);
    e.b[1].setZero();
    Vector z(2);
    z << -1.0, 2.0;
    Vector out = e.forward(z);
    REQUIRE(out(0) == 0.0);
    REQUIRE(out(1) == 2.0);
  }
  SECTION("projection rescales (3,4) to (0.6,0.8)") {
    EmbedConfig cfg;
    cfg.hidden = {};
    cfg.project_unit_ball = true;
    Embedding e = init_embedding(2, 2, cfg);
    e.w[0] = Matrix::Identity(2, 2);
    e.b[0].setZero();
    Vector z(2);
    z << 3.0, 4.0;
    Vector out = e.forward(z);
    REQUIRE(out(0) == Catch::Approx(0.6).margin(1e-15));
    REQUIRE(out(1) == Catch::Approx(0.8).margin(1e-15));
  }
}

TEST_CASE("a single linear layer recovers a linear map at default settings") {
  // Targets are exactly M * z, so the affine layer can interpolate and
  // minibatch gradients share the optimum; default epochs suffice once the
  // problem is well conditioned (input scale 3 puts the step near critical).
  SplitMix64 rng(57);
  Matrix z = 3.0 * testutil::gaussian_matrix(512, 3, rng);
  Matrix m = testutil::gaussian_matrix(2, 3, rng);
  Matrix targets = z * m.transpose();
  double peak = 0.0;
  for (int i = 0; i < targets.rows(); ++i)
    peak = std::max(peak, targets.row(i).norm());
  m *= 0.9 / peak;
  targets *= 0.9 / peak;

  EmbedConfig cfg;
  cfg.hidden = {};
  cfg.seed = 58;
  Embedding e = init_embedding(3, 2, cfg);
  EmbedFitStats stats = fit_to_targets(e, z, targets, cfg);
  REQUIRE(stats.final_mse < 1e-4);
}

TEST_CASE("zero epochs leaves the embedding untouched") {
  EmbedConfig cfg;
  cfg.seed = 59;
  cfg.hidden = {4};
  cfg.epochs = 0;
  Embedding e = init_embedding(3, 3, cfg);
  std::vector<Matrix> w0 = e.w;
  std::vector<Vector> b0 = e.b;

  SplitMix64 rng(60);
  Matrix z = testutil::gaussian_matrix(8, 3, rng);
  Matrix targets = unit_rows(8, 3, rng);
  EmbedFitStats stats = fit_to_targets(e, z, targets, cfg);

  REQUIRE(stats.epochs_run == 0);
  REQUIRE(stats.final_mse == stats.initial_mse);
  for (std::size_t l = 0; l < w0.size(); ++l) {
    REQUIRE(e.w[l] == w0[l]);
    REQUIRE(e.b[l] == b0[l]);
  }
}

TEST_CASE("oracle embedding returns the zero row for a zero target") {
  Matrix keys(2, 3);
  keys << 1.0, 2.0, 3.0, -1.0, 0.5, 0.25;
  Matrix values(2, 3);
  values.row(0).setZero();
  values.row(1) << 0.0, 1.0, 0.0;
  OracleEmbedding oracle(keys, values);
  Vector got = oracle.forward(Vector(keys.row(0).transpose()));
  REQUIRE(got == Vector::Zero(3));
}

TEST_CASE("forward rejects an input of the wrong width") {
  EmbedConfig cfg;
  cfg.seed = 61;
  Embedding e = init_embedding(3, 3, cfg);
  Vector narrow = Vector::Zero(2);
  REQUIRE_THROWS_AS(e.forward(narrow), std::invalid_argument);
  Matrix wide = Matrix::Zero(4, 5);
  REQUIRE_THROWS_AS(e.forward(wide), std::invalid_argument);
}
