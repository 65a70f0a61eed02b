#include <doctest.h>

#include <random>

#include "gtrack/encoder.hpp"
#include "test_util.hpp"

using namespace gtrack;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.voxel_size = 0.02;
  c.encoder_channels = {8, 8, 16, 16};
  c.decoder_channels = {8, 8, 8, 16};
  return c;
}

// Points on a 1/1024 m lattice: centroids of 64 such points and their
// translates by 0.25 m are exact, so centering gives bit-identical input.
torch::Tensor lattice_cloud(int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> k(0, 200);
  auto pts = torch::empty({1, n, 3});
  auto a = pts.accessor<float, 3>();
  for (int64_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) a[0][i][d] = static_cast<float>(k(rng)) / 1024.0F;
  return pts;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("one feature row per input point") {
    torch::manual_seed(1);
    PointEncoder enc(small_encoder());
    auto pts = torch::rand({2, 50, 3}) * 0.3;
    auto f = enc->forward(pts);
    CHECK(f.sizes() == torch::IntArrayRef({2, 50, 8}));
    CHECK(torch::isfinite(f).all().item<bool>());
    CHECK(enc->output_dim() == 8);
  }

  TEST_CASE("default width is 64") {
    PointEncoder enc;
    auto f = enc->forward(torch::rand({1, 20, 3}) * 0.2);
    CHECK(f.size(-1) == 64);
  }

  TEST_CASE("repeated calls are identical") {
    torch::manual_seed(2);
    PointEncoder enc(small_encoder());
    enc->eval();
    auto pts = torch::rand({1, 80, 3}) * 0.4;
    CHECK(torch::equal(enc->forward(pts), enc->forward(pts)));
  }

  TEST_CASE("empty cloud is rejected") {
    PointEncoder enc(small_encoder());
    CHECK_THROWS(enc->forward(torch::zeros({1, 0, 3})));
  }

  TEST_CASE("translation is removed by zero-centering") {
    torch::manual_seed(3);
    PointEncoder enc(small_encoder());
    auto pts = lattice_cloud(64, 4);
    auto shifted = pts + 0.25;
    // Oracle: subtract the centroid by hand and compare the centered inputs.
    auto c0 = pts - pts.mean(1, true);
    auto c1 = shifted - shifted.mean(1, true);
    REQUIRE(torch::equal(c0, c1));
    CHECK(torch::equal(enc->forward(pts), enc->forward(shifted)));
  }

  TEST_CASE("permuting points permutes output rows") {
    torch::manual_seed(5);
    PointEncoder enc(small_encoder());
    auto pts = torch::rand({1, 120, 3}) * 0.3;
    auto perm = torch::randperm(120);
    auto a = enc->forward(pts).index_select(1, perm);
    auto b = enc->forward(pts.index_select(1, perm));
    CHECK(torch::equal(a, b));
  }

  TEST_CASE("centroid is bit-identical under permutation") {
    auto pts = torch::rand({1, 333, 3});
    auto perm = torch::randperm(333);
    CHECK(torch::equal(canonical_centroid(pts), canonical_centroid(pts.index_select(1, perm))));
  }

  TEST_CASE("weight gradients match finite differences in f64") {
    torch::manual_seed(6);
    PointEncoder enc(small_encoder());
    enc->to(torch::kFloat64);
    auto pts = (torch::rand({1, 16, 3}) * 0.1).to(torch::kFloat64);
    auto head = torch::randn({8}, torch::kFloat64);
    auto params = enc->parameters();
    for (uint64_t seed : {1, 2, 3}) {
      const double err = testing::directional_gradient_error(
          params, [&] { return (enc->forward(pts) * head).sum().tanh(); }, seed);
      CHECK(err < 1e-3);
    }
  }
}
