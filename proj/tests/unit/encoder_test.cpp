#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "dialnav/encoder.hpp"
#include "dialnav/errors.hpp"
#include "dialnav/simd/kernels.hpp"
#include "support/finite_diff.hpp"

namespace dialnav {
namespace {

using nn::Graph;
using nn::Matrix;
using nn::Var;

EncoderConfig toy_config() {
  EncoderConfig c;
  c.hidden = 16;
  c.layers = 2;
  c.heads = 2;
  c.ff = 32;
  c.max_len = 64;
  c.feature_dim = 8;
  return c;
}

EncoderInput toy_input(std::uint64_t seed, int regions = 5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EncoderInput in;
  in.word_ids = {Vocabulary::kCls, Vocabulary::kTar, 20, 21, 22, Vocabulary::kNav, 23, Vocabulary::kGuide, 24, Vocabulary::kSep};
  in.tag_ids = {30, 31, 32, Vocabulary::kSep};
  in.tag_classes = {0, 1, 2, -1};
  for (int r = 0; r < regions; ++r) {
    RegionInput ri;
    for (int i = 0; i < 8; ++i) ri.feature.push_back(n(rng));
    for (auto& gv : ri.geometry) gv = u(rng);
    ri.heading = u(rng) * 6.28;
    ri.elevation = (u(rng) - 0.5);
    ri.tag_class = r % 3;
    in.regions.push_back(std::move(ri));
  }
  return in;
}

// Scalar probe with fixed irregular weights over every hidden entry.
Var probe(Graph& g, Var x) {
  const Matrix& v = g.value(x);
  Matrix w(v.rows(), v.cols());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::cos(0.3 + 1.1 * static_cast<double>(i));
  return g.sum(g.mul(x, g.input(std::move(w))));
}

TEST(DirectionEmbedding, KnownPoses) {
  auto d0 = build_direction_embedding(0.0, 0.0);
  auto d1 = build_direction_embedding(std::numbers::pi / 2, 0.0);
  for (int i = 0; i < kDirectionDim; i += 4) {
    EXPECT_EQ(d0[i], 0.0);
    EXPECT_EQ(d0[i + 1], 1.0);
    EXPECT_EQ(d0[i + 2], 0.0);
    EXPECT_EQ(d0[i + 3], 1.0);
    EXPECT_NEAR(d1[i], 1.0, 1e-15);
    EXPECT_NEAR(d1[i + 1], 0.0, 1e-15);
  }
}

TEST(DirectionEmbedding, TiledUnitPairsForRandomPoses) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> h(0, 2 * std::numbers::pi), e(-std::numbers::pi / 2, std::numbers::pi / 2);
  for (int k = 0; k < 1000; ++k) {
    const double phi = h(rng), omega = e(rng);
    auto d = build_direction_embedding(phi, omega);
    double norm = 0;
    for (int i = 0; i < kDirectionDim; ++i) {
      const double want[4] = {std::sin(phi), std::cos(phi), std::sin(omega), std::cos(omega)};
      ASSERT_EQ(d[i], want[i % 4]);
      norm += d[i] * d[i];
    }
    EXPECT_NEAR(norm, 64.0, 1e-12);
  }
}

TEST(Vocabulary, SpecialIdsReservedAndFileRoundTrip) {
  Vocabulary v = Vocabulary::standard();
  const auto& names = special_token_names();
  for (int i = 0; i < Vocabulary::kNumSpecial; ++i) EXPECT_EQ(v.id(names[i]), i);
  EXPECT_EQ(v.id("definitely-not-a-word"), Vocabulary::kUnk);
  for (const auto& o : object_catalog()) EXPECT_TRUE(v.contains(o)) << o;
  for (const auto& r : region_catalog()) EXPECT_TRUE(v.contains(r)) << r;
  const auto p = std::filesystem::temp_directory_path() / "dialnav_vocab_test.txt";
  v.save(p);
  EXPECT_EQ(Vocabulary::load(p), v);
  std::filesystem::remove(p);
  EXPECT_THROW(Vocabulary::load(p), DataError);
}

class AssembleTest : public ::testing::Test {
 protected:
  World world = generate_world(4, WorldConfig{});
  Vocabulary vocab = Vocabulary::standard();
  PanoramicObservation obs = observe(world, AgentState{0, 0, 0});
};

TEST_F(AssembleTest, HintOnlyWordSegment) {
  DialogHistory h{{"find", "the", "oven", "in", "the", "kitchen"}, {}};
  auto in = assemble_input(h, panorama_tags(obs), obs, world, vocab, 512);
  ASSERT_EQ(in.word_ids.size(), 9u);
  EXPECT_EQ(in.word_ids.front(), Vocabulary::kCls);
  EXPECT_EQ(in.word_ids[1], Vocabulary::kTar);
  EXPECT_EQ(in.word_ids.back(), Vocabulary::kSep);
  EXPECT_EQ(in.word_ids[4], vocab.id("oven"));
  EXPECT_EQ(in.tag_ids.back(), Vocabulary::kSep);
  EXPECT_EQ(in.regions.size(), obs.region_count());
  EXPECT_EQ(in.length(), static_cast<int>(9 + in.tag_ids.size() + obs.region_count()));
}

TEST_F(AssembleTest, DelimitersInDialogOrder) {
  DialogHistory h{{"find", "the", "oven"}, {{{"where", "?"}, {"go", "left"}}, {{"where", "?"}, {"stop"}}}};
  auto in = assemble_input(h, panorama_tags(obs), obs, world, vocab, 512);
  std::vector<int> delims;
  for (int id : in.word_ids)
    if (id == Vocabulary::kTar || id == Vocabulary::kNav || id == Vocabulary::kGuide) delims.push_back(id);
  EXPECT_EQ(delims, (std::vector<int>{Vocabulary::kTar, Vocabulary::kNav, Vocabulary::kGuide, Vocabulary::kNav,
                                      Vocabulary::kGuide}));
}

TEST_F(AssembleTest, TruncationKeepsHintAndDropsOldestExchange) {
  DialogHistory h{{"find", "the", "oven"}, {}};
  for (const char* w : {"sofa", "desk", "piano"}) h.exchanges.push_back({{"where", "is", "the", "oven", "?"}, {"go", "left", "toward", "the", w}});
  const auto tags = panorama_tags(obs);
  auto full = assemble_input(h, tags, obs, world, vocab, 1024);
  // Room for everything except one exchange (12 tokens with delimiters).
  auto cut = assemble_input(h, tags, obs, world, vocab, full.length() - 1);
  EXPECT_EQ(cut.word_ids.size(), full.word_ids.size() - 12);
  EXPECT_EQ(std::vector<int>(cut.word_ids.begin(), cut.word_ids.begin() + 5),
            std::vector<int>(full.word_ids.begin(), full.word_ids.begin() + 5));
  auto has = [&](const EncoderInput& in, const char* w) {
    return std::find(in.word_ids.begin(), in.word_ids.end(), vocab.id(w)) != in.word_ids.end();
  };
  EXPECT_FALSE(has(cut, "sofa"));
  EXPECT_TRUE(has(cut, "desk"));
  EXPECT_TRUE(has(cut, "piano"));
  // Even with no room at all, the hint survives and encode refuses the length.
  auto tiny = assemble_input(h, tags, obs, world, vocab, 10);
  EXPECT_EQ(tiny.word_ids.size(), 6u);
  EncoderConfig c = toy_config();
  c.feature_dim = 64;
  c.max_len = 10;
  Encoder enc(c, vocab.size(), 1);
  EXPECT_THROW(enc.encode(tiny), ConfigError);
}

TEST(Encode, DeterministicInInference) {
  Encoder enc(toy_config(), 40, 3);
  auto in = toy_input(1);
  EXPECT_EQ(enc.encode(in), enc.encode(in));
}

TEST(Encode, RegionPermutationEquivariance) {
  Encoder enc(toy_config(), 40, 3);
  auto in = toy_input(2);
  auto swapped = in;
  std::swap(swapped.regions[0], swapped.regions[3]);
  Matrix a = enc.encode(in), b = enc.encode(swapped);
  const int off = in.region_offset();
  for (int r = 0; r < off; ++r)
    for (int c = 0; c < a.cols(); ++c) ASSERT_NEAR(a(r, c), b(r, c), 1e-12) << r;
  for (int c = 0; c < a.cols(); ++c) {
    EXPECT_NEAR(a(off + 0, c), b(off + 3, c), 1e-12);
    EXPECT_NEAR(a(off + 3, c), b(off + 0, c), 1e-12);
    EXPECT_NEAR(a(off + 1, c), b(off + 1, c), 1e-12);
  }
}

TEST(Encode, MaskingARegionChangesOutputs) {
  Encoder enc(toy_config(), 40, 3);
  auto in = toy_input(3);
  auto masked = in;
  masked.masked_regions = {2};
  Matrix a = enc.encode(in), b = enc.encode(masked);
  double diff = 0;
  for (int c = 0; c < a.cols(); ++c) diff += std::abs(a(0, c) - b(0, c));
  EXPECT_GT(diff, 1e-6);
}

TEST(Encode, PaddingIsNeutral) {
  Encoder enc(toy_config(), 40, 3);
  auto in = toy_input(4);
  auto padded = in;
  padded.pad = 7;
  Matrix a = enc.encode(in), b = enc.encode(padded);
  ASSERT_EQ(b.rows(), a.rows() + 7);
  for (int r = 0; r < a.rows(); ++r)
    for (int c = 0; c < a.cols(); ++c) ASSERT_NEAR(a(r, c), b(r, c), 1e-12);
}

TEST(Encode, AgreesAcrossIsas) {
  Encoder enc(toy_config(), 40, 3);
  auto in = toy_input(5, 9);
  const auto original = simd::kernels().isa;
  simd::force_isa(simd::Isa::scalar);
  Matrix a = enc.encode(in);
  if (!simd::force_isa(simd::Isa::avx2)) {
    simd::force_isa(original);
    GTEST_SKIP() << "AVX2 not available";
  }
  Matrix b = enc.encode(in);
  simd::force_isa(original);
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-10);
}

TEST(Encode, GradientsMatchFiniteDifferences) {
  Encoder enc(toy_config(), 40, 6);
  // Larger initial weights so every path carries a visible gradient.
  std::mt19937_64 rng(1);
  for (auto& p : enc.params())
    if (p.name.find("_w") != std::string::npos || p.name.find("emb") != std::string::npos) nn::init_normal(p, rng, 0.3);
  auto in = toy_input(6);
  in.pad = 2;
  enc.params().zero_grad();
  Matrix region_grad;
  {
    Graph g;
    auto out = enc.forward(g, in);
    g.backward(probe(g, out.hidden));
    region_grad = g.grad(out.regions);
  }
  auto loss = [&] {
    Graph g(false);
    return g.scalar(probe(g, enc.forward(g, in).hidden));
  };
  auto r = testing::check_gradients(enc.params(), loss, 6);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param;
  // Region features are differentiable too.
  const double eps = 1e-5;
  for (int i : {0, 3, 9}) {
    auto plus = in, minus = in;
    plus.regions[1].feature[i % 8] += eps;
    minus.regions[1].feature[i % 8] -= eps;
    Graph gp(false), gm(false);
    const double numeric = (gp.scalar(probe(gp, enc.forward(gp, plus).hidden)) -
                            gm.scalar(probe(gm, enc.forward(gm, minus).hidden))) / (2 * eps);
    EXPECT_NEAR(region_grad(1, i % 8), numeric, 1e-6 * (1 + std::abs(numeric)));
  }
}

TEST(EncoderCheckpoint, RoundTripIsBitExact) {
  Vocabulary vocab = Vocabulary::standard();
  Encoder enc(toy_config(), vocab.size(), 9);
  const auto p = std::filesystem::temp_directory_path() / "dialnav_encoder_test.ckpt";
  save_encoder(p, enc, vocab, {{"note", "x"}});
  auto back = load_encoder(p);
  EXPECT_EQ(back.encoder.config(), enc.config());
  EXPECT_EQ(back.vocab, vocab);
  EXPECT_EQ(back.encoder.params().checksum(), enc.params().checksum());
  EXPECT_EQ(back.meta.at("note"), "x");
  std::filesystem::remove(p);
  EXPECT_THROW(load_encoder(p), DataError);
}

TEST(EncoderInit, SeedDeterminesParameters) {
  EXPECT_EQ(Encoder(toy_config(), 40, 5).params().checksum(), Encoder(toy_config(), 40, 5).params().checksum());
  EXPECT_NE(Encoder(toy_config(), 40, 5).params().checksum(), Encoder(toy_config(), 40, 6).params().checksum());
}

}  // namespace
}  // namespace dialnav
