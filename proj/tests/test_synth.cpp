#include <cmath>

#include "json.hpp"
#include "test_util.hpp"

using namespace capel;

TEST(Synth, ShapesAndUnitRows) {
  SynthConfig c;
  c.seed = 3;
  c.flawed_per_class = 1;
  const auto inst = generate(c);
  EXPECT_EQ(inst.train.x.rows, 640u);
  EXPECT_EQ(inst.test.x.rows, 1280u);
  EXPECT_EQ(inst.prompts.classes, 10u);
  EXPECT_EQ(inst.prompts.prompts, 4u);
  for (const auto* m : {&inst.train.x, &inst.test.x}) {
    for (std::size_t i = 0; i < m->rows; ++i) ASSERT_NEAR(l2_norm(m->row(i)), 1.0, 1e-6);
  }
  for (std::size_t y = 0; y < 10; ++y) {
    std::size_t flawed = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      ASSERT_NEAR(l2_norm(inst.prompts.vec(y, k)), 1.0, 1e-6);
      flawed += inst.flawed(y, k);
      EXPECT_EQ(inst.prompt_cluster[y * 4 + k] < 0, inst.flawed(y, k));
    }
    EXPECT_EQ(flawed, 1u);
  }
  for (auto m : inst.train.cluster) EXPECT_LT(m, 4u);
}

TEST(Synth, CentersSeparated) {
  const auto inst = generate(SynthConfig{});
  for (std::size_t y = 0; y < 10; ++y) {
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t b = a + 1; b < 4; ++b) {
        EXPECT_LT(cosine(inst.centers.row(y * 4 + a), inst.centers.row(y * 4 + b)), 0.8);
      }
    }
  }
}

TEST(Synth, NoFlawsByDefault) {
  const auto inst = generate(SynthConfig{});
  for (auto f : inst.flaw_mask) EXPECT_EQ(f, 0);
}

TEST(Synth, SeedDeterminism) {
  SynthConfig c;
  c.seed = 17;
  const auto a = generate(c), b = generate(c);
  EXPECT_EQ(a.train.x.data, b.train.x.data);
  EXPECT_EQ(a.test.y, b.test.y);
  EXPECT_EQ(a.prompts.data, b.prompts.data);
  c.seed = 18;
  EXPECT_NE(generate(c).train.x.data, a.train.x.data);
}

TEST(Synth, NoiselessInstanceIsPerfectlySeparable) {
  SynthConfig c;
  c.sigma_sample = 0;
  c.sigma_prompt = 0;
  c.prompts = c.clusters;
  c.seed = 2;
  const auto inst = generate(c);
  // Brute-force nearest prompt over all Y*K prompts.
  for (std::size_t i = 0; i < inst.test.x.rows; ++i) {
    double best = -2;
    std::size_t by = 0, bk = 0;
    for (std::size_t y = 0; y < c.classes; ++y) {
      for (std::size_t k = 0; k < c.prompts; ++k) {
        const double s = cosine(inst.test.x.row(i), inst.prompts.vec(y, k));
        if (s > best) {
          best = s;
          by = y;
          bk = k;
        }
      }
    }
    ASSERT_EQ(by, inst.test.y[i]);
    ASSERT_EQ(static_cast<int>(inst.test.cluster[i]), inst.prompt_cluster[by * c.prompts + bk]);
  }
  EXPECT_DOUBLE_EQ(accuracy(init_model(inst.prompts), inst.test.x, inst.test.y).accuracy, 1.0);
}

TEST(Synth, RandomFlawsAreUnitAndMasked) {
  SynthConfig c;
  c.flawed_per_class = 2;
  c.flaw_mode = FlawMode::Random;
  const auto inst = generate(c);
  std::size_t flawed = 0;
  for (auto f : inst.flaw_mask) flawed += f;
  EXPECT_EQ(flawed, 20u);
}

TEST(Synth, ConfigValidation) {
  SynthConfig c;
  c.dim = 7;
  EXPECT_CAPEL_ERROR(generate(c), ErrorCode::InvalidArgument);
  c = SynthConfig{};
  c.flawed_per_class = 4;
  EXPECT_CAPEL_ERROR(generate(c), ErrorCode::InvalidArgument);
  c = SynthConfig{};
  c.clusters = 0;
  EXPECT_CAPEL_ERROR(generate(c), ErrorCode::InvalidArgument);
  EXPECT_CAPEL_ERROR(parse_flaw_mode("bogus"), ErrorCode::InvalidArgument);
}

TEST(Synth, RejectionExhausted) {
  SynthConfig c;
  c.dim = 8;
  c.clusters = 20000;  // more centers than the draw budget
  c.classes = 1;
  EXPECT_CAPEL_ERROR(generate(c), ErrorCode::RejectionExhausted);
}

TEST(Synth, ManifestContents) {
  SynthConfig c;
  c.flawed_per_class = 1;
  const auto inst = generate(c);
  const auto j = nlohmann::json::parse(synth_manifest_json(inst));
  EXPECT_EQ(j["config"]["classes"], 10);
  EXPECT_EQ(j["flaw_mask"].size(), 10u);
  EXPECT_EQ(j["train_clusters"].size(), 640u);
  EXPECT_EQ(j["files"]["train"], "train.cape");
}
