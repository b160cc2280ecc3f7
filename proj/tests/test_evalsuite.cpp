#include <cmath>
#include <sstream>

#include "json.hpp"
#include "test_util.hpp"

using namespace capel;
using capel::testing::TempDir;

namespace {

CapelModel orthogonal_pair_model(std::size_t classes) {
  PromptTensor p(classes, 2, 2 * classes);
  for (std::size_t y = 0; y < classes; ++y) {
    p.vec(y, 0)[2 * y] = 1;
    p.vec(y, 1)[2 * y + 1] = 1;
  }
  return init_model(p);
}

}  // namespace

TEST(Accuracy, PerfectAndWrong) {
  const auto m = orthogonal_pair_model(2);
  const auto x = capel::testing::rows({{1, 0, 0, 0}, {0, 0, 0, 1}});
  const LabelVector y = {0, 1};
  const auto r = accuracy(m, x, y);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.n_test, 2u);
  EXPECT_EQ(r.per_class_count, (std::vector<std::size_t>{1, 1}));
  const LabelVector wrong = {1};
  EXPECT_EQ(accuracy(m, capel::testing::rows({{1, 0, 0, 0}}), wrong).accuracy, 0.0);
}

TEST(Accuracy, EmptyAndMismatched) {
  const auto m = orthogonal_pair_model(2);
  EXPECT_CAPEL_ERROR(accuracy(m, EmbeddingMatrix(0, 4), {}), ErrorCode::EmptyTestSet);
  const LabelVector y = {0, 1};
  EXPECT_CAPEL_ERROR(accuracy(m, capel::testing::rows({{1, 0, 0, 0}}), y), ErrorCode::LengthMismatch);
}

TEST(Accuracy, PerClassAveragesToTopOne) {
  const auto inst = generate(SynthConfig{});
  const auto r = accuracy(init_model(inst.prompts), inst.test.x, inst.test.y, 3);
  double weighted = 0;
  for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c) {
    weighted += r.per_class_accuracy[c] * static_cast<double>(r.per_class_count[c]);
  }
  EXPECT_NEAR(weighted / static_cast<double>(r.n_test), r.accuracy, 1e-12);
  EXPECT_EQ(r.accuracy, accuracy(init_model(inst.prompts), inst.test.x, inst.test.y, 1).accuracy);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j["n_test"], 1280);
  EXPECT_EQ(j["model_digest"].get<std::string>().size(), 16u);
}

TEST(Accuracy, InvariantUnderAlphaScaling) {
  const auto inst = generate(SynthConfig{});
  auto m = init_model(inst.prompts);
  const double a = accuracy(m, inst.test.x, inst.test.y).accuracy;
  for (auto& v : m.alpha) v *= 13.0f;
  EXPECT_EQ(accuracy(m, inst.test.x, inst.test.y).accuracy, a);
}

TEST(Diversity, Examples) {
  PromptTensor same(1, 3, 2);
  for (std::size_t k = 0; k < 3; ++k) same.vec(0, k)[0] = 1;
  const auto d1 = prototype_diversity(init_model(same));
  ASSERT_TRUE(d1.applicable);
  EXPECT_NEAR(d1.per_class[0], 1.0, 1e-12);
  const auto d0 = prototype_diversity(orthogonal_pair_model(1));
  EXPECT_NEAR(d0.per_class[0], 0.0, 1e-12);
  PromptTensor single(2, 1, 2);
  single.vec(0, 0)[0] = 1;
  single.vec(1, 0)[1] = 1;
  EXPECT_FALSE(prototype_diversity(init_model(single)).applicable);
}

TEST(Diversity, InitialModelMatchesPrompts) {
  Rng rng(1);
  const auto p = capel::testing::random_prompts(rng, 3, 4, 6);
  const auto d = prototype_diversity(init_model(p));
  for (std::size_t y = 0; y < 3; ++y) {
    double acc = 0;
    for (std::size_t a = 0; a < 4; ++a) {
      for (std::size_t b = a + 1; b < 4; ++b) acc += cosine(p.vec(y, a), p.vec(y, b));
    }
    EXPECT_NEAR(d.per_class[y], acc / 6.0, 1e-6);
  }
}

TEST(ConditionalEntropy, UniformAndSinglePrompt) {
  // x orthogonal to all prompts: Z rows are all zero, so entropy is ln K.
  PromptTensor p(2, 3, 4);
  for (std::size_t y = 0; y < 2; ++y) {
    for (std::size_t k = 0; k < 3; ++k) p.vec(y, k)[k % 3] = 1;
  }
  const auto x = capel::testing::rows({{0, 0, 0, 1}});
  const LabelVector y = {1};
  EXPECT_NEAR(empirical_conditional_entropy(init_model(p), x, y, PcScope::AllClassesMean),
              std::log(3.0), 1e-12);
  Rng rng(2);
  const auto m1 = init_model(capel::testing::random_prompts(rng, 2, 1, 4));
  const auto x1 = capel::testing::random_unit_rows(rng, 5, 4);
  const LabelVector y1 = {0, 1, 0, 1, 0};
  EXPECT_EQ(empirical_conditional_entropy(m1, x1, y1, PcScope::AllClassesMean), 0.0);
}

TEST(ConditionalEntropy, SharesLossImplementation) {
  const auto inst = generate(SynthConfig{});
  const auto m = init_model(inst.prompts);
  for (auto scope : {PcScope::AllClassesMean, PcScope::AllClassesSum, PcScope::TrueClassOnly}) {
    EXPECT_EQ(empirical_conditional_entropy(m, inst.test.x, inst.test.y, scope),
              cluster_preserving_loss(batch_logits(m, inst.test.x), scope, inst.test.y));
  }
}

TEST(Ablation, SevenRowsWithPaperFlags) {
  SynthConfig sc;
  sc.train_per_class = 16;
  sc.test_per_class = 16;
  const auto inst = generate(sc);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.threads = 3;
  const auto rows = ablation_run(inst.train.x, inst.train.y, inst.test.x, inst.test.y, inst.prompts, cfg);
  ASSERT_EQ(rows.size(), 7u);
  const bool flags[7][4] = {{0, 0, 0, 0}, {0, 1, 0, 0}, {1, 0, 0, 0}, {1, 1, 0, 0},
                            {1, 1, 1, 0}, {1, 1, 0, 1}, {1, 1, 1, 1}};
  for (std::size_t r = 0; r < 7; ++r) {
    EXPECT_EQ(rows[r].row, static_cast<int>(r + 1));
    EXPECT_EQ(rows[r].fine_tuning, flags[r][0]);
    EXPECT_EQ(rows[r].logits_ensemble, flags[r][1]);
    EXPECT_EQ(rows[r].cluster_preserving, flags[r][2]);
    EXPECT_EQ(rows[r].prompt_weighting, flags[r][3]);
  }
  // Zero-shot rows equal direct evaluation of the untrained classifiers.
  EXPECT_EQ(rows[0].accuracy,
            accuracy(feature_average_model(inst.prompts), inst.test.x, inst.test.y).accuracy);
  EXPECT_EQ(rows[1].accuracy, accuracy(init_model(inst.prompts), inst.test.x, inst.test.y).accuracy);
  // Row parallelism does not change results.
  cfg.threads = 1;
  const auto serial = ablation_run(inst.train.x, inst.train.y, inst.test.x, inst.test.y, inst.prompts, cfg);
  for (std::size_t r = 0; r < 7; ++r) EXPECT_EQ(rows[r].accuracy, serial[r].accuracy);

  const auto csv = ablation_csv(rows);
  EXPECT_EQ(csv.rfind("row,fine_tuning,logits_ensemble,cluster_preserving,prompt_weighting,accuracy\r\n", 0), 0u);
  EXPECT_EQ(nlohmann::json::parse(ablation_json(rows)).size(), 7u);
  cfg.lambda = 0;
  EXPECT_CAPEL_ERROR(ablation_run(inst.train.x, inst.train.y, inst.test.x, inst.test.y, inst.prompts, cfg),
                     ErrorCode::InvalidArgument);
}

TEST(Ablation, FullModelAtLeastFrozenEnsemble) {
  double full = 0, frozen = 0;
  for (std::uint64_t s = 0; s < 5; ++s) {
    SynthConfig sc;
    sc.seed = s;
    const auto inst = generate(sc);
    TrainConfig cfg;
    cfg.seed = s;
    cfg.threads = 7;
    const auto rows = ablation_run(inst.train.x, inst.train.y, inst.test.x, inst.test.y, inst.prompts, cfg);
    full += rows[6].accuracy;
    frozen += rows[3].accuracy;
  }
  EXPECT_GE(full, frozen);
}

TEST(AttentionCsv, ShapeHeaderAndValues) {
  TempDir dir;
  Rng rng(3);
  auto m = init_model(capel::testing::random_prompts(rng, 2, 3, 4), 100.0f, AlphaInit::UniformOverK,
                      ClassIndex(std::vector<std::string>{"tabby, cat", "dog \"x\""}));
  for (auto& a : m.alpha) a = static_cast<float>(rng.gaussian());
  attention_export(m, dir.path() / "a.csv");
  const auto text = read_text(dir.path() / "a.csv");
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    ASSERT_FALSE(line.empty());
    ASSERT_EQ(line.back(), '\r');
    line.pop_back();
    lines.push_back(line);
  }
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "class,k0,k1,k2");
  EXPECT_EQ(lines[1].rfind("\"tabby, cat\",", 0), 0u);
  EXPECT_EQ(lines[2].rfind("\"dog \"\"x\"\"\",", 0), 0u);
  // Parse the numeric columns back and compare bitwise.
  for (std::size_t y = 0; y < 2; ++y) {
    const auto& l = lines[y + 1];
    auto pos = l.rfind('"') + 2;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto next = l.find(',', pos);
      const float v = std::strtof(l.substr(pos, next - pos).c_str(), nullptr);
      EXPECT_EQ(v, m.a(y, k));
      pos = next == std::string::npos ? next : next + 1;
    }
  }
}

TEST(FlawSeparationTest, Examples) {
  Rng rng(4);
  auto m = init_model(capel::testing::random_prompts(rng, 3, 3, 4));
  const std::vector<std::uint8_t> none(9, 0);
  EXPECT_FALSE(flaw_separation(m, none).fraction_clean_above.has_value());
  std::vector<std::uint8_t> mask(9, 0);
  for (std::size_t y = 0; y < 3; ++y) {
    mask[y * 3 + 1] = 1;
    m.a(y, 0) = 0.3f;
    m.a(y, 1) = 0.1f;
    m.a(y, 2) = 0.3f;
  }
  const auto f = flaw_separation(m, mask);
  EXPECT_EQ(*f.fraction_clean_above, 1.0);
  EXPECT_NEAR(*f.mean_flawed[0], 0.1, 1e-7);
  EXPECT_NEAR(*f.mean_clean[2], 0.3, 1e-7);
  EXPECT_CAPEL_ERROR(flaw_separation(m, std::vector<std::uint8_t>(8, 0)), ErrorCode::DimMismatch);
}

TEST(CsvField, Quoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}
