#include "capel/synth.hpp"

#include <algorithm>
#include <string>

#include "capel/error.hpp"
#include "capel/numerics.hpp"
#include "capel/rng.hpp"
#include "json.hpp"

namespace capel {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(FlawMode mode) {
  return mode == FlawMode::Random ? "random" : "wrong_class";
}

FlawMode parse_flaw_mode(std::string_view text) {
  if (text == "wrong_class") return FlawMode::WrongClass;
  if (text == "random") return FlawMode::Random;
  throw Error(ErrorCode::InvalidArgument, "unknown flaw mode '" + std::string(text) + "'");
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (classes < 1 || clusters < 1 || prompts < 1) fail("classes, clusters and prompts must be >= 1");
  if (train_per_class < 1 || test_per_class < 1) fail("sample counts must be >= 1");
  if (dim < 8) fail("dim must be >= 8");
  if (!(sigma_sample >= 0.0) || !(sigma_prompt >= 0.0)) fail("noise scales must be >= 0");
  if (flawed_per_class >= prompts) fail("flawed_per_class must be < prompts");
  if (flawed_per_class > 0 && flaw_mode == FlawMode::WrongClass && classes < 2) {
    fail("wrong_class flaws need at least two classes");
  }
}

std::string SynthConfig::to_json() const {
  ordered_json j;
  j["classes"] = classes;
  j["clusters"] = clusters;
  j["prompts"] = prompts;
  j["dim"] = dim;
  j["train_per_class"] = train_per_class;
  j["test_per_class"] = test_per_class;
  j["sigma_sample"] = sigma_sample;
  j["sigma_prompt"] = sigma_prompt;
  j["flawed_per_class"] = flawed_per_class;
  j["flaw_mode"] = std::string(to_string(flaw_mode));
  j["seed"] = seed;
  return j.dump();
}

namespace {

std::vector<float> perturbed(std::span<const float> center, double sigma, Rng& rng) {
  std::vector<float> v(center.size());
  for (std::size_t d = 0; d < v.size(); ++d) {
    v[d] = static_cast<float>(center[d] + sigma * rng.gaussian());
  }
  return l2_normalize(v);
}

std::vector<float> random_direction(std::size_t dim, Rng& rng) {
  std::vector<float> v(dim);
  for (auto& x : v) x = static_cast<float>(rng.gaussian());
  return l2_normalize(v);
}

void draw_split(const SynthConfig& cfg, const EmbeddingMatrix& centers, std::size_t per_class,
                Rng& rng, SynthSplit& out) {
  out.x = EmbeddingMatrix(cfg.classes * per_class, cfg.dim);
  out.y.resize(out.x.rows);
  out.cluster.resize(out.x.rows);
  std::size_t row = 0;
  for (std::size_t y = 0; y < cfg.classes; ++y) {
    for (std::size_t n = 0; n < per_class; ++n, ++row) {
      const auto m = static_cast<std::size_t>(rng.uniform_index(cfg.clusters));
      const auto v = perturbed(centers.row(y * cfg.clusters + m), cfg.sigma_sample, rng);
      std::copy(v.begin(), v.end(), out.x.row(row).begin());
      out.y[row] = static_cast<std::uint32_t>(y);
      out.cluster[row] = static_cast<std::uint32_t>(m);
    }
  }
}

}  // namespace

SynthInstance generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  SynthInstance inst;
  inst.config = cfg;
  const std::size_t Y = cfg.classes;
  const std::size_t M = cfg.clusters;
  const std::size_t K = cfg.prompts;

  inst.centers = EmbeddingMatrix(Y * M, cfg.dim);
  for (std::size_t y = 0; y < Y; ++y) {
    std::size_t placed = 0;
    std::size_t draws = 0;
    while (placed < M) {
      if (draws++ >= kMaxCenterDraws) {
        throw Error(ErrorCode::RejectionExhausted,
                    "class " + std::to_string(y) + ": could not place " + std::to_string(M) +
                        " centers with pairwise cosine < 0.8");
      }
      const auto c = random_direction(cfg.dim, rng);
      bool separated = true;
      for (std::size_t j = 0; j < placed && separated; ++j) {
        separated = cosine(c, inst.centers.row(y * M + j)) < kMaxCenterCosine;
      }
      if (!separated) continue;
      std::copy(c.begin(), c.end(), inst.centers.row(y * M + placed).begin());
      ++placed;
    }
  }

  inst.prompts = PromptTensor(Y, K, cfg.dim);
  inst.flaw_mask.assign(Y * K, 0);
  inst.prompt_cluster.assign(Y * K, -1);
  for (std::size_t y = 0; y < Y; ++y) {
    for (std::size_t k : rng.choose_k(K, cfg.flawed_per_class)) inst.flaw_mask[y * K + k] = 1;
    std::size_t clean = 0;
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<float> v;
      if (inst.flaw_mask[y * K + k]) {
        if (cfg.flaw_mode == FlawMode::WrongClass) {
          auto other = static_cast<std::size_t>(rng.uniform_index(Y - 1));
          if (other >= y) ++other;
          const auto m = static_cast<std::size_t>(rng.uniform_index(M));
          v = perturbed(inst.centers.row(other * M + m), cfg.sigma_prompt, rng);
        } else {
          v = random_direction(cfg.dim, rng);
        }
      } else {
        const std::size_t m = clean++ % M;
        inst.prompt_cluster[y * K + k] = static_cast<int>(m);
        v = perturbed(inst.centers.row(y * M + m), cfg.sigma_prompt, rng);
      }
      std::copy(v.begin(), v.end(), inst.prompts.vec(y, k).begin());
    }
  }

  draw_split(cfg, inst.centers, cfg.train_per_class, rng, inst.train);
  draw_split(cfg, inst.centers, cfg.test_per_class, rng, inst.test);
  return inst;
}

std::string synth_manifest_json(const SynthInstance& inst) {
  ordered_json j;
  j["format"] = "capel-synth-manifest";
  j["config"] = ordered_json::parse(inst.config.to_json());
  j["files"] = {{"train", "train.cape"},
                {"test", "test.cape"},
                {"prompt_embeddings", "bank.cape"},
                {"prompt_bank", "bank.json"}};
  j["train_clusters"] = inst.train.cluster;
  j["test_clusters"] = inst.test.cluster;
  auto& mask = j["flaw_mask"] = ordered_json::array();
  auto& pc = j["prompt_cluster"] = ordered_json::array();
  for (std::size_t y = 0; y < inst.config.classes; ++y) {
    std::vector<bool> row;
    std::vector<int> clusters;
    for (std::size_t k = 0; k < inst.config.prompts; ++k) {
      row.push_back(inst.flawed(y, k));
      clusters.push_back(inst.prompt_cluster[y * inst.config.prompts + k]);
    }
    mask.push_back(row);
    pc.push_back(clusters);
  }
  return j.dump(2);
}

}  // namespace capel
