#pragma once

// On-disk formats. All integers are little-endian, all floats IEEE-754
// binary32 little-endian.
//
// Embedding file (.cape)
//   offset  size  field
//        0     4  magic "CAPE"
//        4     4  u32 version = 1
//        8     4  u32 n_rows
//       12     4  u32 dim
//       16     1  u8 flags (bit 0: labels present; other bits must be 0)
//       17  4·N·D f32 row-major data
//        …   4·N  u32 labels (iff flags bit 0)
//
// Checkpoint (.capc) plus a JSON sidecar at "<path>.json"
//   offset  size  field
//        0     4  magic "CAPC"
//        4     4  u32 version = 1
//        8     4  u32 Y (classes)
//       12     4  u32 K (sub-classifiers per class)
//       16     4  u32 D (feature dim)
//       20     4  f32 tau
//       24     4  u32 flags (reserved, 0)
//       28 4·Y·K·D f32 W, class-major then prompt-major then feature
//        …  4·Y·K  f32 alpha, class-major
//
// Prompt bank: UTF-8 JSON object {class: [prompt, ...], ...}; key order is
// the label order.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "capel/model.hpp"
#include "capel/tensor.hpp"

namespace capel {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr double kRowNormTolerance = 1e-3;

struct LabeledEmbeddings {
  EmbeddingMatrix matrix;
  std::optional<LabelVector> labels;
};

struct EmbeddingHeader {
  std::uint32_t version = 0;
  std::uint32_t rows = 0;
  std::uint32_t dim = 0;
  bool has_labels = false;
};

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix,
                      const LabelVector* labels = nullptr);
std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& matrix,
                                            const LabelVector* labels = nullptr);

/// Validates magic, version, size arithmetic and that every row norm lies in
/// [1 - 1e-3, 1 + 1e-3].
LabeledEmbeddings read_embeddings(const std::filesystem::path& path);
LabeledEmbeddings decode_embeddings(std::span<const std::uint8_t> bytes);
EmbeddingHeader decode_embedding_header(std::span<const std::uint8_t> bytes);

struct PromptBank {
  ClassIndex classes;
  std::vector<std::vector<std::string>> prompts;  // [class][k]

  std::size_t num_classes() const { return prompts.size(); }
  std::size_t prompts_per_class() const { return prompts.empty() ? 0 : prompts.front().size(); }
};

PromptBank parse_prompt_bank(const std::string& json_text);
PromptBank read_prompt_bank(const std::filesystem::path& path);
void write_prompt_bank(const std::filesystem::path& path, const PromptBank& bank);

struct CheckpointMeta {
  std::string train_config_json = "{}";
  std::string history_digest;
};

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint32_t classes = 0;
  std::uint32_t prompts = 0;
  std::uint32_t dim = 0;
  float tau = 0.0f;
  std::uint32_t flags = 0;
};

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const CapelModel& model);
CapelModel decode_checkpoint(std::span<const std::uint8_t> bytes, const ClassIndex& classes);
CheckpointHeader decode_checkpoint_header(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const CapelModel& model,
                      const CheckpointMeta& meta = {});
/// Reads binary and sidecar; DimMismatch when they disagree.
CapelModel read_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// Y·K×D prompt embedding rows (class-major) reshaped for init_model.
PromptTensor prompt_tensor_from_rows(const EmbeddingMatrix& rows, std::size_t classes,
                                     std::size_t prompts);
EmbeddingMatrix prompt_tensor_to_rows(const PromptTensor& prompts);

}  // namespace capel
