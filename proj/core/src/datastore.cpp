#include "capel/datastore.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "capel/error.hpp"
#include "capel/numerics.hpp"
#include "json.hpp"

namespace capel {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint8_t kEmbeddingMagic[4] = {'C', 'A', 'P', 'E'};
constexpr std::uint8_t kCheckpointMagic[4] = {'C', 'A', 'P', 'C'};
constexpr std::size_t kEmbeddingHeaderBytes = 17;
constexpr std::size_t kCheckpointHeaderBytes = 28;
constexpr std::uint8_t kFlagLabels = 0x01;

class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return data_[pos_++]; }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  void skip(std::size_t n) { pos_ += n; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw Error(ErrorCode::InvalidArgument, std::string(what) + " exceeds u32");
  return static_cast<std::uint32_t>(v);
}

bool has_magic(std::span<const std::uint8_t> bytes, const std::uint8_t (&magic)[4]) {
  return bytes.size() >= 4 && std::memcmp(bytes.data(), magic, 4) == 0;
}

}  // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

// ---------------------------------------------------------------- embeddings

std::vector<std::uint8_t> encode_embeddings(const EmbeddingMatrix& matrix, const LabelVector* labels) {
  if (matrix.data.size() != matrix.rows * matrix.dim) {
    throw Error(ErrorCode::SizeMismatch, "matrix storage does not match rows × dim");
  }
  if (labels && labels->size() != matrix.rows) {
    throw Error(ErrorCode::SizeMismatch, "label count " + std::to_string(labels->size()) +
                                             " != row count " + std::to_string(matrix.rows));
  }
  ByteWriter w;
  w.bytes(kEmbeddingMagic);
  w.u32(kFormatVersion);
  w.u32(checked_u32(matrix.rows, "n_rows"));
  w.u32(checked_u32(matrix.dim, "dim"));
  w.u8(labels ? kFlagLabels : 0);
  for (float v : matrix.data) w.f32(v);
  if (labels) {
    for (std::uint32_t l : *labels) w.u32(l);
  }
  return w.take();
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix,
                      const LabelVector* labels) {
  write_file(path, encode_embeddings(matrix, labels));
}

EmbeddingHeader decode_embedding_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4 && !has_magic(bytes, kEmbeddingMagic)) {
    throw Error(ErrorCode::BadMagic, "not an embedding file (expected \"CAPE\")");
  }
  if (bytes.size() < kEmbeddingHeaderBytes) {
    throw Error(ErrorCode::SizeMismatch, "file shorter than the 17-byte header");
  }
  ByteReader r(bytes);
  r.skip(4);
  EmbeddingHeader h;
  h.version = r.u32();
  if (h.version != kFormatVersion) {
    throw Error(ErrorCode::BadVersion, "embedding file version " + std::to_string(h.version));
  }
  h.rows = r.u32();
  h.dim = r.u32();
  const std::uint8_t flags = r.u8();
  if (flags & ~kFlagLabels) throw Error(ErrorCode::BadFlags, "reserved flag bits set");
  h.has_labels = (flags & kFlagLabels) != 0;
  if (h.dim == 0) throw Error(ErrorCode::SizeMismatch, "dim must be positive");
  return h;
}

LabeledEmbeddings decode_embeddings(std::span<const std::uint8_t> bytes) {
  const auto h = decode_embedding_header(bytes);
  const std::uint64_t cells = static_cast<std::uint64_t>(h.rows) * h.dim;
  const std::uint64_t expected =
      kEmbeddingHeaderBytes + 4 * cells + (h.has_labels ? 4ULL * h.rows : 0ULL);
  if (expected != bytes.size()) {
    throw Error(ErrorCode::SizeMismatch, "header declares " + std::to_string(expected) +
                                             " bytes, file has " + std::to_string(bytes.size()));
  }
  ByteReader r(bytes);
  r.skip(kEmbeddingHeaderBytes);
  LabeledEmbeddings out;
  out.matrix = EmbeddingMatrix(h.rows, h.dim);
  for (auto& v : out.matrix.data) v = r.f32();
  if (h.has_labels) {
    LabelVector labels(h.rows);
    for (auto& l : labels) l = r.u32();
    out.labels = std::move(labels);
  }
  for (std::size_t i = 0; i < out.matrix.rows; ++i) {
    const double norm = l2_norm(out.matrix.row(i));
    if (!(std::abs(norm - 1.0) <= kRowNormTolerance)) {
      throw Error(ErrorCode::NormOutOfRange,
                  "row " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
  }
  return out;
}

LabeledEmbeddings read_embeddings(const std::filesystem::path& path) {
  try {
    return decode_embeddings(read_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

// --------------------------------------------------------------- prompt bank

PromptBank parse_prompt_bank(const std::string& json_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (!doc.is_object() || doc.empty()) {
    throw Error(ErrorCode::ParseError, "prompt bank must be a non-empty JSON object");
  }
  std::vector<std::string> names;
  PromptBank bank;
  for (const auto& [name, list] : doc.items()) {
    if (!list.is_array()) {
      throw Error(ErrorCode::ParseError, "prompts of class '" + name + "' are not an array");
    }
    std::vector<std::string> prompts;
    for (const auto& p : list) {
      if (!p.is_string()) {
        throw Error(ErrorCode::ParseError, "non-string prompt in class '" + name + "'");
      }
      auto text = p.get<std::string>();
      if (text.empty()) throw Error(ErrorCode::EmptyPrompt, "empty prompt in class '" + name + "'");
      prompts.push_back(std::move(text));
    }
    if (prompts.empty()) throw Error(ErrorCode::RaggedBank, "class '" + name + "' has no prompts");
    if (!bank.prompts.empty() && prompts.size() != bank.prompts.front().size()) {
      throw Error(ErrorCode::RaggedBank, "class '" + name + "' has " +
                                             std::to_string(prompts.size()) + " prompts, expected " +
                                             std::to_string(bank.prompts.front().size()));
    }
    names.push_back(name);
    bank.prompts.push_back(std::move(prompts));
  }
  bank.classes = ClassIndex(std::move(names));
  return bank;
}

PromptBank read_prompt_bank(const std::filesystem::path& path) {
  return parse_prompt_bank(read_text(path));
}

void write_prompt_bank(const std::filesystem::path& path, const PromptBank& bank) {
  ordered_json doc = ordered_json::object();
  for (std::size_t y = 0; y < bank.num_classes(); ++y) doc[bank.classes.name(y)] = bank.prompts[y];
  write_text(path, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------- checkpoint

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

std::vector<std::uint8_t> encode_checkpoint(const CapelModel& model) {
  model.validate();
  ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u32(kFormatVersion);
  w.u32(checked_u32(model.classes, "Y"));
  w.u32(checked_u32(model.prompts, "K"));
  w.u32(checked_u32(model.dim, "D"));
  w.f32(model.tau);
  w.u32(0);
  for (float v : model.weights) w.f32(v);
  for (float v : model.alpha) w.f32(v);
  return w.take();
}

CheckpointHeader decode_checkpoint_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 4 && !has_magic(bytes, kCheckpointMagic)) {
    throw Error(ErrorCode::BadMagic, "not a checkpoint (expected \"CAPC\")");
  }
  if (bytes.size() < kCheckpointHeaderBytes) {
    throw Error(ErrorCode::SizeMismatch, "file shorter than the 28-byte header");
  }
  ByteReader r(bytes);
  r.skip(4);
  CheckpointHeader h;
  h.version = r.u32();
  if (h.version != kFormatVersion) {
    throw Error(ErrorCode::BadVersion, "checkpoint version " + std::to_string(h.version));
  }
  h.classes = r.u32();
  h.prompts = r.u32();
  h.dim = r.u32();
  h.tau = r.f32();
  h.flags = r.u32();
  if (h.flags != 0) throw Error(ErrorCode::BadFlags, "reserved checkpoint flags set");
  if (h.classes == 0 || h.prompts == 0 || h.dim == 0) {
    throw Error(ErrorCode::DimMismatch, "checkpoint dimensions must be positive");
  }
  if (!(h.tau > 0.0f) || !std::isfinite(h.tau)) {
    throw Error(ErrorCode::InvalidArgument, "checkpoint tau must be positive");
  }
  return h;
}

CapelModel decode_checkpoint(std::span<const std::uint8_t> bytes, const ClassIndex& classes) {
  const auto h = decode_checkpoint_header(bytes);
  const std::uint64_t yk = static_cast<std::uint64_t>(h.classes) * h.prompts;
  const std::uint64_t expected = kCheckpointHeaderBytes + 4 * (yk * h.dim + yk);
  if (expected != bytes.size()) {
    throw Error(ErrorCode::SizeMismatch, "header declares " + std::to_string(expected) +
                                             " bytes, file has " + std::to_string(bytes.size()));
  }
  if (classes.size() != h.classes) {
    throw Error(ErrorCode::DimMismatch, "header Y=" + std::to_string(h.classes) + " but " +
                                            std::to_string(classes.size()) + " class names");
  }
  ByteReader r(bytes);
  r.skip(kCheckpointHeaderBytes);
  CapelModel m;
  m.classes = h.classes;
  m.prompts = h.prompts;
  m.dim = h.dim;
  m.tau = h.tau;
  m.class_index = classes;
  m.weights.resize(yk * h.dim);
  m.alpha.resize(yk);
  for (auto& v : m.weights) v = r.f32();
  for (auto& v : m.alpha) v = r.f32();
  m.validate();
  return m;
}

void write_checkpoint(const std::filesystem::path& path, const CapelModel& model,
                      const CheckpointMeta& meta) {
  const auto bytes = encode_checkpoint(model);
  ordered_json doc;
  doc["format"] = "capel-checkpoint";
  doc["version"] = kFormatVersion;
  doc["classes"] = model.classes;
  doc["prompts"] = model.prompts;
  doc["dim"] = model.dim;
  doc["tau"] = model.tau;
  doc["class_names"] = model.class_index.names();
  try {
    doc["train_config"] = ordered_json::parse(meta.train_config_json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("train config: ") + e.what());
  }
  doc["history_digest"] = meta.history_digest;
  write_file(path, bytes);
  write_text(checkpoint_sidecar(path), doc.dump(2) + "\n");
}

CapelModel read_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
  const auto bytes = read_file(path);
  const auto header = decode_checkpoint_header(bytes);
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_text(checkpoint_sidecar(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, checkpoint_sidecar(path).string() + ": " + e.what());
  }
  std::vector<std::string> names;
  try {
    const auto y = doc.at("classes").get<std::uint64_t>();
    const auto k = doc.at("prompts").get<std::uint64_t>();
    const auto d = doc.at("dim").get<std::uint64_t>();
    if (y != header.classes || k != header.prompts || d != header.dim) {
      throw Error(ErrorCode::DimMismatch,
                  "metadata (Y=" + std::to_string(y) + ", K=" + std::to_string(k) + ", D=" +
                      std::to_string(d) + ") disagrees with header (Y=" +
                      std::to_string(header.classes) + ", K=" + std::to_string(header.prompts) +
                      ", D=" + std::to_string(header.dim) + ")");
    }
    names = doc.at("class_names").get<std::vector<std::string>>();
    if (meta) {
      meta->train_config_json = doc.value("train_config", ordered_json::object()).dump();
      meta->history_digest = doc.value("history_digest", std::string{});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, checkpoint_sidecar(path).string() + ": " + e.what());
  }
  return decode_checkpoint(bytes, ClassIndex(std::move(names)));
}

// ------------------------------------------------------------------- helpers

PromptTensor prompt_tensor_from_rows(const EmbeddingMatrix& rows, std::size_t classes,
                                     std::size_t prompts) {
  if (rows.rows != classes * prompts) {
    throw Error(ErrorCode::DimMismatch, "prompt embeddings have " + std::to_string(rows.rows) +
                                            " rows, expected Y·K = " +
                                            std::to_string(classes * prompts));
  }
  PromptTensor t(classes, prompts, rows.dim);
  t.data = rows.data;
  return t;
}

EmbeddingMatrix prompt_tensor_to_rows(const PromptTensor& prompts) {
  EmbeddingMatrix m(prompts.classes * prompts.prompts, prompts.dim);
  m.data = prompts.data;
  return m;
}

}  // namespace capel
