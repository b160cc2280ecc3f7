#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace capel {

using LabelVector = std::vector<std::uint32_t>;

/// Row-major N×D binary32 matrix of embedding rows.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t n, std::size_t d) : rows(n), dim(d), data(n * d, 0.0f) {}

  std::span<float> row(std::size_t i) { return {data.data() + i * dim, dim}; }
  std::span<const float> row(std::size_t i) const { return {data.data() + i * dim, dim}; }

  /// Rows at `indices`, in that order.
  EmbeddingMatrix gather(std::span<const std::size_t> indices) const;
};

/// Ordered class names. Position defines the label index.
class ClassIndex {
 public:
  ClassIndex() = default;
  explicit ClassIndex(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t index) const { return names_.at(index); }
  const std::vector<std::string>& names() const { return names_; }
  /// Throws InvalidArgument for unknown names.
  std::size_t index_of(const std::string& name) const;

  /// class0, class1, ...
  static ClassIndex numbered(std::size_t count);

  bool operator==(const ClassIndex& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> lookup_;
};

}  // namespace capel
