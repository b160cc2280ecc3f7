#include "capel/tensor.hpp"

#include <algorithm>

#include "capel/error.hpp"

namespace capel {

EmbeddingMatrix EmbeddingMatrix::gather(std::span<const std::size_t> indices) const {
  EmbeddingMatrix out(indices.size(), dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) throw Error(ErrorCode::InvalidArgument, "gather index out of range");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(indices[i] * dim), dim,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * dim));
  }
  return out;
}

ClassIndex::ClassIndex(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!lookup_.emplace(names_[i], i).second) {
      throw Error(ErrorCode::InvalidArgument, "duplicate class name '" + names_[i] + "'");
    }
  }
}

std::size_t ClassIndex::index_of(const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) throw Error(ErrorCode::InvalidArgument, "unknown class '" + name + "'");
  return it->second;
}

ClassIndex ClassIndex::numbered(std::size_t count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (std::size_t i = 0; i < count; ++i) names.push_back("class" + std::to_string(i));
  return ClassIndex(std::move(names));
}

}  // namespace capel
