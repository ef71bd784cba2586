#pragma once

// Flat binary tensor container with a plain-text header. Layout is
// documented in docs/checkpoint_format.md.

#include "xmrc/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace xmrc {

enum class DType { F32, F64 };

/// A tensor stored in the container, kept in its on-disk precision.
struct StoredTensor {
  std::string name;
  std::variant<Matrix<float>, Matrix<double>> data;

  DType dtype() const { return data.index() == 0 ? DType::F32 : DType::F64; }
  Index rows() const;
  Index cols() const;
  /// Value converted to Scalar.
  template <typename Scalar>
  Matrix<Scalar> as() const {
    return std::visit([](const auto& m) -> Matrix<Scalar> { return m.template cast<Scalar>(); }, data);
  }
};

struct TensorArchive {
  /// Single-line metadata values (JSON text by convention). Keys have no whitespace.
  std::map<std::string, std::string> meta;
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const;
};

void save_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive load_archive(const std::filesystem::path& path);

}  // namespace xmrc
