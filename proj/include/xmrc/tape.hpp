#pragma once

#include "xmrc/tensor.hpp"

#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <unordered_map>
#include <vector>

namespace xmrc {

template <typename Scalar>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  const Matrix<Scalar>& value() const { return tape->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Scalar item() const;
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Records ops in execution order and replays them backwards.
///
/// Intermediate gradients are recomputed on each backward() call. Leaf
/// gradients (inputs and bound parameters) accumulate until zero_grad(); a
/// bound Parameter additionally receives each pass's contribution in
/// Parameter::grad.
template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using BackwardFn = std::function<void(Tape&, const Mat& grad_out)>;

  explicit Tape(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives gradient.
  Var<Scalar> constant(Mat value);
  /// Leaf that accumulates gradient.
  Var<Scalar> input(Mat value);
  /// Leaf holding a copy of the parameter value; backward adds into param.grad.
  Var<Scalar> bind(Parameter<Scalar>& param);

  /// Appends a node. Inputs not requiring grad are ignored by backward.
  Var<Scalar> record(const char* op, Mat value, std::vector<int> inputs, BackwardFn fn);

  const Mat& value(Var<Scalar> v) const { return nodes_.at(check(v)).value; }
  /// Gradient of the last backward() for intermediates, accumulated for leaves.
  /// Zero-filled when no gradient reached the node.
  Mat grad(Var<Scalar> v) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  const std::string& op_name(Var<Scalar> v) const { return nodes_.at(check(v)).op; }

  /// Adds `g` to the pending gradient of node `id` (no-op if it does not require grad).
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g);

  void backward(Var<Scalar> loss);
  void zero_grad();

  /// Stop-gradient values can be recorded on one tape and replayed on
  /// another, which holds detached inputs fixed while parameters move.
  enum class DetachMode { Off, Record, Replay };
  void set_detach_store(std::vector<Mat>* store, DetachMode mode) {
    detach_store_ = store;
    detach_mode_ = store ? mode : DetachMode::Off;
    detach_cursor_ = 0;
  }
  /// Value a stop-gradient op should emit for `value`.
  Mat detached_value(const Mat& value);

  std::mt19937_64& rng() { return rng_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    Mat value;
    Mat grad;
    Mat accumulated;
    bool requires_grad = false;
    bool leaf = false;
    Parameter<Scalar>* param = nullptr;
    BackwardFn backward;
  };

  int check(Var<Scalar> v) const;

  std::deque<Node> nodes_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  std::vector<Mat>* detach_store_ = nullptr;
  DetachMode detach_mode_ = DetachMode::Off;
  std::size_t detach_cursor_ = 0;
};

/// Binds each Parameter at most once per binding, so that one branch of a
/// model shares a single leaf per parameter and its gradient can be inspected.
template <typename Scalar>
class ParamBinding {
 public:
  explicit ParamBinding(Tape<Scalar>& tape, bool trainable = true) : tape_(&tape), trainable_(trainable) {}

  Var<Scalar> operator()(Parameter<Scalar>& p);
  /// Leaf for `p` if it was bound through this binding.
  std::optional<Var<Scalar>> find(const Parameter<Scalar>& p) const;
  Tape<Scalar>& tape() const { return *tape_; }

 private:
  Tape<Scalar>* tape_;
  bool trainable_;
  std::unordered_map<const Parameter<Scalar>*, int> leaves_;
};

template <typename Scalar>
Scalar Var<Scalar>::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item", v.rows(), v.cols(), 1, 1);
  return v(0, 0);
}

template <typename Scalar>
template <typename Derived>
void Tape<Scalar>::accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

}  // namespace xmrc
