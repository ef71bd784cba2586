#include "xmrc/tape.hpp"

#include <optional>

namespace xmrc {

template <typename Scalar>
int Tape<Scalar>::check(Var<Scalar> v) const {
  if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw Error("tape: variable does not belong to this tape");
  }
  return v.id;
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::constant(Mat value) {
  if (!value.allFinite()) throw NumericError("constant: non-finite value");
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  n.leaf = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::input(Mat value) {
  Var<Scalar> v = constant(std::move(value));
  nodes_.back().op = "input";
  nodes_.back().requires_grad = true;
  return v;
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::bind(Parameter<Scalar>& param) {
  Var<Scalar> v = input(param.value);
  nodes_.back().op = "param:" + param.name;
  nodes_.back().param = &param;
  return v;
}

template <typename Scalar>
Var<Scalar> Tape<Scalar>::record(const char* op, Mat value, std::vector<int> inputs, BackwardFn fn) {
  if (!value.allFinite()) throw NumericError(std::string(op) + ": non-finite output");
  Node n;
  n.op = op;
  n.value = std::move(value);
  for (int id : inputs) {
    if (nodes_.at(id).requires_grad) {
      n.requires_grad = true;
      break;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

template <typename Scalar>
typename Tape<Scalar>::Mat Tape<Scalar>::grad(Var<Scalar> v) const {
  const Node& n = nodes_.at(check(v));
  const Mat& g = n.leaf ? n.accumulated : n.grad;
  if (g.size() == 0) return Mat::Zero(n.value.rows(), n.value.cols());
  return g;
}

template <typename Scalar>
void Tape<Scalar>::backward(Var<Scalar> loss) {
  const int root = check(loss);
  const Mat& lv = nodes_[root].value;
  if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + ShapeError::shape_string(lv.rows(), lv.cols()));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad = Mat::Ones(1, 1);
  for (int id = root; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;
    if (n.leaf) {
      if (n.accumulated.size() == 0) {
        n.accumulated = n.grad;
      } else {
        n.accumulated += n.grad;
      }
      if (n.param != nullptr) n.param->grad += n.grad;
    } else if (n.backward) {
      // Copy: the callback may accumulate into other nodes only, but keep
      // the buffer stable regardless.
      const Mat g = n.grad;
      n.backward(*this, g);
    }
  }
}

template <typename Scalar>
typename Tape<Scalar>::Mat Tape<Scalar>::detached_value(const Mat& value) {
  switch (detach_mode_) {
    case DetachMode::Off:
      return value;
    case DetachMode::Record:
      detach_store_->push_back(value);
      return value;
    case DetachMode::Replay:
      break;
  }
  if (detach_cursor_ >= detach_store_->size()) throw Error("tape: detach replay ran past the recorded values");
  const Mat& v = (*detach_store_)[detach_cursor_++];
  if (v.rows() != value.rows() || v.cols() != value.cols()) {
    throw ShapeError("detach replay", v.rows(), v.cols(), value.rows(), value.cols());
  }
  return v;
}

template <typename Scalar>
void Tape<Scalar>::zero_grad() {
  for (auto& n : nodes_) {
    n.grad.resize(0, 0);
    n.accumulated.resize(0, 0);
  }
}

template <typename Scalar>
Var<Scalar> ParamBinding<Scalar>::operator()(Parameter<Scalar>& p) {
  auto it = leaves_.find(&p);
  if (it != leaves_.end()) return {tape_, it->second};
  Var<Scalar> v = trainable_ ? tape_->bind(p) : tape_->constant(p.value);
  leaves_.emplace(&p, v.id);
  return v;
}

template <typename Scalar>
std::optional<Var<Scalar>> ParamBinding<Scalar>::find(const Parameter<Scalar>& p) const {
  auto it = leaves_.find(&p);
  if (it == leaves_.end()) return std::nullopt;
  return Var<Scalar>{tape_, it->second};
}

template class Tape<float>;
template class Tape<double>;
template class ParamBinding<float>;
template class ParamBinding<double>;

}  // namespace xmrc
