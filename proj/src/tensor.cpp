#include "ctd/tensor.hpp"

#include <cmath>
#include <sstream>

#include "ctd/error.hpp"

namespace ctd {

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 3) {
    throw UsageError("bad_rank", "tensor rank must be 1..3, got " +
                                     ShapeString(shape_));
  }
  data_.assign(NumElements(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 3) {
    throw UsageError("bad_rank", "tensor rank must be 1..3, got " +
                                     ShapeString(shape_));
  }
  if (NumElements(shape_) != data_.size()) {
    throw UsageError("shape_mismatch",
                     "tensor shape " + ShapeString(shape_) + " needs " +
                         std::to_string(NumElements(shape_)) +
                         " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::Filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  t.Fill(value);
  return t;
}

Tensor Tensor::Vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw UsageError("not_scalar",
                     "item() on tensor of shape " + ShapeString(shape_));
  }
  return data_[0];
}

void Tensor::Fill(double value) {
  for (double& x : data_) x = value;
}

Tensor Tensor::Reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::AllFinite() const {
  for (double x : data_) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace ctd
