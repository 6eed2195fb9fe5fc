#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace unisoma {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Error families. The CLI maps each onto a distinct exit code.
struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Tape;

/// Immutable dense array of doubles in row-major order.
///
/// Copies share storage. A tensor produced by an op whose inputs live on a
/// Tape carries a node handle into that tape; everything else is a plain
/// value.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  const double* ptr() const { return data_ ? data_->data() : nullptr; }
  std::vector<double> to_vector() const;

  double operator[](std::size_t flat) const { return (*data_)[flat]; }
  double at(std::size_t row, std::size_t col) const;
  double item() const;

  bool is_scalar() const { return numel() == 1; }
  bool empty() const { return numel() == 0; }
  bool all_finite() const;

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  bool tracked() const { return tape_ != nullptr; }

  /// Same values, detached from any tape.
  Tensor detach() const;

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace unisoma
