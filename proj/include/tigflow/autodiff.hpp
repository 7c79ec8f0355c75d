#pragma once

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <utility>
#include <vector>

namespace tigflow::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  [[nodiscard]] const Matrix& value() const;
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] double scalar() const { return value()(0, 0); }
  [[nodiscard]] Tape* tape() const noexcept { return tape_; }
  [[nodiscard]] int id() const noexcept { return id_; }
  [[nodiscard]] bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode tape over row-major double matrices. Values are computed
// eagerly when an op is recorded; backward() walks the nodes in reverse.
// Nodes that do not depend on any variable carry no backward closure.
class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  // Seeds d(scalar)/d(scalar) = 1 and propagates to every variable.
  void backward(const Var& scalar);

  // Gradient w.r.t. a node after backward(); zeros when none reached it.
  [[nodiscard]] Matrix grad(const Var& v) const;

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  // Op plumbing.
  [[nodiscard]] bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  [[nodiscard]] const Matrix& value(int id) const { return nodes_[id].value; }
  Var record(Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);
  // Adds delta into the gradient of node id (no-op for constants).
  void accumulate(int id, const Matrix& delta);
  template <typename Fn>
  void accumulate_with(int id, Fn&& fn) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    ensure_grad(n);
    fn(n.grad);
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  static void ensure_grad(Node& n) {
    if (!n.has_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
  }
  std::deque<Node> nodes_;
};

// ---- operations -----------------------------------------------------------
// Shapes are checked and mismatches throw std::invalid_argument.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var div(const Var& a, const Var& b);  // elementwise
Var add_row(const Var& x, const Var& row);   // broadcast a 1 x m row over x
Var mul_col(const Var& x, const Var& col);   // broadcast an n x 1 column over x
Var mul_scalar(const Var& x, const Var& s);  // s is 1 x 1
Var scale(const Var& x, double c);
Var shift(const Var& x, double c);
Var tanh(const Var& x);
Var sigmoid(const Var& x);
Var exp(const Var& x);
Var square(const Var& x);
Var row_sum(const Var& x);   // n x 1
Var row_mean(const Var& x);  // n x 1
Var sum(const Var& x);       // 1 x 1
Var mean(const Var& x);      // 1 x 1
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& x, Eigen::Index begin, Eigen::Index count);
Var gather_rows(const Var& x, std::vector<int> index);
// out.row(segment[i]) += x.row(i); out has n_out rows.
Var segment_sum(const Var& x, std::vector<int> segment, int n_out);
// Row-wise layer normalization with a 1 x m gain and shift.
Var layer_norm(const Var& x, const Var& gain, const Var& shift, double eps = 1e-5);
// Single-head scaled dot-product attention; rows of each [begin, begin+len)
// range attend only to rows of the same range.
Var attention(const Var& q, const Var& k, const Var& v, std::vector<std::pair<int, int>> ranges);
Var clip(const Var& x, double lo, double hi);
Var minimum(const Var& a, const Var& b);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }

}  // namespace tigflow::ad
