#pragma once

#include <Eigen/Core>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace btmpg::ad {

using Mat = Eigen::MatrixXd;

// A trainable tensor. Gradients accumulate across backward passes until
// zero_grad(); the optimizer owns the update step.
struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param(std::string n, int rows, int cols)
      : name(std::move(n)), value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  int rows() const { return static_cast<int>(value.rows()); }
  int cols() const { return static_cast<int>(value.cols()); }
  int size() const { return static_cast<int>(value.size()); }
  void zero_grad() { grad.setZero(); }
};

// Named collection of parameters with stable iteration order.
class ParamSet {
 public:
  Param& add(const std::string& name, int rows, int cols);
  Param* find(const std::string& name);
  const std::vector<std::unique_ptr<Param>>& all() const { return items_; }
  std::size_t count() const { return items_.size(); }
  std::size_t entry_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Param>> items_;
};

class Tape;

// Handle into a tape; cheap to copy. A default-constructed Var is invalid.
struct Var {
  Tape* tape = nullptr;
  int idx = -1;

  bool ok() const { return tape != nullptr && idx >= 0; }
  const Mat& val() const;
  int rows() const { return static_cast<int>(val().rows()); }
  int cols() const { return static_cast<int>(val().cols()); }
};

// Reverse-mode tape over dense double matrices. Nodes are appended in
// topological order; backward() sweeps them in reverse. One tape per
// forward pass; clear() or destruction releases everything.
class Tape {
 public:
  Var input(Mat v);                 // constant leaf, no gradient
  Var param(Param& p);              // trainable leaf, grads flow to p.grad
                                    // (memoized: one node per Param per tape)

  void backward(Var loss);          // loss must be 1x1
  void clear();
  std::size_t size() const { return nodes_.size(); }

  // Low-level interface used by the op layer.
  using BackFn = std::function<void(Tape&)>;
  Var emit(Mat value, bool needs_grad, BackFn back);
  const Mat& value(int idx) const { return nodes_[idx].value; }
  const Mat& grad(int idx) const { return nodes_[idx].grad; }
  bool needs_grad(int idx) const { return nodes_[idx].needs_grad; }

  // Adds g into the gradient slot of idx (no-op when idx does not need it).
  template <typename Expr>
  void accum(int idx, const Expr& g) {
    Node& n = nodes_[idx];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

 private:
  struct Node {
    Mat value;
    Mat grad;               // lazily sized on first accumulation
    bool needs_grad = false;
    Param* pref = nullptr;  // set for param leaves
    BackFn back;            // empty for leaves
  };
  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> param_nodes_;
};

// ---- ops -------------------------------------------------------------
// All binary ops require operands from the same tape.

Var add(Var a, Var b);                       // same shape
Var sub(Var a, Var b);
Var add_n(const std::vector<Var>& xs);       // elementwise sum of >=1 terms
Var matmul(Var a, Var b);                    // [m×k]·[k×n]
Var matmul_nt(Var a, Var b);                 // A·Bᵀ
Var cmul(Var a, Var b);                      // elementwise
Var cmul_colvec(Var a, Var s);               // a [m×n] scaled rowwise by s [m×1]
Var scale(Var a, double s);
Var add_scalar(Var a, double c);
Var add_rowvec(Var a, Var b);                // a [m×n] + broadcast b [1×n]
Var affine(Var x, Var w, Var b);             // x·w + b (b broadcast rowwise)
Var sigmoid(Var a);
Var tanh_(Var a);
Var relu(Var a);
Var log_(Var a);
Var exp_(Var a);
Var clamp(Var a, double lo, double hi);      // gradient passes only strictly inside
Var softmax_rows(Var a);
Var concat_cols(const std::vector<Var>& xs);
Var concat_rows(const std::vector<Var>& xs);
Var slice_cols(Var a, int start, int n);
Var slice_rows(Var a, int start, int n);
Var sum_all(Var a);                          // -> 1x1
Var entry(Var a, int r, int c);              // -> 1x1
Var rows_lookup(Var w, const std::vector<int>& ids);        // gather rows of w
Var copy_scatter(Var p, const std::vector<int>& ids, int vocab);  // [m×L] -> [m×V]
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);     // rowwise

}  // namespace btmpg::ad
