#include "btmpg/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace btmpg::ad {

Param& ParamSet::add(const std::string& name, int rows, int cols) {
  items_.push_back(std::make_unique<Param>(name, rows, cols));
  return *items_.back();
}

Param* ParamSet::find(const std::string& name) {
  for (auto& p : items_)
    if (p->name == name) return p.get();
  return nullptr;
}

std::size_t ParamSet::entry_count() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : items_) p->zero_grad();
}

const Mat& Var::val() const { return tape->value(idx); }

Var Tape::input(Mat v) {
  Node n;
  n.value = std::move(v);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(Param& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = p.value;
  n.needs_grad = true;
  n.pref = &p;
  nodes_.push_back(std::move(n));
  const int idx = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, idx);
  return {this, idx};
}

Var Tape::emit(Mat value, bool needs_grad, BackFn back) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var loss) {
  if (!loss.ok() || loss.tape != this) throw std::invalid_argument("backward: bad loss var");
  if (loss.val().size() != 1) throw std::invalid_argument("backward: loss must be scalar");
  nodes_[loss.idx].grad = Mat::Ones(1, 1);
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.needs_grad) continue;
    if (n.back) n.back(*this);
    if (n.pref) n.pref->grad += n.grad;
  }
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument("ops require vars from one tape");
  return *a.tape;
}

int next_idx(const Tape& t) { return static_cast<int>(t.size()); }

}  // namespace

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.val().rows() != b.val().rows() || a.val().cols() != b.val().cols())
    throw std::invalid_argument("add: shape mismatch");
  const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
  const int out = next_idx(t);
  return t.emit(a.val() + b.val(), ng, [a, b, out](Tape& t) {
    t.accum(a.idx, t.grad(out));
    t.accum(b.idx, t.grad(out));
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.val().rows() != b.val().rows() || a.val().cols() != b.val().cols())
    throw std::invalid_argument("sub: shape mismatch");
  const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
  const int out = next_idx(t);
  return t.emit(a.val() - b.val(), ng, [a, b, out](Tape& t) {
    t.accum(a.idx, t.grad(out));
    t.accum(b.idx, -t.grad(out));
  });
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("add_n: empty");
  Tape& t = *xs.front().tape;
  Mat v = xs.front().val();
  bool ng = t.needs_grad(xs.front().idx);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    same_tape(xs.front(), xs[i]);
    v += xs[i].val();
    ng = ng || t.needs_grad(xs[i].idx);
  }
  const int out = next_idx(t);
  return t.emit(std::move(v), ng, [xs, out](Tape& t) {
    for (const Var& x : xs) t.accum(x.idx, t.grad(out));
  });
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.val().cols() != b.val().rows()) throw std::invalid_argument("matmul: shape mismatch");
  const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
  const int out = next_idx(t);
  return t.emit(a.val() * b.val(), ng, [a, b, out](Tape& t) {
    const Mat& g = t.grad(out);
    t.accum(a.idx, g * t.value(b.idx).transpose());
    t.accum(b.idx, t.value(a.idx).transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.val().cols() != b.val().cols()) throw std::invalid_argument("matmul_nt: shape mismatch");
  const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
  const int out = next_idx(t);
  return t.emit(a.val() * b.val().transpose(), ng, [a, b, out](Tape& t) {
    const Mat& g = t.grad(out);
    t.accum(a.idx, g * t.value(b.idx));
    t.accum(b.idx, g.transpose() * t.value(a.idx));
  });
}

Var cmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.val().rows() != b.val().rows() || a.val().cols() != b.val().cols())
    throw std::invalid_argument("cmul: shape mismatch");
  const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
  const int out = next_idx(t);
  return t.emit(a.val().cwiseProduct(b.val()), ng, [a, b, out](Tape& t) {
    const Mat& g = t.grad(out);
    t.accum(a.idx, g.cwiseProduct(t.value(b.idx)));
    t.accum(b.idx, g.cwiseProduct(t.value(a.idx)));
  });
}

Var cmul_colvec(Var a, Var s) {
  Tape& t = same_tape(a, s);
  if (s.val().cols() != 1 || s.val().rows() != a.val().rows())
    throw std::invalid_argument("cmul_colvec: scaler must be [m×1]");
  const bool ng = t.needs_grad(a.idx) || t.needs_grad(s.idx);
  const int out = next_idx(t);
  Mat v = (a.val().array().colwise() * s.val().col(0).array()).matrix();
  return t.emit(std::move(v), ng, [a, s, out](Tape& t) {
    const Mat& g = t.grad(out);
    t.accum(a.idx, (g.array().colwise() * t.value(s.idx).col(0).array()).matrix());
    t.accum(s.idx, g.cwiseProduct(t.value(a.idx)).rowwise().sum());
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const int out = next_idx(t);
  return t.emit(a.val() * s, t.needs_grad(a.idx), [a, s, out](Tape& t) {
    t.accum(a.idx, t.grad(out) * s);
  });
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  const int out = next_idx(t);
  Mat v = (a.val().array() + c).matrix();
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, out](Tape& t) {
    t.accum(a.idx, t.grad(out));
  });
}

Var add_rowvec(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (b.val().rows() != 1 || b.val().cols() != a.val().cols())
    throw std::invalid_argument("add_rowvec: bias must be [1×n]");
  const bool ng = t.needs_grad(a.idx) || t.needs_grad(b.idx);
  const int out = next_idx(t);
  Mat v = a.val().rowwise() + b.val().row(0);
  return t.emit(std::move(v), ng, [a, b, out](Tape& t) {
    const Mat& g = t.grad(out);
    t.accum(a.idx, g);
    t.accum(b.idx, g.colwise().sum());
  });
}

Var affine(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Mat v = (1.0 / (1.0 + (-a.val().array()).exp())).matrix();
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, out](Tape& t) {
    const Mat& y = t.value(out);
    t.accum(a.idx, t.grad(out).cwiseProduct((y.array() * (1.0 - y.array())).matrix()));
  });
}

Var tanh_(Var a) {
  Tape& t = *a.tape;
  Mat v = a.val().array().tanh().matrix();
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, out](Tape& t) {
    const Mat& y = t.value(out);
    t.accum(a.idx, t.grad(out).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Mat v = a.val().cwiseMax(0.0);
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, out](Tape& t) {
    const Mat mask = (t.value(a.idx).array() > 0.0).cast<double>().matrix();
    t.accum(a.idx, t.grad(out).cwiseProduct(mask));
  });
}

Var log_(Var a) {
  Tape& t = *a.tape;
  Mat v = a.val().array().log().matrix();
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, out](Tape& t) {
    t.accum(a.idx, t.grad(out).cwiseQuotient(t.value(a.idx)));
  });
}

Var exp_(Var a) {
  Tape& t = *a.tape;
  Mat v = a.val().array().exp().matrix();
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, out](Tape& t) {
    t.accum(a.idx, t.grad(out).cwiseProduct(t.value(out)));
  });
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = *a.tape;
  Mat v = a.val().cwiseMax(lo).cwiseMin(hi);
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, lo, hi, out](Tape& t) {
    const auto x = t.value(a.idx).array();
    const Mat mask = ((x > lo).cast<double>() * (x < hi).cast<double>()).matrix();
    t.accum(a.idx, t.grad(out).cwiseProduct(mask));
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Mat v = a.val();
  for (int r = 0; r < v.rows(); ++r) {
    const double m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, out](Tape& t) {
    const Mat& y = t.value(out);
    const Mat& g = t.grad(out);
    Mat da(y.rows(), y.cols());
    for (int r = 0; r < y.rows(); ++r) {
      const double dot = g.row(r).dot(y.row(r));
      da.row(r) = (y.row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    t.accum(a.idx, da);
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_cols: empty");
  Tape& t = *xs.front().tape;
  const int rows = xs.front().rows();
  int cols = 0;
  bool ng = false;
  for (const Var& x : xs) {
    same_tape(xs.front(), x);
    if (x.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += x.cols();
    ng = ng || t.needs_grad(x.idx);
  }
  Mat v(rows, cols);
  int at = 0;
  for (const Var& x : xs) {
    v.middleCols(at, x.cols()) = x.val();
    at += x.cols();
  }
  const int out = next_idx(t);
  return t.emit(std::move(v), ng, [xs, out](Tape& t) {
    const Mat& g = t.grad(out);
    int at = 0;
    for (const Var& x : xs) {
      const int n = static_cast<int>(t.value(x.idx).cols());
      t.accum(x.idx, g.middleCols(at, n));
      at += n;
    }
  });
}

Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_rows: empty");
  Tape& t = *xs.front().tape;
  const int cols = xs.front().cols();
  int rows = 0;
  bool ng = false;
  for (const Var& x : xs) {
    same_tape(xs.front(), x);
    if (x.cols() != cols) throw std::invalid_argument("concat_rows: col mismatch");
    rows += x.rows();
    ng = ng || t.needs_grad(x.idx);
  }
  Mat v(rows, cols);
  int at = 0;
  for (const Var& x : xs) {
    v.middleRows(at, x.rows()) = x.val();
    at += x.rows();
  }
  const int out = next_idx(t);
  return t.emit(std::move(v), ng, [xs, out](Tape& t) {
    const Mat& g = t.grad(out);
    int at = 0;
    for (const Var& x : xs) {
      const int n = static_cast<int>(t.value(x.idx).rows());
      t.accum(x.idx, g.middleRows(at, n));
      at += n;
    }
  });
}

Var slice_cols(Var a, int start, int n) {
  Tape& t = *a.tape;
  if (start < 0 || n < 0 || start + n > a.cols()) throw std::invalid_argument("slice_cols: range");
  const int out = next_idx(t);
  return t.emit(a.val().middleCols(start, n), t.needs_grad(a.idx), [a, start, n, out](Tape& t) {
    if (!t.needs_grad(a.idx)) return;
    Mat g = Mat::Zero(t.value(a.idx).rows(), t.value(a.idx).cols());
    g.middleCols(start, n) = t.grad(out);
    t.accum(a.idx, g);
  });
}

Var slice_rows(Var a, int start, int n) {
  Tape& t = *a.tape;
  if (start < 0 || n < 0 || start + n > a.rows()) throw std::invalid_argument("slice_rows: range");
  const int out = next_idx(t);
  return t.emit(a.val().middleRows(start, n), t.needs_grad(a.idx), [a, start, n, out](Tape& t) {
    if (!t.needs_grad(a.idx)) return;
    Mat g = Mat::Zero(t.value(a.idx).rows(), t.value(a.idx).cols());
    g.middleRows(start, n) = t.grad(out);
    t.accum(a.idx, g);
  });
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  Mat v(1, 1);
  v(0, 0) = a.val().sum();
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, out](Tape& t) {
    const double g = t.grad(out)(0, 0);
    t.accum(a.idx, Mat::Constant(t.value(a.idx).rows(), t.value(a.idx).cols(), g));
  });
}

Var entry(Var a, int r, int c) {
  Tape& t = *a.tape;
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) throw std::invalid_argument("entry: range");
  Mat v(1, 1);
  v(0, 0) = a.val()(r, c);
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(a.idx), [a, r, c, out](Tape& t) {
    if (!t.needs_grad(a.idx)) return;
    Mat g = Mat::Zero(t.value(a.idx).rows(), t.value(a.idx).cols());
    g(r, c) = t.grad(out)(0, 0);
    t.accum(a.idx, g);
  });
}

Var rows_lookup(Var w, const std::vector<int>& ids) {
  Tape& t = *w.tape;
  Mat v(static_cast<int>(ids.size()), w.cols());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] < 0 || ids[k] >= w.rows()) throw std::invalid_argument("rows_lookup: id range");
    v.row(static_cast<int>(k)) = w.val().row(ids[k]);
  }
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(w.idx), [w, ids, out](Tape& t) {
    if (!t.needs_grad(w.idx)) return;
    Mat g = Mat::Zero(t.value(w.idx).rows(), t.value(w.idx).cols());
    const Mat& go = t.grad(out);
    for (std::size_t k = 0; k < ids.size(); ++k) g.row(ids[k]) += go.row(static_cast<int>(k));
    t.accum(w.idx, g);
  });
}

Var copy_scatter(Var p, const std::vector<int>& ids, int vocab) {
  Tape& t = *p.tape;
  if (p.cols() != static_cast<int>(ids.size()))
    throw std::invalid_argument("copy_scatter: ids length must match cols");
  Mat v = Mat::Zero(p.rows(), vocab);
  for (int r = 0; r < p.rows(); ++r)
    for (std::size_t l = 0; l < ids.size(); ++l) {
      if (ids[l] < 0 || ids[l] >= vocab) throw std::invalid_argument("copy_scatter: id range");
      v(r, ids[l]) += p.val()(r, static_cast<int>(l));
    }
  const int out = next_idx(t);
  return t.emit(std::move(v), t.needs_grad(p.idx), [p, ids, out](Tape& t) {
    if (!t.needs_grad(p.idx)) return;
    const Mat& go = t.grad(out);
    Mat g(t.value(p.idx).rows(), t.value(p.idx).cols());
    for (int r = 0; r < g.rows(); ++r)
      for (std::size_t l = 0; l < ids.size(); ++l)
        g(r, static_cast<int>(l)) = go(r, ids[l]);
    t.accum(p.idx, g);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  Tape& t = *x.tape;
  same_tape(x, gain);
  same_tape(x, bias);
  const int n = x.cols();
  if (gain.val().rows() != 1 || gain.val().cols() != n || bias.val().rows() != 1 ||
      bias.val().cols() != n)
    throw std::invalid_argument("layer_norm: gain/bias must be [1×n]");
  const int m = x.rows();
  Mat xhat(m, n), inv_std(m, 1);
  for (int r = 0; r < m; ++r) {
    const double mu = x.val().row(r).mean();
    const double var = (x.val().row(r).array() - mu).square().mean();
    inv_std(r, 0) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (x.val().row(r).array() - mu) * inv_std(r, 0);
  }
  Mat v(m, n);
  for (int r = 0; r < m; ++r)
    v.row(r) = xhat.row(r).cwiseProduct(gain.val().row(0)) + bias.val().row(0);
  const bool ng =
      t.needs_grad(x.idx) || t.needs_grad(gain.idx) || t.needs_grad(bias.idx);
  const int out = next_idx(t);
  return t.emit(std::move(v), ng, [x, gain, bias, xhat, inv_std, out](Tape& t) {
    const Mat& g = t.grad(out);
    const int m = static_cast<int>(g.rows());
    const int n = static_cast<int>(g.cols());
    t.accum(bias.idx, g.colwise().sum());
    t.accum(gain.idx, g.cwiseProduct(xhat).colwise().sum());
    if (!t.needs_grad(x.idx)) return;
    Mat dx(m, n);
    for (int r = 0; r < m; ++r) {
      Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(t.value(gain.idx).row(0));
      const double s1 = dxhat.sum();
      const double s2 = dxhat.dot(xhat.row(r));
      dx.row(r) =
          (inv_std(r, 0) * (dxhat.array() - s1 / n - xhat.row(r).array() * s2 / n))
              .matrix();
    }
    t.accum(x.idx, dx);
  });
}

}  // namespace btmpg::ad
