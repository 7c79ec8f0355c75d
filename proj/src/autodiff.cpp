#include "tigflow/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tigflow::ad {

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, std::initializer_list<Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("ad: mixing nodes from different tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& in : inputs) {
    if (in.tape() != this) throw std::invalid_argument("ad: mixing nodes from different tapes");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = delta;
    n.has_grad = true;
  } else {
    n.grad += delta;
  }
}

void Tape::backward(const Var& scalar) {
  if (scalar.tape() != this) throw std::invalid_argument("ad: backward on a foreign node");
  if (scalar.rows() != 1 || scalar.cols() != 1) throw std::invalid_argument("ad: backward needs a 1x1 output");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(scalar.id(), Matrix::Ones(1, 1));
  for (int id = scalar.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.has_grad && n.backward) n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void require(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw std::invalid_argument(std::string("ad::") + op + ": " + detail);
}

std::string shape(const Var& v) { return std::to_string(v.rows()) + "x" + std::to_string(v.cols()); }

void same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op, shape(a) + " vs " + shape(b));
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  require(a.cols() == b.rows(), "matmul", shape(a) + " * " + shape(b));
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    if (t.requires_grad(ia)) t.accumulate_with(ia, [&](Matrix& ga) { ga.noalias() += g * t.value(ib).transpose(); });
    if (t.requires_grad(ib)) t.accumulate_with(ib, [&](Matrix& gb) { gb.noalias() += t.value(ia).transpose() * g; });
  });
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate(ia, g);
    t.accumulate_with(ib, [&](Matrix& gb) { gb -= g; });
  });
}

Var mul(const Var& a, const Var& b) {
  same_shape(a, b, "mul");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseProduct(b.value()), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    t.accumulate_with(ia, [&](Matrix& ga) { ga += g.cwiseProduct(t.value(ib)); });
    t.accumulate_with(ib, [&](Matrix& gb) { gb += g.cwiseProduct(t.value(ia)); });
  });
}

Var div(const Var& a, const Var& b) {
  same_shape(a, b, "div");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  return t.record(a.value().cwiseQuotient(b.value()), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    const Matrix& av = t.value(ia);
    const Matrix& bv = t.value(ib);
    t.accumulate_with(ia, [&](Matrix& ga) { ga += g.cwiseQuotient(bv); });
    t.accumulate_with(ib, [&](Matrix& gb) {
      gb.array() -= g.array() * av.array() / (bv.array() * bv.array());
    });
  });
}

Var add_row(const Var& x, const Var& row) {
  require(row.rows() == 1 && row.cols() == x.cols(), "add_row", shape(x) + " + " + shape(row));
  Tape& t = *x.tape();
  const int ix = x.id(), ir = row.id();
  Matrix out = x.value();
  out.rowwise() += row.value().row(0);
  return t.record(std::move(out), {x, row}, [ix, ir](Tape& t, const Matrix& g) {
    t.accumulate(ix, g);
    t.accumulate_with(ir, [&](Matrix& gr) { gr += g.colwise().sum(); });
  });
}

Var mul_col(const Var& x, const Var& col) {
  require(col.cols() == 1 && col.rows() == x.rows(), "mul_col", shape(x) + " * " + shape(col));
  Tape& t = *x.tape();
  const int ix = x.id(), ic = col.id();
  Matrix out = x.value().array().colwise() * col.value().col(0).array();
  return t.record(std::move(out), {x, col}, [ix, ic](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) { gx.array() += g.array().colwise() * t.value(ic).col(0).array(); });
    t.accumulate_with(ic, [&](Matrix& gc) { gc.col(0) += g.cwiseProduct(t.value(ix)).rowwise().sum(); });
  });
}

Var mul_scalar(const Var& x, const Var& s) {
  require(s.rows() == 1 && s.cols() == 1, "mul_scalar", "scalar operand is " + shape(s));
  Tape& t = *x.tape();
  const int ix = x.id(), is = s.id();
  return t.record(x.value() * s.scalar(), {x, s}, [ix, is](Tape& t, const Matrix& g) {
    const double sv = t.value(is)(0, 0);
    t.accumulate_with(ix, [&](Matrix& gx) { gx += g * sv; });
    t.accumulate_with(is, [&](Matrix& gs) { gs(0, 0) += g.cwiseProduct(t.value(ix)).sum(); });
  });
}

Var scale(const Var& x, double c) {
  Tape& t = *x.tape();
  const int ix = x.id();
  return t.record(x.value() * c, {x}, [ix, c](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) { gx += g * c; });
  });
}

Var shift(const Var& x, double c) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out = x.value().array() + c;
  return t.record(std::move(out), {x}, [ix](Tape& t, const Matrix& g) { t.accumulate(ix, g); });
}

Var tanh(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out = x.value().array().tanh();
  const int iout = static_cast<int>(t.size());
  return t.record(std::move(out), {x}, [ix, iout](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(iout);
    t.accumulate_with(ix, [&](Matrix& gx) { gx.array() += g.array() * (1.0 - y.array().square()); });
  });
}

Var sigmoid(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out = x.value().unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  const int iout = static_cast<int>(t.size());
  return t.record(std::move(out), {x}, [ix, iout](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(iout);
    t.accumulate_with(ix, [&](Matrix& gx) { gx.array() += g.array() * y.array() * (1.0 - y.array()); });
  });
}

Var exp(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out = x.value().array().exp();
  const int iout = static_cast<int>(t.size());
  return t.record(std::move(out), {x}, [ix, iout](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) { gx += g.cwiseProduct(t.value(iout)); });
  });
}

Var square(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  return t.record(x.value().cwiseAbs2(), {x}, [ix](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) { gx += 2.0 * g.cwiseProduct(t.value(ix)); });
  });
}

Var row_sum(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out = x.value().rowwise().sum();
  return t.record(std::move(out), {x}, [ix](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) { gx.colwise() += g.col(0); });
  });
}

Var row_mean(const Var& x) { return scale(row_sum(x), 1.0 / static_cast<double>(x.cols())); }

Var sum(const Var& x) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out(1, 1);
  out(0, 0) = x.value().sum();
  return t.record(std::move(out), {x}, [ix](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) { gx.array() += g(0, 0); });
  });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols", "no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    require(p.rows() == rows, "concat_cols", "row mismatch " + shape(p));
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::pair<int, Eigen::Index>> spans;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  Tape& t = *parts.front().tape();
  return t.record(std::move(out), parts, [spans](Tape& t, const Matrix& g) {
    for (const auto& [id, offset] : spans) {
      t.accumulate_with(id, [&, offset = offset](Matrix& gp) { gp += g.middleCols(offset, gp.cols()); });
    }
  });
}

Var slice_cols(const Var& x, Eigen::Index begin, Eigen::Index count) {
  require(begin >= 0 && count >= 0 && begin + count <= x.cols(), "slice_cols", "range out of bounds");
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out = x.value().middleCols(begin, count);
  return t.record(std::move(out), {x}, [ix, begin, count](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) { gx.middleCols(begin, count) += g; });
  });
}

Var gather_rows(const Var& x, std::vector<int> index) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out(static_cast<Eigen::Index>(index.size()), x.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    require(index[i] >= 0 && index[i] < x.rows(), "gather_rows", "index out of range");
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(index[i]);
  }
  return t.record(std::move(out), {x}, [ix, index = std::move(index)](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) {
      for (std::size_t i = 0; i < index.size(); ++i) gx.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
    });
  });
}

Var segment_sum(const Var& x, std::vector<int> segment, int n_out) {
  require(static_cast<Eigen::Index>(segment.size()) == x.rows(), "segment_sum", "one segment id per row required");
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out = Matrix::Zero(n_out, x.cols());
  for (std::size_t i = 0; i < segment.size(); ++i) {
    require(segment[i] >= 0 && segment[i] < n_out, "segment_sum", "segment id out of range");
    out.row(segment[i]) += x.value().row(static_cast<Eigen::Index>(i));
  }
  return t.record(std::move(out), {x}, [ix, segment = std::move(segment)](Tape& t, const Matrix& g) {
    t.accumulate_with(ix, [&](Matrix& gx) {
      for (std::size_t i = 0; i < segment.size(); ++i) gx.row(static_cast<Eigen::Index>(i)) += g.row(segment[i]);
    });
  });
}

Var layer_norm(const Var& x, const Var& gain, const Var& shift_row, double eps) {
  const Eigen::Index m = x.cols();
  require(gain.rows() == 1 && gain.cols() == m, "layer_norm", "gain must be 1x" + std::to_string(m));
  require(shift_row.rows() == 1 && shift_row.cols() == m, "layer_norm", "shift must be 1x" + std::to_string(m));
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix xhat(xv.rows(), m);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix out = xhat.array().rowwise() * gain.value().row(0).array();
  out.rowwise() += shift_row.value().row(0);
  const int ix = x.id(), ig = gain.id(), ib = shift_row.id();
  return t.record(std::move(out), {x, gain, shift_row},
                  [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Matrix& g) {
                    t.accumulate_with(ig, [&](Matrix& gg) { gg += g.cwiseProduct(xhat).colwise().sum(); });
                    t.accumulate_with(ib, [&](Matrix& gb) { gb += g.colwise().sum(); });
                    t.accumulate_with(ix, [&](Matrix& gx) {
                      const auto& gain_row = t.value(ig).row(0).array();
                      for (Eigen::Index r = 0; r < g.rows(); ++r) {
                        const Eigen::ArrayXd dxhat = (g.row(r).array() * gain_row).transpose();
                        const Eigen::ArrayXd xh = xhat.row(r).array().transpose();
                        const double m1 = dxhat.mean();
                        const double m2 = (dxhat * xh).mean();
                        gx.row(r).array() += (inv_std(r) * (dxhat - m1 - xh * m2)).transpose();
                      }
                    });
                  });
}

Var attention(const Var& q, const Var& k, const Var& v, std::vector<std::pair<int, int>> ranges) {
  same_shape(q, k, "attention");
  require(v.rows() == q.rows(), "attention", "value rows must match queries");
  const double sc = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tape& t = *q.tape();
  const Matrix& qv = q.value();
  const Matrix& kv = k.value();
  const Matrix& vv = v.value();
  Matrix out = Matrix::Zero(q.rows(), v.cols());
  std::vector<Matrix> probs;
  probs.reserve(ranges.size());
  for (const auto& [begin, len] : ranges) {
    require(begin >= 0 && len >= 1 && begin + len <= q.rows(), "attention", "range out of bounds");
    Matrix s = qv.middleRows(begin, len) * kv.middleRows(begin, len).transpose() * sc;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const double mx = s.row(r).maxCoeff();
      s.row(r) = (s.row(r).array() - mx).exp();
      s.row(r) /= s.row(r).sum();
    }
    out.middleRows(begin, len).noalias() = s * vv.middleRows(begin, len);
    probs.push_back(std::move(s));
  }
  const int iq = q.id(), ik = k.id(), iv = v.id();
  return t.record(std::move(out), {q, k, v},
                  [iq, ik, iv, sc, ranges = std::move(ranges), probs = std::move(probs)](Tape& t, const Matrix& g) {
                    const Matrix& qv = t.value(iq);
                    const Matrix& kv = t.value(ik);
                    const Matrix& vv = t.value(iv);
                    for (std::size_t s = 0; s < ranges.size(); ++s) {
                      const auto [begin, len] = ranges[s];
                      const Matrix& p = probs[s];
                      const auto go = g.middleRows(begin, len);
                      t.accumulate_with(iv, [&](Matrix& gv) { gv.middleRows(begin, len).noalias() += p.transpose() * go; });
                      if (!t.requires_grad(iq) && !t.requires_grad(ik)) continue;
                      const Matrix dp = go * vv.middleRows(begin, len).transpose();
                      Matrix ds = p.cwiseProduct(dp);
                      const Eigen::VectorXd rs = ds.rowwise().sum();
                      ds.array() -= p.array().colwise() * rs.array();
                      t.accumulate_with(iq, [&](Matrix& gq) { gq.middleRows(begin, len).noalias() += sc * ds * kv.middleRows(begin, len); });
                      t.accumulate_with(ik, [&](Matrix& gk) { gk.middleRows(begin, len).noalias() += sc * ds.transpose() * qv.middleRows(begin, len); });
                    }
                  });
}

Var clip(const Var& x, double lo, double hi) {
  Tape& t = *x.tape();
  const int ix = x.id();
  Matrix out = x.value().cwiseMax(lo).cwiseMin(hi);
  return t.record(std::move(out), {x}, [ix, lo, hi](Tape& t, const Matrix& g) {
    const Matrix& xv = t.value(ix);
    t.accumulate_with(ix, [&](Matrix& gx) {
      gx.array() += (xv.array() >= lo && xv.array() <= hi).select(g.array(), 0.0);
    });
  });
}

Var minimum(const Var& a, const Var& b) {
  same_shape(a, b, "minimum");
  Tape& t = *a.tape();
  const int ia = a.id(), ib = b.id();
  Matrix out = a.value().cwiseMin(b.value());
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& t, const Matrix& g) {
    const auto take_a = (t.value(ia).array() <= t.value(ib).array());
    t.accumulate_with(ia, [&](Matrix& ga) { ga.array() += take_a.select(g.array(), 0.0); });
    t.accumulate_with(ib, [&](Matrix& gb) { gb.array() += take_a.select(0.0, g.array()); });
  });
}

}  // namespace tigflow::ad
