#include "tigflow/params.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "tigflow/error.hpp"

namespace tigflow {

std::size_t ParamSet::add(std::string name, Matrix value) {
  if (find(name)) throw std::invalid_argument("ParamSet: duplicate block '" + name + "'");
  blocks_.push_back({std::move(name), std::move(value)});
  return blocks_.size() - 1;
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    if (blocks_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ParamSet::num_scalars() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += static_cast<std::size_t>(b.value.size());
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  for (const auto& b : blocks_) z.blocks_.push_back({b.name, Matrix::Zero(b.value.rows(), b.value.cols())});
  return z;
}

void ParamSet::set_zero() {
  for (auto& b : blocks_) b.value.setZero();
}

bool ParamSet::same_layout(const ParamSet& other) const noexcept {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& a = blocks_[i];
    const auto& b = other.blocks_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
  }
  return true;
}

bool ParamSet::all_finite() const {
  for (const auto& b : blocks_) {
    if (!b.value.allFinite()) return false;
  }
  return true;
}

double ParamSet::squared_norm() const {
  double s = 0.0;
  for (const auto& b : blocks_) s += b.value.squaredNorm();
  return s;
}

void ParamSet::axpy(double alpha, const ParamSet& other) {
  if (!same_layout(other)) throw std::invalid_argument("ParamSet::axpy: layout mismatch");
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].value += alpha * other.blocks_[i].value;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (!a.same_layout(b)) return false;
  for (std::size_t i = 0; i < a.blocks_.size(); ++i) {
    if (a.blocks_[i].value != b.blocks_[i].value) return false;
  }
  return true;
}

ParamBinding::ParamBinding(ad::Tape& tape, const ParamSet& params, bool trainable)
    : tape_(tape), params_(params), trainable_(trainable), bound_(params.size()) {}

ad::Var ParamBinding::operator()(std::size_t index) {
  ad::Var& v = bound_.at(index);
  if (!v.valid()) v = trainable_ ? tape_.variable(params_[index]) : tape_.constant(params_[index]);
  return v;
}

void ParamBinding::accumulate_grads(ParamSet& grads) const {
  if (!grads.same_layout(params_)) throw std::invalid_argument("ParamBinding: gradient layout mismatch");
  if (!trainable_) return;
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    if (bound_[i].valid()) grads[i] += tape_.grad(bound_[i]);
  }
}

Linear add_linear(ParamSet& p, const std::string& name, int in, int out, Rng& rng, bool bias) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-a, a);
  Linear l;
  l.weight = p.add(name + ".weight", std::move(w));
  if (bias) l.bias = p.add(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Mlp2 add_mlp2(ParamSet& p, const std::string& name, int in, int hidden, int out, Rng& rng) {
  Mlp2 m;
  m.hidden = add_linear(p, name + ".hidden", in, hidden, rng);
  m.out = add_linear(p, name + ".out", hidden, out, rng);
  return m;
}

LayerNormParams add_layer_norm(ParamSet& p, const std::string& name, int width) {
  LayerNormParams ln;
  ln.gain = p.add(name + ".gain", Matrix::Ones(1, width));
  ln.shift = p.add(name + ".shift", Matrix::Zero(1, width));
  return ln;
}

ad::Var apply(ParamBinding& b, const Linear& l, const ad::Var& x) {
  ad::Var y = ad::matmul(x, b(l.weight));
  if (l.bias) y = ad::add_row(y, b(*l.bias));
  return y;
}

ad::Var apply(ParamBinding& b, const Mlp2& m, const ad::Var& x) {
  return apply(b, m.out, ad::tanh(apply(b, m.hidden, x)));
}

ad::Var apply(ParamBinding& b, const LayerNormParams& ln, const ad::Var& x) {
  return ad::layer_norm(x, b(ln.gain), b(ln.shift));
}

nlohmann::json write_blob(std::ostream& blob, const ParamSet& params, const std::string& prefix,
                          std::size_t& offset) {
  nlohmann::json entries = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& b = params.block(i);
    entries.push_back({{"name", prefix + b.name},
                       {"shape", {b.value.rows(), b.value.cols()}},
                       {"offset", offset}});
    blob.write(reinterpret_cast<const char*>(b.value.data()),
               static_cast<std::streamsize>(b.value.size() * sizeof(double)));
    offset += static_cast<std::size_t>(b.value.size());
  }
  return entries;
}

void read_blob(const std::vector<double>& blob, const nlohmann::json& manifest, const std::string& prefix,
               ParamSet& params) {
  std::vector<bool> seen(params.size(), false);
  for (const auto& e : manifest) {
    const std::string full = e.at("name").get<std::string>();
    if (full.rfind(prefix, 0) != 0) continue;
    const std::string name = full.substr(prefix.size());
    const auto idx = params.find(name);
    if (!idx) throw DataError("checkpoint: unexpected block '" + full + "'");
    Matrix& m = params[*idx];
    const auto rows = e.at("shape").at(0).get<Eigen::Index>();
    const auto cols = e.at("shape").at(1).get<Eigen::Index>();
    if (rows != m.rows() || cols != m.cols()) throw DataError("checkpoint: shape mismatch for '" + full + "'");
    const auto off = e.at("offset").get<std::size_t>();
    if (off + static_cast<std::size_t>(m.size()) > blob.size()) throw DataError("checkpoint: blob too short for '" + full + "'");
    std::copy(blob.begin() + static_cast<std::ptrdiff_t>(off),
              blob.begin() + static_cast<std::ptrdiff_t>(off + m.size()), m.data());
    seen[*idx] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) throw DataError("checkpoint: missing block '" + prefix + params.block(i).name + "'");
  }
}

}  // namespace tigflow
