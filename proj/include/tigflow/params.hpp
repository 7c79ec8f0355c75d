#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tigflow/autodiff.hpp"
#include "tigflow/rng.hpp"

namespace tigflow {

using ad::Matrix;

struct ParamBlock {
  std::string name;
  Matrix value;
};

// Ordered collection of named parameter matrices. Gradients and optimizer
// moments use the same type with identical names and shapes.
class ParamSet {
 public:
  std::size_t add(std::string name, Matrix value);

  [[nodiscard]] std::size_t size() const noexcept { return blocks_.size(); }
  [[nodiscard]] ParamBlock& block(std::size_t i) { return blocks_.at(i); }
  [[nodiscard]] const ParamBlock& block(std::size_t i) const { return blocks_.at(i); }
  [[nodiscard]] Matrix& operator[](std::size_t i) { return blocks_.at(i).value; }
  [[nodiscard]] const Matrix& operator[](std::size_t i) const { return blocks_.at(i).value; }
  [[nodiscard]] std::optional<std::size_t> find(const std::string& name) const;
  [[nodiscard]] std::size_t num_scalars() const noexcept;

  [[nodiscard]] ParamSet zeros_like() const;
  void set_zero();
  [[nodiscard]] bool same_layout(const ParamSet& other) const noexcept;
  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] double squared_norm() const;

  // this += alpha * other
  void axpy(double alpha, const ParamSet& other);

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<ParamBlock> blocks_;
};

// Binds parameter blocks onto a tape on first use. Frozen bindings record
// constants so no gradient flows into them.
class ParamBinding {
 public:
  ParamBinding(ad::Tape& tape, const ParamSet& params, bool trainable = true);

  ad::Var operator()(std::size_t index);
  [[nodiscard]] ad::Tape& tape() noexcept { return tape_; }
  [[nodiscard]] const ParamSet& params() const noexcept { return params_; }

  // grads[i] += d(loss)/d(block i) for every bound block.
  void accumulate_grads(ParamSet& grads) const;

 private:
  ad::Tape& tape_;
  const ParamSet& params_;
  bool trainable_;
  std::vector<ad::Var> bound_;
};

// ---- layer helpers ---------------------------------------------------------

struct Linear {
  std::size_t weight = 0;  // in x out
  std::optional<std::size_t> bias;  // 1 x out
};

struct Mlp2 {  // tanh hidden layer, linear output
  Linear hidden;
  Linear out;
};

struct LayerNormParams {
  std::size_t gain = 0;
  std::size_t shift = 0;
};

// Uniform(-a, a) with a = sqrt(6 / (in + out)); biases start at zero.
Linear add_linear(ParamSet& p, const std::string& name, int in, int out, Rng& rng, bool bias = true);
Mlp2 add_mlp2(ParamSet& p, const std::string& name, int in, int hidden, int out, Rng& rng);
LayerNormParams add_layer_norm(ParamSet& p, const std::string& name, int width);

ad::Var apply(ParamBinding& b, const Linear& l, const ad::Var& x);
ad::Var apply(ParamBinding& b, const Mlp2& m, const ad::Var& x);
ad::Var apply(ParamBinding& b, const LayerNormParams& ln, const ad::Var& x);

// ---- serialization ---------------------------------------------------------
// Flat little-endian float64 blob plus a manifest entry per block:
// {"name", "shape": [rows, cols], "offset": element offset}.

nlohmann::json write_blob(std::ostream& blob, const ParamSet& params, const std::string& prefix,
                          std::size_t& offset);
// Reads the blocks listed in `manifest` whose names start with `prefix` into
// `params`, which must already hold the expected names and shapes.
void read_blob(const std::vector<double>& blob, const nlohmann::json& manifest, const std::string& prefix,
               ParamSet& params);

}  // namespace tigflow
