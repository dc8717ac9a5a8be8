#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rdbssl {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Dense row-major matrix of doubles. Vectors are 1 x n (rows) or n x 1 (columns).
using Tensor = MatrixX<double>;
using Index = Eigen::Index;

std::string shape_string(const Tensor& t);
std::vector<Index> shape_of(const Tensor& t);

struct Parameter {
  Tensor value;
  std::optional<Tensor> grad;
  Tensor first_moment;
  Tensor second_moment;
};

// Named trainable parameters with gradient slots and Adam state.
// Iteration order is lexicographic by name, which keeps serialisation and
// gradient probing deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;

  bool has_grad(const std::string& name) const;
  const Tensor& grad(const std::string& name) const;
  void accumulate_grad(const std::string& name, const Tensor& g);

  // Creates zero gradient slots for parameters that have none yet.
  void ensure_grad_slots();
  void zero_grad();

  std::int64_t step() const { return step_; }
  std::size_t size() const { return params_.size(); }
  Index scalar_count() const;
  std::vector<std::string> names() const;

  std::map<std::string, Parameter>& entries() { return params_; }
  const std::map<std::string, Parameter>& entries() const { return params_; }

 private:
  friend struct AdamAccess;
  Parameter& entry(const std::string& name);
  const Parameter& entry(const std::string& name) const;

  std::map<std::string, Parameter> params_;
  std::int64_t step_ = 0;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update over every parameter, then zeroes gradients
// and increments the step counter. Throws if a parameter has no gradient slot.
void optimizer_step(ParamStore& params, const AdamOptions& options = {});

}  // namespace rdbssl
