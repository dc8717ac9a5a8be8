#include "rdbssl/tensor.hpp"

#include "rdbssl/errors.hpp"

#include <cmath>
#include <sstream>

namespace rdbssl {

std::string shape_string(const Tensor& t) {
  std::ostringstream out;
  out << "(" << t.rows() << ", " << t.cols() << ")";
  return out.str();
}

std::vector<Index> shape_of(const Tensor& t) { return {t.rows(), t.cols()}; }

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (params_.count(name) != 0) {
    throw std::invalid_argument("duplicate parameter name '" + name + "'");
  }
  Parameter p;
  p.first_moment = Tensor::Zero(init.rows(), init.cols());
  p.second_moment = Tensor::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second.value;
}

Parameter& ParamStore::entry(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::entry(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }

bool ParamStore::has_grad(const std::string& name) const { return entry(name).grad.has_value(); }

const Tensor& ParamStore::grad(const std::string& name) const {
  const auto& p = entry(name);
  if (!p.grad) throw std::logic_error("parameter '" + name + "' has no gradient");
  return *p.grad;
}

void ParamStore::accumulate_grad(const std::string& name, const Tensor& g) {
  auto& p = entry(name);
  if (g.rows() != p.value.rows() || g.cols() != p.value.cols()) {
    throw ShapeError("gradient for '" + name + "' has shape " + shape_string(g) +
                     ", parameter has " + shape_string(p.value));
  }
  if (p.grad) {
    *p.grad += g;
  } else {
    p.grad = g;
  }
}

void ParamStore::ensure_grad_slots() {
  for (auto& [name, p] : params_) {
    if (!p.grad) p.grad = Tensor::Zero(p.value.rows(), p.value.cols());
  }
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) {
    if (p.grad) p.grad->setZero();
  }
}

Index ParamStore::scalar_count() const {
  Index n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

struct AdamAccess {
  static void step(ParamStore& store, const AdamOptions& o) {
    for (const auto& [name, p] : store.params_) {
      if (!p.grad) throw std::logic_error("optimizer_step: missing gradient for '" + name + "'");
    }
    const auto t = static_cast<double>(store.step_ + 1);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    for (auto& [name, p] : store.params_) {
      const Tensor& g = *p.grad;
      p.first_moment = o.beta1 * p.first_moment + (1.0 - o.beta1) * g;
      p.second_moment = o.beta2 * p.second_moment + (1.0 - o.beta2) * g.cwiseProduct(g);
      p.value.array() -= o.learning_rate * (p.first_moment.array() / c1) /
                         ((p.second_moment.array() / c2).sqrt() + o.epsilon);
      p.grad->setZero();
    }
    ++store.step_;
  }
};

void optimizer_step(ParamStore& params, const AdamOptions& options) {
  AdamAccess::step(params, options);
}

}  // namespace rdbssl
