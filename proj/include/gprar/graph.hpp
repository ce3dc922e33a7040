#pragma once

#include "gprar/params.hpp"
#include "gprar/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

namespace gprar {

template <typename Scalar>
using BasicNamedTensors = std::map<std::string, BasicTensor<Scalar>>;

template <typename Scalar>
using BasicNamedVars = std::map<std::string, BasicVar<Scalar>>;

/// A computation description. It records its nodes on the tape from the
/// named inputs and fetches trainable weights with tape.param(name).
template <typename Scalar>
using BasicGraph = std::function<BasicNamedVars<Scalar>(BasicTape<Scalar>&, const BasicNamedTensors<Scalar>&)>;

using NamedTensors = BasicNamedTensors<double>;
using NamedVars = BasicNamedVars<double>;
using Graph = BasicGraph<double>;

template <typename Scalar>
const BasicTensor<Scalar>& require_input(const BasicNamedTensors<Scalar>& inputs, const std::string& name) {
  auto it = inputs.find(name);
  if (it == inputs.end()) throw std::invalid_argument("graph: missing input '" + name + "'");
  return it->second;
}

template <typename Scalar>
BasicNamedTensors<Scalar> forward(const BasicGraph<Scalar>& graph, const BasicNamedTensors<Scalar>& inputs,
                                  const BasicModelParams<Scalar>& params) {
  BasicTape<Scalar> tape(&params);
  BasicNamedTensors<Scalar> out;
  for (const auto& [name, var] : graph(tape, inputs)) out.emplace(name, BasicTensor<Scalar>::from_matrix(var.value()));
  return out;
}

/// Overwrites every gradient in params with d(outputs[loss_name])/d(param).
/// Returns the loss value.
template <typename Scalar>
Scalar backward(const BasicGraph<Scalar>& graph, const BasicNamedTensors<Scalar>& inputs,
                BasicModelParams<Scalar>& params, const std::string& loss_name = "loss") {
  BasicTape<Scalar> tape(&params);
  const auto outputs = graph(tape, inputs);
  auto it = outputs.find(loss_name);
  if (it == outputs.end()) throw std::invalid_argument("graph: no output named '" + loss_name + "'");
  tape.backward(it->second);
  params.zero_grad();
  tape.accumulate_into(params);
  return it->second.value()(0, 0);
}

/// max over all parameter elements of |analytic - central difference| / max(1, |central difference|).
template <typename Scalar>
Scalar finite_diff_check(const BasicGraph<Scalar>& graph, const BasicNamedTensors<Scalar>& inputs,
                         BasicModelParams<Scalar> params, Scalar epsilon, const std::string& loss_name = "loss") {
  if (!(epsilon > Scalar(0))) throw std::invalid_argument("finite_diff_check: epsilon must be positive");
  backward(graph, inputs, params, loss_name);
  auto loss_at = [&]() {
    const Scalar v = forward(graph, inputs, params).at(loss_name).item();
    if (!std::isfinite(v)) throw std::domain_error("finite_diff_check: non-finite loss");
    return v;
  };
  Scalar worst = 0;
  for (auto& [name, entry] : params.entries()) {
    for (Index i = 0; i < entry.value.size(); ++i) {
      const Scalar saved = entry.value[i];
      entry.value[i] = saved + epsilon;
      const Scalar up = loss_at();
      entry.value[i] = saved - epsilon;
      const Scalar down = loss_at();
      entry.value[i] = saved;
      const Scalar numeric = (up - down) / (Scalar(2) * epsilon);
      const Scalar err = std::abs(entry.grad[i] - numeric) / std::max(Scalar(1), std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

/// value <- value - lr * grad, then gradients are zeroed.
template <typename Scalar>
void sgd_step(BasicModelParams<Scalar>& params, Scalar lr) {
  if (lr < Scalar(0)) throw std::invalid_argument("sgd_step: negative learning rate");
  for (auto& [_, e] : params.entries()) {
    e.value.values() -= lr * e.grad.values();
    e.grad.values().setZero();
  }
}

}  // namespace gprar
