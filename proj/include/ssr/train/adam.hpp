#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ssr/autodiff/checkpoint.hpp"

namespace ssr::train {

using ad::ParameterRegistry;

/// Adam moments for every parameter of a registry, in registry order.
template <typename Real>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<Real>> m, v;

  void init(const ParameterRegistry<Real>& reg) {
    m.clear();
    v.clear();
    for (const auto& e : reg.parameters()) {
      m.emplace_back(e.tensor.numel(), Real(0));
      v.emplace_back(e.tensor.numel(), Real(0));
    }
    step = 0;
  }
};

/// One bias-corrected Adam update over the parameters in `reg`. Parameters
/// without a gradient are treated as having a zero gradient. `frozen`
/// parameters (name prefix match) are skipped entirely.
template <typename Real>
void adam_step(ParameterRegistry<Real>& reg, AdamState<Real>& s, const std::vector<std::string>& frozen = {}) {
  const auto& params = reg.parameters();
  if (s.m.size() != params.size()) s.init(reg);
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, double(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, double(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& e = params[i];
    bool skip = false;
    for (const auto& f : frozen) skip = skip || e.name.compare(0, f.size(), f) == 0;
    if (skip) continue;
    ad::Tensor<Real> t = e.tensor;
    auto w = t.data();
    if (s.m[i].size() != w.size()) throw ad::ShapeError("adam: moment buffer size differs for " + e.name);
    const auto g = t.grad();
    const bool has = !g.empty();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has ? double(g[k]) : 0.0;
      if (!std::isfinite(gk)) throw ad::NumericError("adam: non-finite gradient in " + e.name);
      const double mk = s.beta1 * double(s.m[i][k]) + (1.0 - s.beta1) * gk;
      const double vk = s.beta2 * double(s.v[i][k]) + (1.0 - s.beta2) * gk * gk;
      s.m[i][k] = Real(mk);
      s.v[i][k] = Real(vk);
      w[k] = Real(double(w[k]) - s.lr * (mk / c1) / (std::sqrt(vk / c2) + s.eps));
    }
  }
}

template <typename Real>
void append_adam(ad::Checkpoint& ck, const ParameterRegistry<Real>& reg, const AdamState<Real>& s) {
  ck.header["adam.step"] = std::to_string(s.step);
  const auto& params = reg.parameters();
  for (std::size_t i = 0; i < s.m.size(); ++i) {
    const auto& shape = params[i].tensor.shape();
    ck.records.push_back({"adam.m." + params[i].name, shape, std::vector<float>(s.m[i].begin(), s.m[i].end())});
    ck.records.push_back({"adam.v." + params[i].name, shape, std::vector<float>(s.v[i].begin(), s.v[i].end())});
  }
}

/// Restores moments saved by append_adam; returns false (state reset) when
/// the checkpoint carries none.
template <typename Real>
bool load_adam(const ad::Checkpoint& ck, const ParameterRegistry<Real>& reg, AdamState<Real>& s) {
  s.init(reg);
  auto it = ck.header.find("adam.step");
  if (it == ck.header.end()) return false;
  s.step = std::stoull(it->second);
  const auto& params = reg.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto* m = ck.find("adam.m." + params[i].name);
    const auto* v = ck.find("adam.v." + params[i].name);
    if (!m || !v || m->data.size() != s.m[i].size() || v->data.size() != s.v[i].size())
      throw ad::FormatError("checkpoint: missing or mis-sized optimizer state for " + params[i].name);
    for (std::size_t k = 0; k < s.m[i].size(); ++k) {
      s.m[i][k] = Real(m->data[k]);
      s.v[i][k] = Real(v->data[k]);
    }
  }
  return true;
}

}  // namespace ssr::train
