#pragma once

#include <map>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "ssr/autodiff/batchnorm.hpp"
#include "ssr/autodiff/tensor.hpp"
#include "ssr/random.hpp"

namespace ssr::ad {

/// Named trainable tensors plus non-trainable buffers (batch-norm running
/// statistics). A tensor may be registered only once, which is what lets two
/// calls of one encoder share a single set of weights.
template <typename Real>
class ParameterRegistry {
 public:
  struct Entry {
    std::string name;
    Tensor<Real> tensor;
  };
  struct Buffer {
    std::string name;
    std::shared_ptr<RunningStats<Real>> stats;
  };

  Tensor<Real> add(const std::string& name, Tensor<Real> tensor) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    if (!nodes_.insert(tensor.node()).second)
      throw std::invalid_argument("tensor already registered, cannot add as " + name);
    tensor.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back({name, tensor});
    return tensor;
  }

  std::shared_ptr<RunningStats<Real>> add_buffer(const std::string& name, std::size_t channels) {
    if (buffer_index_.count(name)) throw std::invalid_argument("duplicate buffer name: " + name);
    auto stats = std::make_shared<RunningStats<Real>>(channels);
    buffer_index_[name] = buffers_.size();
    buffers_.push_back({name, stats});
    return stats;
  }

  const std::vector<Entry>& parameters() const { return entries_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<Real>& at(const std::string& name) const { return entries_.at(index_.at(name)).tensor; }
  RunningStats<Real>& buffer(const std::string& name) { return *buffers_.at(buffer_index_.at(name)).stats; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  std::size_t scalar_count_with_prefix(const std::string& prefix) const {
    std::size_t n = 0;
    for (const auto& e : entries_)
      if (e.name.rfind(prefix, 0) == 0) n += e.tensor.numel();
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
  std::unordered_set<const Node<Real>*> nodes_;
  std::vector<Buffer> buffers_;
  std::map<std::string, std::size_t> buffer_index_;
};

/// He-uniform initialization, bound sqrt(6 / fan_in).
template <typename Real>
Tensor<Real> he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<Real> t(std::move(shape));
  const double bound = std::sqrt(6.0 / double(fan_in));
  for (auto& v : t.data()) v = Real(rng.uniform(-bound, bound));
  return t;
}

}  // namespace ssr::ad
