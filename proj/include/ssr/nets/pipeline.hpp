#pragma once

#include <optional>

#include "ssr/autodiff/checkpoint.hpp"
#include "ssr/nets/dispnet.hpp"
#include "ssr/nets/recnet.hpp"

namespace ssr::nets {

/// What the reconstruction head predicts. `disparity` builds DispNet-B alone.
enum class Task { volume, point, disparity };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::volume: return "volume";
    case Task::point: return "point";
    case Task::disparity: return "disparity";
  }
  return "?";
}

inline std::optional<Task> parse_task(const std::string& s) {
  for (auto t : {Task::volume, Task::point, Task::disparity})
    if (s == to_string(t)) return t;
  return std::nullopt;
}

struct PipelineOptions {
  Task task = Task::volume;
  bool use_disp = true;  // false: encoders see RGB only and DispNet-B is not built
  bool use_corr = true;  // false: no CorrNet, decoder latent is 2F
};

/// DispNet-B -> shared RecNet encoder (both views) -> cost volume + CorrNet
/// -> concatenated latent -> volume or point decoder. Parameter names are
/// prefixed dispnet., encoder., corrnet., voxdec., ptdec.
template <typename Real>
class Pipeline {
 public:
  struct Prediction {
    std::optional<Tensor<Real>> disparity;  // [N,2,H,W] as fed to the encoders
    Tensor<Real> latent;                     // [N, 2F (+G)]
    Tensor<Real> output;                     // [N,R,R,R] volume or [N,n_p,3] points
  };

  Pipeline(const ScaleConfig& cfg, PipelineOptions opts, std::uint64_t seed)
      : config_(cfg), options_(opts), seed_(seed) {
    cfg.validate();
    Rng rng(seed);
    if (opts.task == Task::disparity || opts.use_disp)
      dispnet_ = DispNetB<Real>(registry_, "dispnet", cfg, rng);
    if (opts.task == Task::disparity) return;
    encoder_ = RecNetEncoder<Real>(registry_, "encoder", cfg, opts.use_disp, rng);
    if (opts.use_corr) corrnet_ = CorrNet<Real>(registry_, "corrnet", cfg, rng);
    const std::size_t latent = latent_size();
    if (opts.task == Task::volume)
      voxdec_ = VolumeDecoder<Real>(registry_, "voxdec", cfg, latent, rng);
    else
      ptdec_ = PointDecoder<Real>(registry_, "ptdec", cfg, latent, rng);
  }

  const ScaleConfig& config() const { return config_; }
  const PipelineOptions& options() const { return options_; }
  std::uint64_t seed() const { return seed_; }
  ParameterRegistry<Real>& registry() { return registry_; }
  const ParameterRegistry<Real>& registry() const { return registry_; }
  bool has_dispnet() const { return options_.task == Task::disparity || options_.use_disp; }
  std::size_t latent_size() const { return 2 * config_.feature_len + (options_.use_corr ? config_.corr_len : 0); }

  /// left, right [N,3,H,W] -> [N,2,H,W].
  Tensor<Real> disparity(const Tensor<Real>& left, const Tensor<Real>& right) const {
    if (!has_dispnet()) throw std::logic_error("pipeline built without DispNet-B");
    check_input(left, right);
    return dispnet_(left, right);
  }

  /// Full forward pass. `external_disparity` ([N,2,H,W]) replaces DispNet-B's
  /// output; without it DispNet-B runs, under no-grad when `freeze_dispnet`.
  Prediction forward(const Tensor<Real>& left, const Tensor<Real>& right, Mode mode,
                     const Tensor<Real>* external_disparity = nullptr, bool freeze_dispnet = true) const {
    if (options_.task == Task::disparity) throw std::logic_error("disparity pipelines have no reconstruction head");
    check_input(left, right);
    Prediction pred;
    Tensor<Real> dl, dr;
    if (options_.use_disp) {
      if (external_disparity) {
        pred.disparity = *external_disparity;
      } else if (freeze_dispnet) {
        ad::NoGradGuard guard;
        pred.disparity = dispnet_(left, right);
      } else {
        pred.disparity = dispnet_(left, right);
      }
      dl = ad::slice(*pred.disparity, 1, 0, 1);
      dr = ad::slice(*pred.disparity, 1, 1, 1);
    }
    auto el = encoder_(left, options_.use_disp ? &dl : nullptr, mode);
    auto er = encoder_(right, options_.use_disp ? &dr : nullptr, mode);
    std::vector<Tensor<Real>> parts{el.feature, er.feature};
    if (options_.use_corr)
      parts.push_back(corrnet_(build_cost_volume(el.tap3, er.tap3, config_.feature_disparity(), config_.shift), mode));
    pred.latent = ad::concat(parts, 1);
    pred.output = options_.task == Task::volume ? voxdec_(pred.latent, mode) : ptdec_(pred.latent);
    return pred;
  }

  std::map<std::string, std::string> header() const {
    auto h = config_.to_header();
    h["model.task"] = to_string(options_.task);
    h["model.use_disp"] = options_.use_disp ? "1" : "0";
    h["model.use_corr"] = options_.use_corr ? "1" : "0";
    h["model.seed"] = std::to_string(seed_);
    return h;
  }

  static Pipeline from_header(const std::map<std::string, std::string>& h) {
    auto get = [&](const std::string& k) -> const std::string& {
      auto it = h.find(k);
      if (it == h.end()) throw ConfigError("checkpoint header lacks " + k);
      return it->second;
    };
    PipelineOptions o;
    const auto task = parse_task(get("model.task"));
    if (!task) throw ConfigError("checkpoint header: unknown task " + get("model.task"));
    o.task = *task;
    o.use_disp = get("model.use_disp") == "1";
    o.use_corr = get("model.use_corr") == "1";
    return Pipeline(ScaleConfig::from_header(h), o, std::stoull(get("model.seed")));
  }

 private:
  void check_input(const Tensor<Real>& left, const Tensor<Real>& right) const {
    if (left.shape() != right.shape() || left.rank() != 4 || left.dim(1) != 3)
      throw ad::ShapeError("pipeline: expected two [N,3,H,W] images, got " + ad::to_string(left.shape()) + " and " +
                           ad::to_string(right.shape()));
    if (left.dim(2) != config_.height || left.dim(3) != config_.width)
      throw ad::ShapeError("pipeline: images are " + std::to_string(left.dim(2)) + "x" + std::to_string(left.dim(3)) +
                           ", scale '" + config_.name + "' expects " + std::to_string(config_.height) + "x" +
                           std::to_string(config_.width));
  }

  ScaleConfig config_;
  PipelineOptions options_;
  std::uint64_t seed_;
  ParameterRegistry<Real> registry_;
  DispNetB<Real> dispnet_;
  RecNetEncoder<Real> encoder_;
  CorrNet<Real> corrnet_;
  VolumeDecoder<Real> voxdec_;
  PointDecoder<Real> ptdec_;
};

}  // namespace ssr::nets
