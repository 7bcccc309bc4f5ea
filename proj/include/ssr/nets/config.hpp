#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>
#include <string>

namespace ssr::nets {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Every size knob of the architecture. `c0` is the base channel count of
/// DispNet-B and the RecNet encoder (doubling per downsample); `corr_channels`
/// is the CorrNet 3-D conv width.
struct ScaleConfig {
  std::string name = "custom";
  std::size_t height = 64, width = 64;
  std::size_t c0 = 16;
  std::size_t feature_len = 128;  // F
  std::size_t corr_len = 64;      // G
  std::size_t volume_res = 16;    // R
  std::size_t n_points = 256;     // n_p
  double max_disparity = 16;      // D_max at input resolution
  std::size_t shift = 1;          // s
  std::size_t corr_channels = 16;

  static ScaleConfig paper() {
    ScaleConfig c;
    c.name = "paper";
    c.height = c.width = 137;
    c.c0 = 16;
    c.feature_len = 8192;
    c.corr_len = 4096;
    c.volume_res = 32;
    c.n_points = 1024;
    c.max_disparity = 48;
    c.corr_channels = 128;
    return c;
  }

  static ScaleConfig desk() {
    ScaleConfig c;
    c.name = "desk";
    return c;
  }

  /// Small enough for finite-difference checks of whole sub-networks.
  static ScaleConfig tiny() {
    ScaleConfig c;
    c.name = "tiny";
    c.height = c.width = 16;
    c.c0 = 2;
    c.feature_len = 16;
    c.corr_len = 16;
    c.volume_res = 4;
    c.n_points = 8;
    c.max_disparity = 8;
    c.corr_channels = 2;
    return c;
  }

  static ScaleConfig preset(const std::string& name) {
    if (name == "paper") return paper();
    if (name == "desk") return desk();
    if (name == "tiny") return tiny();
    throw ConfigError("unknown scale preset '" + name + "' (expected paper, desk or tiny)");
  }

  /// Feature-level disparity range of the 1/8-scale tap.
  std::size_t feature_disparity() const { return std::size_t(std::lround(max_disparity / 8.0)); }
  /// Number of shift slices in the cost volume.
  std::size_t cost_depth() const { return feature_disparity() / shift + 1; }
  /// log2(R / 2): stride-2 stages of the volume decoder.
  std::size_t volume_upsamples() const {
    std::size_t n = 0;
    for (std::size_t r = 2; r < volume_res; r *= 2) ++n;
    return n;
  }

  void validate() const {
    if (!(height > 0 && width > 0 && c0 > 0 && feature_len > 0 && corr_len > 0 && volume_res > 0 &&
          n_points > 0 && max_disparity > 0 && shift > 0 && corr_channels > 0))
      throw ConfigError("scale config: every size must be positive");
    if (height < 8 || width < 8) throw ConfigError("scale config: input must be at least 8x8");
    if (feature_disparity() < 1)
      throw ConfigError("scale config: max disparity " + std::to_string(max_disparity) +
                        " is below one pixel at 1/8 scale");
    std::size_t r = 2;
    while (r < volume_res) r *= 2;
    if (r != volume_res || volume_res < 4)
      throw ConfigError("scale config: volume resolution " + std::to_string(volume_res) +
                        " is not reachable by doubling a 2^3 seed");
    if (volume_upsamples() > 8)
      throw ConfigError("scale config: volume resolution needs more than nine decoder stages");
    // Decoder seeds: the latent reshapes to 2^3 volumes and 4x4 maps, with or
    // without the CorrNet vector.
    if ((2 * feature_len) % 16 != 0 || corr_len % 16 != 0)
      throw ConfigError("scale config: 2F and G must be multiples of 16 for the decoder seeds");
  }

  static std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  }

  std::map<std::string, std::string> to_header() const {
    return {{"scale.name", name},
            {"scale.height", std::to_string(height)},
            {"scale.width", std::to_string(width)},
            {"scale.c0", std::to_string(c0)},
            {"scale.feature_len", std::to_string(feature_len)},
            {"scale.corr_len", std::to_string(corr_len)},
            {"scale.volume_res", std::to_string(volume_res)},
            {"scale.n_points", std::to_string(n_points)},
            {"scale.max_disparity", format_real(max_disparity)},
            {"scale.shift", std::to_string(shift)},
            {"scale.corr_channels", std::to_string(corr_channels)}};
  }

  static ScaleConfig from_header(const std::map<std::string, std::string>& h) {
    auto get = [&](const std::string& k) -> const std::string& {
      auto it = h.find(k);
      if (it == h.end()) throw ConfigError("checkpoint header lacks " + k);
      return it->second;
    };
    ScaleConfig c;
    try {
      c.name = get("scale.name");
      c.height = std::stoul(get("scale.height"));
      c.width = std::stoul(get("scale.width"));
      c.c0 = std::stoul(get("scale.c0"));
      c.feature_len = std::stoul(get("scale.feature_len"));
      c.corr_len = std::stoul(get("scale.corr_len"));
      c.volume_res = std::stoul(get("scale.volume_res"));
      c.n_points = std::stoul(get("scale.n_points"));
      c.max_disparity = std::stod(get("scale.max_disparity"));
      c.shift = std::stoul(get("scale.shift"));
      c.corr_channels = std::stoul(get("scale.corr_channels"));
    } catch (const ConfigError&) {
      throw;
    } catch (const std::logic_error& e) {
      throw ConfigError(std::string("checkpoint header: bad scale value (") + e.what() + ")");
    }
    c.validate();
    return c;
  }
};

}  // namespace ssr::nets
