#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "atbseg/corpus.hpp"
#include "atbseg/tensor.hpp"

namespace atbseg {

enum class Architecture { SegNetStyle, UNetStyle };

std::string to_string(Architecture a);
/// Accepts "segnet-style" / "unet-style" (also "segnet" / "unet").
Architecture parse_architecture(std::string_view name);

struct ModelConfig {
  Architecture variant = Architecture::SegNetStyle;
  int input_width = 64;
  int input_height = 64;
  int stages = 3;
  int base_channels = 16;
  int kernel_size = 3;
  int pool_factor = 2;
  std::uint64_t seed = 0;
  /// Reflect-pad inputs up to the next multiple of pool_factor^stages and crop
  /// predictions back, instead of rejecting indivisible dimensions.
  bool auto_pad = false;

  /// Throws ConfigError.
  void validate() const;
  int padded_width() const;
  int padded_height() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct ParameterInfo {
  std::string name;
  std::vector<int> shape;
  std::size_t size() const;
};

/// Per-pixel probability of tissue (class 1) for each of the three heads.
struct PredictionTriple {
  std::array<ProbabilityGrid, 3> p;
};

inline constexpr double kProbabilityEpsilon = 1e-7;
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Shared encoder with three independent decoder heads, each ending in a 1x1
/// convolution to two classes followed by a per-pixel softmax.
///
/// segnet-style heads upsample with 2x2 stride-2 transposed convolutions;
/// unet-style heads additionally concatenate the matching encoder feature map
/// before each decoder block. Batch normalization uses batch statistics in
/// training passes and running averages in `infer`.
template <typename T>
class Network {
 public:
  struct BatchStatistics {
    std::vector<std::vector<T>> mean, var;
  };

  explicit Network(const ModelConfig& config);

  template <typename U>
  Network<U> cast() const {
    Network<U> out(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.parameters()[i].assign(params_[i].begin(), params_[i].end());
    for (std::size_t i = 0; i < buffers_.size(); ++i) out.buffers()[i].assign(buffers_[i].begin(), buffers_[i].end());
    return out;
  }

  const ModelConfig& config() const { return config_; }
  const std::vector<ParameterInfo>& parameter_info() const { return info_; }
  std::vector<std::vector<T>>& parameters() { return params_; }
  const std::vector<std::vector<T>>& parameters() const { return params_; }
  /// Normalization running means and variances, interleaved per layer.
  std::vector<std::vector<T>>& buffers() { return buffers_; }
  const std::vector<std::vector<T>>& buffers() const { return buffers_; }
  std::size_t parameter_count() const;

  /// input [N,1,H,W] at the configured dims -> tissue probabilities [N,3,H,W].
  nn::Tensor4<T> infer(const nn::Tensor4<T>& input) const;

  /// Training-mode pass. Returns the summed per-head mean BCE against `targets`
  /// ([N,3,H,W] of 0/1). When `grads` is given it receives d(loss)/d(param),
  /// shaped like parameters(); `stats` receives the batch statistics.
  double loss_and_gradient(const nn::Tensor4<T>& input, const nn::Tensor4<T>& targets,
                           std::vector<std::vector<T>>* grads = nullptr, BatchStatistics* stats = nullptr) const;

  /// Exponential moving average with the given momentum.
  void update_running_statistics(const BatchStatistics& stats, double momentum = kBatchNormMomentum);

 private:
  struct Conv {
    int weight = -1, bias = -1;
    int in_ch = 0, out_ch = 0, kernel = 3;
  };
  struct Norm {
    int gamma = -1, beta = -1, running = -1;  // running -> buffers_[running], [running + 1]
    int channels = 0;
  };
  struct Unit {
    Conv conv;
    Norm norm;
  };
  struct DecoderStage {
    Conv up;
    Unit a, b;
  };
  struct Head {
    std::vector<DecoderStage> stages;  // index s = resolution level
    Conv out;
  };
  struct Cache;
  struct UnitCache;

  int add_param(std::string name, std::vector<int> shape);
  Conv make_conv(const std::string& name, int in_ch, int out_ch, int kernel, bool bias);
  Norm make_norm(const std::string& name, int channels);
  Unit make_unit(const std::string& name, int in_ch, int out_ch);

  nn::Tensor4<T> run(const nn::Tensor4<T>& input, bool training, Cache* cache, BatchStatistics* stats) const;
  nn::Tensor4<T> unit_forward(const nn::Tensor4<T>& in, const Unit& u, bool training, UnitCache* cache,
                              BatchStatistics* stats) const;
  nn::Tensor4<T> unit_backward(const nn::Tensor4<T>& dout, const Unit& u, const UnitCache& cache,
                               std::vector<std::vector<T>>& grads, bool need_input_grad) const;

  ModelConfig config_;
  std::vector<ParameterInfo> info_;
  std::vector<std::vector<T>> params_;
  std::vector<std::vector<T>> buffers_;
  std::vector<std::array<Unit, 2>> encoder_;
  std::array<Head, 3> heads_;
};

extern template class Network<float>;
extern template class Network<double>;

using SegModel = Network<float>;

SegModel build_model(const ModelConfig& config);

/// Packs equally-sized frames into [N,1,H,W].
template <typename T>
nn::Tensor4<T> pack_frames(std::span<const ImageGrid> frames);
/// Packs mask triples into [N,3,H,W] of 0/1.
template <typename T>
nn::Tensor4<T> pack_masks(std::span<const MaskTriple> masks);

/// Inference-mode forward pass; frames must match the configured input dims.
std::vector<PredictionTriple> forward(const SegModel& model, std::span<const ImageGrid> frames);

/// Tissue where p >= 0.5, i.e. the argmax of the two-class softmax with ties to tissue.
MaskTriple threshold_predictions(const PredictionTriple& prediction);
MaskTriple predict_masks(const SegModel& model, const ImageGrid& frame);

/// Mean over pixels and batch of -[y log p + (1-y) log(1-p)] per head, summed
/// over the three heads, with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(std::span<const PredictionTriple> predictions, std::span<const MaskTriple> targets);

using NamedGradients = std::map<std::string, std::vector<float>>;

/// Exact gradient of the training-mode loss w.r.t. every parameter.
NamedGradients gradient(const SegModel& model, std::span<const ImageGrid> batch, std::span<const MaskTriple> targets);

}  // namespace atbseg
