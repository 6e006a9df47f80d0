#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace amc::vit {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Architecture shape. Token count is H*W/P^2 patches plus the class token.
struct VitConfig {
  int image_height = 64;
  int image_width = 64;
  int channels = 3;
  int patch = 8;
  int embed_dim = 64;
  int layers = 4;
  int heads = 4;
  int mlp_dim = 128;
  int n_classes = 10;
  double dropout = 0.0;

  int Patches() const { return (image_height / patch) * (image_width / patch); }
  int PatchDim() const { return patch * patch * channels; }
  int HeadDim() const { return embed_dim / heads; }

  /// Throws Error(kShapeError).
  void Validate() const;

  /// 224x224x3, P=16, D=768, 12 layers, 12 heads, MLP 3072, 10 classes.
  static VitConfig Paper();
  /// 64x64x3, P=8, D=64, 4 layers, 4 heads, MLP 128: trains on one core.
  static VitConfig Desk();
  /// 8x8x3, P=4, D=8, 1 layer, 2 heads, MLP 16: for gradient checks.
  static VitConfig Tiny();

  friend bool operator==(const VitConfig&, const VitConfig&) = default;
};

/// Arrays inside one encoder layer, in storage order.
enum class LayerArray : int {
  kLn1Gamma, kLn1Beta,
  kQueryWeight, kQueryBias, kKeyWeight, kKeyBias, kValueWeight, kValueBias,
  kOutWeight, kOutBias,
  kLn2Gamma, kLn2Beta,
  kMlpWeight1, kMlpBias1, kMlpWeight2, kMlpBias2,
  kCount,
};

/// Flat indices into ParameterSet::arrays.
struct ParamIndex {
  static constexpr std::size_t kPatchProjection = 0;
  static constexpr std::size_t kClassToken = 1;
  static constexpr std::size_t kPositionEmbedding = 2;
  static constexpr std::size_t kFirstLayer = 3;
  static constexpr std::size_t kPerLayer = static_cast<std::size_t>(LayerArray::kCount);

  static std::size_t Layer(int layer, LayerArray which) {
    return kFirstLayer + static_cast<std::size_t>(layer) * kPerLayer + static_cast<std::size_t>(which);
  }
  static std::size_t FinalLnGamma(const VitConfig& c) { return Layer(c.layers, LayerArray::kLn1Gamma); }
  static std::size_t FinalLnBeta(const VitConfig& c) { return FinalLnGamma(c) + 1; }
  static std::size_t HeadWeight(const VitConfig& c) { return FinalLnGamma(c) + 2; }
  static std::size_t HeadBias(const VitConfig& c) { return FinalLnGamma(c) + 3; }
  static std::size_t Count(const VitConfig& c) { return FinalLnGamma(c) + 4; }
};

/// Named trainable arrays. Vectors are stored as 1 x n matrices. The patch
/// projection E is (P*P*C) x D and the classifier head D x n_classes.
template <typename T>
struct ParameterSet {
  std::vector<std::string> names;
  std::vector<Matrix<T>> arrays;
  std::vector<bool> frozen;

  std::size_t size() const { return arrays.size(); }
  std::size_t ScalarCount() const;
  Matrix<T>& operator[](std::size_t i) { return arrays[i]; }
  const Matrix<T>& operator[](std::size_t i) const { return arrays[i]; }

  /// All arrays shaped for `config`, zero-filled, none frozen.
  static ParameterSet Zeros(const VitConfig& config);

  /// Throws Error(kShapeError) unless every array matches `config`.
  void CheckShapes(const VitConfig& config) const;

  template <typename U>
  ParameterSet<U> Cast() const {
    ParameterSet<U> out;
    out.names = names;
    out.frozen = frozen;
    for (const auto& a : arrays) out.arrays.push_back(a.template cast<U>());
    return out;
  }
};

/// Truncated-normal (std 0.02, cut at 2 std) projections and position
/// embeddings; zero biases, class token and head; unit LayerNorm scales.
template <typename T>
ParameterSet<T> InitParameters(const VitConfig& config, std::uint64_t seed);

/// A batch of B images, each C x H x W in [0, 1], plus labels.
template <typename T>
struct Batch {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<T> images;
  std::vector<int> labels;

  int size() const { return static_cast<int>(labels.size()); }
  std::span<const T> Image(int i) const {
    const std::size_t n = static_cast<std::size_t>(channels) * height * width;
    return std::span<const T>(images).subspan(static_cast<std::size_t>(i) * n, n);
  }
};

struct ForwardOptions {
  bool train_mode = false;         // dropout only applies in train mode
  std::uint64_t dropout_seed = 0;
};

inline constexpr double kLayerNormEps = 1e-6;

/// Row n is patch n in row-major patch order; within a patch the layout is
/// channel-major, then row, then column. Throws Error(kShapeError).
template <typename T>
Matrix<T> Patchify(std::span<const T> image, int channels, int height, int width, int patch);

/// z0 row 0 = class token + pos[0]; row n = patch_n * E + pos[n].
template <typename T>
Matrix<T> Embed(const Matrix<T>& patches, const ParameterSet<T>& params, const VitConfig& config);

template <typename T>
Matrix<T> LayerNorm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta);

/// Exact GELU, u * Phi(u).
template <typename T>
T Gelu(T u);

/// Multi-head scaled dot-product self-attention of one layer on an
/// already-normalized input. When `probabilities` is non-null it receives
/// one T x T softmax matrix per head.
template <typename T>
Matrix<T> Attention(const Matrix<T>& x, const ParameterSet<T>& params, const VitConfig& config, int layer,
                    std::vector<Matrix<T>>* probabilities = nullptr);

/// Pre-norm block: x + MHSA(LN1(x)), then + MLP_GELU(LN2(.)). Eval mode.
template <typename T>
Matrix<T> EncoderLayer(const Matrix<T>& x, const ParameterSet<T>& params, const VitConfig& config, int layer);

/// B x n_classes logits.
template <typename T>
Matrix<T> Forward(const Batch<T>& batch, const ParameterSet<T>& params, const VitConfig& config,
                  const ForwardOptions& options = {});

/// Mean over rows of -log softmax(row)[label], max-subtracted.
template <typename T>
T CrossEntropy(const Matrix<T>& logits, std::span<const int> labels);

template <typename T>
struct LossAndGradients {
  T loss{};
  Matrix<T> logits;
  ParameterSet<T> gradients;  // frozen arrays hold zeros
};

/// Loss and exact gradients of the mean cross-entropy over the batch.
template <typename T>
LossAndGradients<T> Backward(const Batch<T>& batch, const ParameterSet<T>& params, const VitConfig& config,
                             const ForwardOptions& options = {});

/// First and second moment estimates plus the step counter.
template <typename T>
struct AdamState {
  std::vector<Matrix<T>> first;
  std::vector<Matrix<T>> second;
  std::int64_t step = 0;

  static AdamState Zeros(const ParameterSet<T>& params);
};

struct AdamOptions {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Frozen arrays and their moments are left untouched.
template <typename T>
void AdamStep(ParameterSet<T>& params, const ParameterSet<T>& gradients, AdamState<T>& state,
              const AdamOptions& options);

/// Index of the largest value; ties go to the lowest index.
template <typename T>
int ArgMax(std::span<const T> values);

}  // namespace amc::vit
