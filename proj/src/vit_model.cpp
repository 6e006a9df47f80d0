#include "amc/vit_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <unsupported/Eigen/SpecialFunctions>

#include "amc/error.hpp"
#include "amc/rng.hpp"

namespace amc::vit {

namespace {

[[noreturn]] void ShapeFail(const std::string& what) { throw Error(ErrorCode::kShapeError, what); }

const char* LayerArrayName(LayerArray a) {
  switch (a) {
    case LayerArray::kLn1Gamma: return "ln1.gamma";
    case LayerArray::kLn1Beta: return "ln1.beta";
    case LayerArray::kQueryWeight: return "attn.query.weight";
    case LayerArray::kQueryBias: return "attn.query.bias";
    case LayerArray::kKeyWeight: return "attn.key.weight";
    case LayerArray::kKeyBias: return "attn.key.bias";
    case LayerArray::kValueWeight: return "attn.value.weight";
    case LayerArray::kValueBias: return "attn.value.bias";
    case LayerArray::kOutWeight: return "attn.out.weight";
    case LayerArray::kOutBias: return "attn.out.bias";
    case LayerArray::kLn2Gamma: return "ln2.gamma";
    case LayerArray::kLn2Beta: return "ln2.beta";
    case LayerArray::kMlpWeight1: return "mlp.fc1.weight";
    case LayerArray::kMlpBias1: return "mlp.fc1.bias";
    case LayerArray::kMlpWeight2: return "mlp.fc2.weight";
    case LayerArray::kMlpBias2: return "mlp.fc2.bias";
    case LayerArray::kCount: break;
  }
  return "?";
}

struct Shape {
  int rows;
  int cols;
};

Shape LayerArrayShape(LayerArray a, const VitConfig& c) {
  const int d = c.embed_dim;
  switch (a) {
    case LayerArray::kQueryWeight:
    case LayerArray::kKeyWeight:
    case LayerArray::kValueWeight:
    case LayerArray::kOutWeight: return {d, d};
    case LayerArray::kMlpWeight1: return {d, c.mlp_dim};
    case LayerArray::kMlpBias1: return {1, c.mlp_dim};
    case LayerArray::kMlpWeight2: return {c.mlp_dim, d};
    default: return {1, d};
  }
}

bool IsProjection(LayerArray a) {
  switch (a) {
    case LayerArray::kQueryWeight:
    case LayerArray::kKeyWeight:
    case LayerArray::kValueWeight:
    case LayerArray::kOutWeight:
    case LayerArray::kMlpWeight1:
    case LayerArray::kMlpWeight2: return true;
    default: return false;
  }
}

std::vector<std::pair<std::string, Shape>> Layout(const VitConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  out.push_back({"patch_projection", {c.PatchDim(), c.embed_dim}});
  out.push_back({"class_token", {1, c.embed_dim}});
  out.push_back({"position_embedding", {c.Patches() + 1, c.embed_dim}});
  for (int l = 0; l < c.layers; ++l) {
    for (int a = 0; a < static_cast<int>(LayerArray::kCount); ++a) {
      const auto which = static_cast<LayerArray>(a);
      out.push_back({"layer" + std::to_string(l) + "." + LayerArrayName(which), LayerArrayShape(which, c)});
    }
  }
  out.push_back({"final_ln.gamma", {1, c.embed_dim}});
  out.push_back({"final_ln.beta", {1, c.embed_dim}});
  out.push_back({"head.weight", {c.embed_dim, c.n_classes}});
  out.push_back({"head.bias", {1, c.n_classes}});
  return out;
}

// Row-wise LayerNorm that also returns what the backward pass needs.
template <typename T>
void LayerNormRows(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta, Matrix<T>& y,
                   Matrix<T>& normalized, std::vector<T>& rstd) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  y.resize(rows, cols);
  normalized.resize(rows, cols);
  rstd.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd[static_cast<std::size_t>(r)] = inv;
    normalized.row(r) = (x.row(r).array() - mean) * inv;
    y.row(r) = normalized.row(r).cwiseProduct(gamma.row(0)) + beta.row(0);
  }
}

// Gradient of the input of a LayerNorm given the output gradient; gamma and
// beta gradients are accumulated.
template <typename T>
Matrix<T> LayerNormBackward(const Matrix<T>& dy, const Matrix<T>& normalized, const std::vector<T>& rstd,
                            const Matrix<T>& gamma, Matrix<T>* dgamma, Matrix<T>* dbeta) {
  if (dgamma != nullptr) *dgamma += (dy.array() * normalized.array()).colwise().sum().matrix();
  if (dbeta != nullptr) *dbeta += dy.colwise().sum();
  Matrix<T> dx(dy.rows(), dy.cols());
  const T n = static_cast<T>(dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const auto dhat = (dy.row(r).array() * gamma.row(0).array()).eval();
    const T mean_dhat = dhat.sum() / n;
    const T mean_dhat_x = (dhat * normalized.row(r).array()).sum() / n;
    dx.row(r) = rstd[static_cast<std::size_t>(r)] *
                (dhat - mean_dhat - normalized.row(r).array() * mean_dhat_x);
  }
  return dx;
}

template <typename T>
T GeluDerivative(T u) {
  const T cdf = T(0.5) * (T(1) + std::erf(u / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * u * u) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + u * pdf;
}

// Elementwise GELU; float packets use Eigen's vectorized erf.
template <typename T>
Matrix<T> GeluMatrix(const Matrix<T>& u) {
  return (T(0.5) * u.array() * (T(1) + (u.array() / std::numbers::sqrt2_v<T>).erf())).matrix();
}

template <typename T>
void SoftmaxRowsInPlace(Matrix<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const T peak = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - peak).exp();
    s.row(r) /= s.row(r).sum();
  }
}

template <typename T>
Matrix<T> DropoutMask(Eigen::Index rows, Eigen::Index cols, double rate, std::uint64_t seed) {
  CounterRng rng(seed);
  Matrix<T> mask(rows, cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng.Uniform() < rate ? T(0) : keep_scale;
  return mask;
}

template <typename T>
struct LayerCache {
  Matrix<T> ln1_out, ln1_hat;
  std::vector<T> ln1_rstd;
  Matrix<T> q, k, v, concat;
  std::vector<Matrix<T>> probs;
  Matrix<T> attn_mask;
  Matrix<T> ln2_out, ln2_hat;
  std::vector<T> ln2_rstd;
  Matrix<T> hidden_pre, hidden;
  Matrix<T> mlp_mask;
};

template <typename T>
struct SampleCache {
  Matrix<T> patches;
  Matrix<T> embed_mask;
  std::vector<LayerCache<T>> layers;
  Matrix<T> final_hat;  // 1 x D, class token only
  std::vector<T> final_rstd;
  Matrix<T> final_out;
};

// Attention core shared by the public Attention() and the cached forward pass.
template <typename T>
Matrix<T> AttentionCore(const Matrix<T>& x, const ParameterSet<T>& p, const VitConfig& c, int layer,
                        Matrix<T>& q, Matrix<T>& k, Matrix<T>& v, std::vector<Matrix<T>>& probs,
                        Matrix<T>& concat) {
  auto at = [&](LayerArray a) -> const Matrix<T>& { return p[ParamIndex::Layer(layer, a)]; };
  q = (x * at(LayerArray::kQueryWeight)).rowwise() + at(LayerArray::kQueryBias).row(0);
  k = (x * at(LayerArray::kKeyWeight)).rowwise() + at(LayerArray::kKeyBias).row(0);
  v = (x * at(LayerArray::kValueWeight)).rowwise() + at(LayerArray::kValueBias).row(0);

  const int dh = c.HeadDim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Eigen::Index tokens = x.rows();
  concat.resize(tokens, c.embed_dim);
  probs.resize(static_cast<std::size_t>(c.heads));
  for (int h = 0; h < c.heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    const auto vh = v.middleCols(h * dh, dh);
    Matrix<T>& a = probs[static_cast<std::size_t>(h)];
    a = (qh * kh.transpose()) * scale;
    SoftmaxRowsInPlace(a);
    concat.middleCols(h * dh, dh) = a * vh;
  }
  return (concat * at(LayerArray::kOutWeight)).rowwise() + at(LayerArray::kOutBias).row(0);
}

std::uint64_t SiteSeed(std::uint64_t seed, int sample, int site) {
  return HashCombine(HashCombine(seed, static_cast<std::uint64_t>(sample)), static_cast<std::uint64_t>(site));
}

// Forward pass for one image. Returns the 1 x n_classes logits.
template <typename T>
Matrix<T> SampleForward(std::span<const T> image, const ParameterSet<T>& p, const VitConfig& c,
                        const ForwardOptions& opt, int sample, SampleCache<T>* cache) {
  const bool dropout = opt.train_mode && c.dropout > 0.0;
  Matrix<T> patches = Patchify(image, c.channels, c.image_height, c.image_width, c.patch);
  Matrix<T> x = Embed(patches, p, c);
  if (cache != nullptr) cache->patches = std::move(patches);
  if (dropout) {
    Matrix<T> mask = DropoutMask<T>(x.rows(), x.cols(), c.dropout, SiteSeed(opt.dropout_seed, sample, 0));
    x.array() *= mask.array();
    if (cache != nullptr) cache->embed_mask = std::move(mask);
  }
  if (cache != nullptr) cache->layers.resize(static_cast<std::size_t>(c.layers));

  LayerCache<T> scratch;
  for (int l = 0; l < c.layers; ++l) {
    LayerCache<T>& lc = cache != nullptr ? cache->layers[static_cast<std::size_t>(l)] : scratch;
    auto at = [&](LayerArray a) -> const Matrix<T>& { return p[ParamIndex::Layer(l, a)]; };

    LayerNormRows(x, at(LayerArray::kLn1Gamma), at(LayerArray::kLn1Beta), lc.ln1_out, lc.ln1_hat, lc.ln1_rstd);
    Matrix<T> attn = AttentionCore(lc.ln1_out, p, c, l, lc.q, lc.k, lc.v, lc.probs, lc.concat);
    if (dropout) {
      lc.attn_mask = DropoutMask<T>(attn.rows(), attn.cols(), c.dropout, SiteSeed(opt.dropout_seed, sample, 1 + 2 * l));
      attn.array() *= lc.attn_mask.array();
    }
    x += attn;

    LayerNormRows(x, at(LayerArray::kLn2Gamma), at(LayerArray::kLn2Beta), lc.ln2_out, lc.ln2_hat, lc.ln2_rstd);
    lc.hidden_pre = (lc.ln2_out * at(LayerArray::kMlpWeight1)).rowwise() + at(LayerArray::kMlpBias1).row(0);
    lc.hidden = GeluMatrix(lc.hidden_pre);
    Matrix<T> mlp = (lc.hidden * at(LayerArray::kMlpWeight2)).rowwise() + at(LayerArray::kMlpBias2).row(0);
    if (dropout) {
      lc.mlp_mask = DropoutMask<T>(mlp.rows(), mlp.cols(), c.dropout, SiteSeed(opt.dropout_seed, sample, 2 + 2 * l));
      mlp.array() *= lc.mlp_mask.array();
    }
    x += mlp;
  }

  // Only the class token reaches the head.
  Matrix<T> cls = x.topRows(1);
  Matrix<T> out, hat;
  std::vector<T> rstd;
  LayerNormRows(cls, p[ParamIndex::FinalLnGamma(c)], p[ParamIndex::FinalLnBeta(c)], out, hat, rstd);
  Matrix<T> logits = out * p[ParamIndex::HeadWeight(c)] + p[ParamIndex::HeadBias(c)];
  if (cache != nullptr) {
    cache->final_hat = std::move(hat);
    cache->final_rstd = std::move(rstd);
    cache->final_out = std::move(out);
  }
  return logits;
}

template <typename T>
void CheckBatch(const Batch<T>& batch, const VitConfig& c) {
  if (batch.size() < 1) ShapeFail("empty batch");
  if (batch.channels != c.channels || batch.height != c.image_height || batch.width != c.image_width) {
    ShapeFail("batch images are " + std::to_string(batch.channels) + "x" + std::to_string(batch.height) + "x" +
              std::to_string(batch.width) + " but the model expects " + std::to_string(c.channels) + "x" +
              std::to_string(c.image_height) + "x" + std::to_string(c.image_width));
  }
  const std::size_t expected = static_cast<std::size_t>(batch.size()) * c.channels * c.image_height * c.image_width;
  if (batch.images.size() != expected) ShapeFail("batch pixel buffer has the wrong length");
  for (int label : batch.labels) {
    if (label < 0 || label >= c.n_classes) ShapeFail("label " + std::to_string(label) + " out of range");
  }
}

}  // namespace

void VitConfig::Validate() const {
  if (image_height <= 0 || image_width <= 0 || channels <= 0 || patch <= 0) ShapeFail("image and patch sizes must be positive");
  if (image_height % patch != 0 || image_width % patch != 0) {
    ShapeFail("image " + std::to_string(image_height) + "x" + std::to_string(image_width) +
              " is not divisible by patch " + std::to_string(patch));
  }
  if (embed_dim <= 0 || heads <= 0 || embed_dim % heads != 0) ShapeFail("embed_dim must be divisible by heads");
  if (layers < 0 || mlp_dim <= 0) ShapeFail("layers must be >= 0 and mlp_dim positive");
  if (n_classes < 2) ShapeFail("n_classes must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) ShapeFail("dropout must be in [0, 1)");
}

VitConfig VitConfig::Paper() { return {224, 224, 3, 16, 768, 12, 12, 3072, 10, 0.0}; }
VitConfig VitConfig::Desk() { return {64, 64, 3, 8, 64, 4, 4, 128, 10, 0.0}; }
VitConfig VitConfig::Tiny() { return {8, 8, 3, 4, 8, 1, 2, 16, 10, 0.0}; }

template <typename T>
std::size_t ParameterSet<T>::ScalarCount() const {
  std::size_t n = 0;
  for (const auto& a : arrays) n += static_cast<std::size_t>(a.size());
  return n;
}

template <typename T>
ParameterSet<T> ParameterSet<T>::Zeros(const VitConfig& config) {
  config.Validate();
  ParameterSet<T> p;
  for (const auto& [name, shape] : Layout(config)) {
    p.names.push_back(name);
    p.arrays.push_back(Matrix<T>::Zero(shape.rows, shape.cols));
    p.frozen.push_back(false);
  }
  return p;
}

template <typename T>
void ParameterSet<T>::CheckShapes(const VitConfig& config) const {
  const auto layout = Layout(config);
  if (layout.size() != arrays.size() || names.size() != arrays.size() || frozen.size() != arrays.size()) {
    ShapeFail("parameter set has " + std::to_string(arrays.size()) + " arrays, config needs " +
              std::to_string(layout.size()));
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    if (arrays[i].rows() != shape.rows || arrays[i].cols() != shape.cols) {
      ShapeFail("array " + name + " is " + std::to_string(arrays[i].rows()) + "x" + std::to_string(arrays[i].cols()) +
                ", config needs " + std::to_string(shape.rows) + "x" + std::to_string(shape.cols));
    }
  }
}

template <typename T>
ParameterSet<T> InitParameters(const VitConfig& config, std::uint64_t seed) {
  ParameterSet<T> p = ParameterSet<T>::Zeros(config);
  CounterRng root(seed);
  auto trunc_normal = [](Matrix<T>& m, CounterRng rng) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      double z;
      do {
        z = rng.Normal();
      } while (std::abs(z) > 2.0);
      m.data()[i] = static_cast<T>(0.02 * z);
    }
  };
  trunc_normal(p[ParamIndex::kPatchProjection], root.Split(ParamIndex::kPatchProjection));
  trunc_normal(p[ParamIndex::kPositionEmbedding], root.Split(ParamIndex::kPositionEmbedding));
  for (int l = 0; l < config.layers; ++l) {
    for (int a = 0; a < static_cast<int>(LayerArray::kCount); ++a) {
      const auto which = static_cast<LayerArray>(a);
      const std::size_t idx = ParamIndex::Layer(l, which);
      if (IsProjection(which)) trunc_normal(p[idx], root.Split(idx));
      if (which == LayerArray::kLn1Gamma || which == LayerArray::kLn2Gamma) p[idx].setOnes();
    }
  }
  p[ParamIndex::FinalLnGamma(config)].setOnes();
  return p;
}

template <typename T>
Matrix<T> Patchify(std::span<const T> image, int channels, int height, int width, int patch) {
  if (channels <= 0 || height <= 0 || width <= 0 || patch <= 0) ShapeFail("non-positive image dimension");
  if (height % patch != 0 || width % patch != 0) {
    ShapeFail(std::to_string(height) + "x" + std::to_string(width) + " image is not divisible by patch " +
              std::to_string(patch));
  }
  if (image.size() != static_cast<std::size_t>(channels) * height * width) ShapeFail("image buffer size mismatch");
  const int rows = height / patch;
  const int cols = width / patch;
  Matrix<T> out(rows * cols, patch * patch * channels);
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      const int n = pr * cols + pc;
      int k = 0;
      for (int ch = 0; ch < channels; ++ch) {
        for (int y = 0; y < patch; ++y) {
          const std::size_t base = (static_cast<std::size_t>(ch) * height + pr * patch + y) * width + pc * patch;
          for (int x = 0; x < patch; ++x) out(n, k++) = image[base + static_cast<std::size_t>(x)];
        }
      }
    }
  }
  return out;
}

template <typename T>
Matrix<T> Embed(const Matrix<T>& patches, const ParameterSet<T>& p, const VitConfig& c) {
  const Matrix<T>& proj = p[ParamIndex::kPatchProjection];
  const Matrix<T>& pos = p[ParamIndex::kPositionEmbedding];
  if (patches.cols() != proj.rows()) ShapeFail("patch length does not match the projection");
  if (patches.rows() + 1 != pos.rows()) ShapeFail("patch count does not match the position embedding");
  (void)c;
  Matrix<T> z(patches.rows() + 1, proj.cols());
  z.row(0) = p[ParamIndex::kClassToken].row(0) + pos.row(0);
  z.bottomRows(patches.rows()) = patches * proj + pos.bottomRows(patches.rows());
  return z;
}

template <typename T>
Matrix<T> LayerNorm(const Matrix<T>& x, const Matrix<T>& gamma, const Matrix<T>& beta) {
  if (gamma.cols() != x.cols() || beta.cols() != x.cols()) ShapeFail("LayerNorm width mismatch");
  Matrix<T> y, hat;
  std::vector<T> rstd;
  LayerNormRows(x, gamma, beta, y, hat, rstd);
  return y;
}

template <typename T>
T Gelu(T u) {
  return T(0.5) * u * (T(1) + std::erf(u / std::numbers::sqrt2_v<T>));
}

template <typename T>
Matrix<T> Attention(const Matrix<T>& x, const ParameterSet<T>& p, const VitConfig& c, int layer,
                    std::vector<Matrix<T>>* probabilities) {
  if (x.cols() != c.embed_dim || c.embed_dim % c.heads != 0) ShapeFail("attention input width mismatch");
  if (layer < 0 || layer >= c.layers) ShapeFail("layer index out of range");
  Matrix<T> q, k, v, concat;
  std::vector<Matrix<T>> probs;
  Matrix<T> out = AttentionCore(x, p, c, layer, q, k, v, probs, concat);
  if (probabilities != nullptr) *probabilities = std::move(probs);
  return out;
}

template <typename T>
Matrix<T> EncoderLayer(const Matrix<T>& x, const ParameterSet<T>& p, const VitConfig& c, int layer) {
  if (x.cols() != c.embed_dim) ShapeFail("encoder input width mismatch");
  if (layer < 0 || layer >= c.layers) ShapeFail("layer index out of range");
  auto at = [&](LayerArray a) -> const Matrix<T>& { return p[ParamIndex::Layer(layer, a)]; };
  Matrix<T> x1 = x + Attention(LayerNorm(x, at(LayerArray::kLn1Gamma), at(LayerArray::kLn1Beta)), p, c, layer);
  Matrix<T> b = LayerNorm(x1, at(LayerArray::kLn2Gamma), at(LayerArray::kLn2Beta));
  Matrix<T> h = GeluMatrix<T>((b * at(LayerArray::kMlpWeight1)).rowwise() + at(LayerArray::kMlpBias1).row(0));
  return x1 + ((h * at(LayerArray::kMlpWeight2)).rowwise() + at(LayerArray::kMlpBias2).row(0));
}

template <typename T>
Matrix<T> Forward(const Batch<T>& batch, const ParameterSet<T>& p, const VitConfig& c, const ForwardOptions& opt) {
  c.Validate();
  p.CheckShapes(c);
  CheckBatch(batch, c);
  Matrix<T> logits(batch.size(), c.n_classes);
  for (int i = 0; i < batch.size(); ++i) {
    logits.row(i) = SampleForward<T>(batch.Image(i), p, c, opt, i, nullptr);
  }
  return logits;
}

template <typename T>
T CrossEntropy(const Matrix<T>& logits, std::span<const int> labels) {
  if (logits.rows() != static_cast<Eigen::Index>(labels.size()) || logits.rows() == 0) {
    ShapeFail("logits rows and label count differ");
  }
  T total = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int label = labels[static_cast<std::size_t>(r)];
    if (label < 0 || label >= logits.cols()) ShapeFail("label " + std::to_string(label) + " out of range");
    const T peak = logits.row(r).maxCoeff();
    const T log_sum = std::log((logits.row(r).array() - peak).exp().sum()) + peak;
    total += log_sum - logits(r, label);
  }
  return total / static_cast<T>(logits.rows());
}

template <typename T>
LossAndGradients<T> Backward(const Batch<T>& batch, const ParameterSet<T>& p, const VitConfig& c,
                             const ForwardOptions& opt) {
  c.Validate();
  p.CheckShapes(c);
  CheckBatch(batch, c);

  LossAndGradients<T> result;
  result.gradients = ParameterSet<T>::Zeros(c);
  result.gradients.frozen = p.frozen;
  ParameterSet<T>& g = result.gradients;
  result.logits.resize(batch.size(), c.n_classes);

  // Nothing below the final LayerNorm needs gradients when all of it is frozen.
  bool body_trainable = false;
  for (std::size_t i = 0; i < ParamIndex::FinalLnGamma(c); ++i) body_trainable = body_trainable || !p.frozen[i];
  const bool final_ln_trainable =
      !p.frozen[ParamIndex::FinalLnGamma(c)] || !p.frozen[ParamIndex::FinalLnBeta(c)];

  const T inv_batch = T(1) / static_cast<T>(batch.size());
  const int dh = c.HeadDim();
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));

  for (int i = 0; i < batch.size(); ++i) {
    SampleCache<T> cache;
    const Matrix<T> logits = SampleForward<T>(batch.Image(i), p, c, opt, i, &cache);
    result.logits.row(i) = logits;

    // d(mean CE)/dlogits = (softmax - onehot) / B
    Matrix<T> dlogits = logits;
    const T peak = dlogits.maxCoeff();
    dlogits = (dlogits.array() - peak).exp();
    const T sum = dlogits.sum();
    const int label = batch.labels[static_cast<std::size_t>(i)];
    result.loss += (std::log(sum) + peak - logits(0, label)) * inv_batch;
    dlogits /= sum;
    dlogits(0, label) -= T(1);
    dlogits *= inv_batch;

    g[ParamIndex::HeadWeight(c)].noalias() += cache.final_out.transpose() * dlogits;
    g[ParamIndex::HeadBias(c)] += dlogits;
    if (!body_trainable && !final_ln_trainable) continue;

    const Matrix<T> dfinal = dlogits * p[ParamIndex::HeadWeight(c)].transpose();
    Matrix<T> dcls = LayerNormBackward<T>(dfinal, cache.final_hat, cache.final_rstd, p[ParamIndex::FinalLnGamma(c)],
                                          &g[ParamIndex::FinalLnGamma(c)], &g[ParamIndex::FinalLnBeta(c)]);
    if (!body_trainable) continue;

    const Eigen::Index tokens = c.Patches() + 1;
    Matrix<T> dx = Matrix<T>::Zero(tokens, c.embed_dim);
    dx.row(0) = dcls.row(0);

    for (int l = c.layers - 1; l >= 0; --l) {
      const LayerCache<T>& lc = cache.layers[static_cast<std::size_t>(l)];
      auto at = [&](LayerArray a) -> const Matrix<T>& { return p[ParamIndex::Layer(l, a)]; };
      auto grad = [&](LayerArray a) -> Matrix<T>& { return g[ParamIndex::Layer(l, a)]; };

      // MLP branch.
      Matrix<T> dmlp = dx;
      if (lc.mlp_mask.size() != 0) dmlp.array() *= lc.mlp_mask.array();
      grad(LayerArray::kMlpWeight2).noalias() += lc.hidden.transpose() * dmlp;
      grad(LayerArray::kMlpBias2) += dmlp.colwise().sum();
      Matrix<T> dhidden = dmlp * at(LayerArray::kMlpWeight2).transpose();
      dhidden.array() *= lc.hidden_pre.unaryExpr([](T u) { return GeluDerivative(u); }).array();
      grad(LayerArray::kMlpWeight1).noalias() += lc.ln2_out.transpose() * dhidden;
      grad(LayerArray::kMlpBias1) += dhidden.colwise().sum();
      const Matrix<T> dln2 = dhidden * at(LayerArray::kMlpWeight1).transpose();
      dx += LayerNormBackward<T>(dln2, lc.ln2_hat, lc.ln2_rstd, at(LayerArray::kLn2Gamma),
                                 &grad(LayerArray::kLn2Gamma), &grad(LayerArray::kLn2Beta));

      // Attention branch.
      Matrix<T> dattn = dx;
      if (lc.attn_mask.size() != 0) dattn.array() *= lc.attn_mask.array();
      grad(LayerArray::kOutWeight).noalias() += lc.concat.transpose() * dattn;
      grad(LayerArray::kOutBias) += dattn.colwise().sum();
      const Matrix<T> dconcat = dattn * at(LayerArray::kOutWeight).transpose();

      Matrix<T> dq(tokens, c.embed_dim), dk(tokens, c.embed_dim), dv(tokens, c.embed_dim);
      for (int h = 0; h < c.heads; ++h) {
        const Matrix<T>& a = lc.probs[static_cast<std::size_t>(h)];
        const auto dout = dconcat.middleCols(h * dh, dh);
        const Matrix<T> da = dout * lc.v.middleCols(h * dh, dh).transpose();
        dv.middleCols(h * dh, dh) = a.transpose() * dout;
        Matrix<T> ds = a.array() * (da.array().colwise() - (da.array() * a.array()).rowwise().sum());
        ds *= scale;
        dq.middleCols(h * dh, dh) = ds * lc.k.middleCols(h * dh, dh);
        dk.middleCols(h * dh, dh) = ds.transpose() * lc.q.middleCols(h * dh, dh);
      }
      grad(LayerArray::kQueryWeight).noalias() += lc.ln1_out.transpose() * dq;
      grad(LayerArray::kQueryBias) += dq.colwise().sum();
      grad(LayerArray::kKeyWeight).noalias() += lc.ln1_out.transpose() * dk;
      grad(LayerArray::kKeyBias) += dk.colwise().sum();
      grad(LayerArray::kValueWeight).noalias() += lc.ln1_out.transpose() * dv;
      grad(LayerArray::kValueBias) += dv.colwise().sum();
      const Matrix<T> dln1 = dq * at(LayerArray::kQueryWeight).transpose() +
                             dk * at(LayerArray::kKeyWeight).transpose() +
                             dv * at(LayerArray::kValueWeight).transpose();
      dx += LayerNormBackward<T>(dln1, lc.ln1_hat, lc.ln1_rstd, at(LayerArray::kLn1Gamma),
                                 &grad(LayerArray::kLn1Gamma), &grad(LayerArray::kLn1Beta));
    }

    if (cache.embed_mask.size() != 0) dx.array() *= cache.embed_mask.array();
    g[ParamIndex::kPositionEmbedding] += dx;
    g[ParamIndex::kClassToken] += dx.topRows(1);
    g[ParamIndex::kPatchProjection].noalias() += cache.patches.transpose() * dx.bottomRows(tokens - 1);
  }

  for (std::size_t a = 0; a < g.size(); ++a) {
    if (p.frozen[a]) g[a].setZero();
  }
  return result;
}

template <typename T>
AdamState<T> AdamState<T>::Zeros(const ParameterSet<T>& params) {
  AdamState<T> s;
  for (const auto& a : params.arrays) {
    s.first.push_back(Matrix<T>::Zero(a.rows(), a.cols()));
    s.second.push_back(Matrix<T>::Zero(a.rows(), a.cols()));
  }
  return s;
}

template <typename T>
void AdamStep(ParameterSet<T>& params, const ParameterSet<T>& gradients, AdamState<T>& state,
              const AdamOptions& o) {
  if (gradients.size() != params.size() || state.first.size() != params.size() ||
      state.second.size() != params.size()) {
    ShapeFail("optimizer state does not match the parameter set");
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T correction1 = static_cast<T>(1.0 - std::pow(o.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(o.beta2, t));
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  const T lr = static_cast<T>(o.learning_rate), eps = static_cast<T>(o.epsilon);

  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params.frozen[i]) continue;
    const Matrix<T>& g = gradients[i];
    if (g.rows() != params[i].rows() || g.cols() != params[i].cols()) {
      ShapeFail("gradient shape mismatch for " + params.names[i]);
    }
    Matrix<T>& m = state.first[i];
    Matrix<T>& v = state.second[i];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.cwiseAbs2();
    params[i].array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
  }
}

template <typename T>
int ArgMax(std::span<const T> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

#define AMC_VIT_INSTANTIATE(T)                                                                               \
  template struct ParameterSet<T>;                                                                           \
  template struct AdamState<T>;                                                                              \
  template ParameterSet<T> InitParameters<T>(const VitConfig&, std::uint64_t);                               \
  template Matrix<T> Patchify<T>(std::span<const T>, int, int, int, int);                                   \
  template Matrix<T> Embed<T>(const Matrix<T>&, const ParameterSet<T>&, const VitConfig&);                   \
  template Matrix<T> LayerNorm<T>(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&);                    \
  template T Gelu<T>(T);                                                                                     \
  template Matrix<T> Attention<T>(const Matrix<T>&, const ParameterSet<T>&, const VitConfig&, int,           \
                                  std::vector<Matrix<T>>*);                                                  \
  template Matrix<T> EncoderLayer<T>(const Matrix<T>&, const ParameterSet<T>&, const VitConfig&, int);      \
  template Matrix<T> Forward<T>(const Batch<T>&, const ParameterSet<T>&, const VitConfig&,                   \
                                const ForwardOptions&);                                                      \
  template T CrossEntropy<T>(const Matrix<T>&, std::span<const int>);                                        \
  template LossAndGradients<T> Backward<T>(const Batch<T>&, const ParameterSet<T>&, const VitConfig&,        \
                                           const ForwardOptions&);                                           \
  template void AdamStep<T>(ParameterSet<T>&, const ParameterSet<T>&, AdamState<T>&, const AdamOptions&);    \
  template int ArgMax<T>(std::span<const T>);

AMC_VIT_INSTANTIATE(float)
AMC_VIT_INSTANTIATE(double)

#undef AMC_VIT_INSTANTIATE

}  // namespace amc::vit
