// Copyright 2026 The DialEdit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dialedit/backends.h"

#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "dialedit/error.h"
#include "dialedit/lexicon.h"
#include "dialedit/ontology.h"
#include "dialedit/random.h"

namespace dialedit {
namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ConstMap = Eigen::Map<const Vector>;

Matrix GaussianMatrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = Gaussian(rng) * scale;
  }
  return m;
}

std::vector<double> ToStd(const Vector& v) { return {v.data(), v.data() + v.size()}; }

void CheckSize(const Image& image, std::size_t expected) {
  if (image.pixels.size() != expected) {
    throw Error(ErrorCode::kShapeMismatch,
                "image has " + std::to_string(image.pixels.size()) +
                    " values, backend expects " + std::to_string(expected),
                {{"expected", expected}, {"actual", image.pixels.size()}});
  }
}

std::uint64_t HashPixels(const std::vector<double>& pixels) {
  std::string_view bytes(reinterpret_cast<const char*>(pixels.data()),
                         pixels.size() * sizeof(double));
  return Fnv1a(bytes);
}

// Shared VJP of x -> normalize(W x).
std::vector<double> LinearNormalizeVjp(const Matrix& w, const Image& image,
                                       std::span<const double> grad_out) {
  const Vector u = w * ConstMap(image.pixels.data(), image.pixels.size());
  const std::vector<double> g_u =
      NormalizeVjp(std::span(u.data(), static_cast<std::size_t>(u.size())), grad_out);
  return ToStd(w.transpose() * ConstMap(g_u.data(), g_u.size()));
}

std::vector<double> LinearNormalize(const Matrix& w, const Image& image) {
  const Vector u = w * ConstMap(image.pixels.data(), image.pixels.size());
  return Normalized(std::span(u.data(), static_cast<std::size_t>(u.size())));
}

}  // namespace

nlohmann::json Image::ToJson() const {
  return {{"id", id}, {"provenance", provenance}, {"pixels", pixels}};
}

Image Image::FromJson(const nlohmann::json& doc) {
  Image image;
  image.pixels = doc.at("pixels").get<std::vector<double>>();
  image.id = doc.value("id", std::string());
  image.provenance = doc.value("provenance", std::string("original"));
  return image;
}

LatentCode LatentCode::Zeros(int layers, int dim) {
  return {layers, dim, std::vector<double>(static_cast<std::size_t>(layers * dim), 0.0)};
}

bool LatentCode::AllFinite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

nlohmann::json LatentCode::ToJson() const {
  return {{"layers", layers}, {"dim", dim}, {"values", values}};
}

LatentCode LatentCode::FromJson(const nlohmann::json& doc) {
  LatentCode w{doc.at("layers").get<int>(), doc.at("dim").get<int>(),
               doc.at("values").get<std::vector<double>>()};
  if (w.values.size() != static_cast<std::size_t>(w.layers * w.dim)) {
    throw Error(ErrorCode::kShapeMismatch, "latent values do not match layers x dim");
  }
  return w;
}

std::vector<double> Normalized(std::span<const double> x) {
  double norm = std::sqrt(Dot(x, x));
  if (norm == 0.0) norm = 1.0;
  std::vector<double> out(x.begin(), x.end());
  for (double& v : out) v /= norm;
  return out;
}

std::vector<double> NormalizeVjp(std::span<const double> x,
                                 std::span<const double> grad_out) {
  const double norm = std::sqrt(Dot(x, x));
  std::vector<double> out(x.size(), 0.0);
  if (norm == 0.0) return out;
  double proj = 0;
  for (std::size_t i = 0; i < x.size(); ++i) proj += x[i] * grad_out[i];
  proj /= norm * norm;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (grad_out[i] - x[i] * proj) / norm;
  }
  return out;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) s += a[i] * b[i];
  return s;
}

void ConcurrencyGate::Acquire() {
  if (limit_ <= 0) return;
  std::unique_lock lock(mutex_);
  cv_.wait(lock, [&] { return active_ < limit_; });
  ++active_;
}

void ConcurrencyGate::Release() {
  if (limit_ <= 0) return;
  {
    std::lock_guard lock(mutex_);
    --active_;
  }
  cv_.notify_one();
}

// --- generator ------------------------------------------------------------

struct ToyGenerator::Impl {
  Matrix a;
  Vector b;
  Matrix pinv;
};

ToyGenerator::ToyGenerator(const ToyBackendConfig& config)
    : config_(config), impl_(std::make_unique<Impl>()) {
  if (config.layers < 1 || config.dim < 1 ||
      config.image_size < static_cast<std::size_t>(config.layers * config.dim)) {
    throw Error(ErrorCode::kInvalidArgument,
                "toy generator needs image_size >= layers * dim >= 1");
  }
  const auto n = static_cast<std::size_t>(config.layers * config.dim);
  impl_->a = GaussianMatrix(config.image_size, n, DeriveSeed(config.seed, 1));
  impl_->b = GaussianMatrix(config.image_size, 1, DeriveSeed(config.seed, 2)).col(0);
  impl_->pinv = impl_->a.completeOrthogonalDecomposition().pseudoInverse();
}

ToyGenerator::~ToyGenerator() = default;

Image ToyGenerator::Synthesize(const LatentCode& w) const {
  if (w.layers != config_.layers || w.dim != config_.dim ||
      w.values.size() != static_cast<std::size_t>(w.layers * w.dim)) {
    throw Error(ErrorCode::kShapeMismatch, "latent shape does not match generator",
                {{"layers", w.layers}, {"dim", w.dim}});
  }
  Image image;
  image.pixels = ToStd(impl_->a * ConstMap(w.values.data(), w.values.size()) + impl_->b);
  return image;
}

std::vector<double> ToyGenerator::SynthesizeVjp(const LatentCode&,
                                                std::span<const double> grad_image) const {
  return ToStd(impl_->a.transpose() * ConstMap(grad_image.data(), grad_image.size()));
}

LatentCode ToyGenerator::Project(const Image& image) const {
  CheckSize(image, config_.image_size);
  const Vector w = impl_->pinv * (ConstMap(image.pixels.data(), image.pixels.size()) - impl_->b);
  return {config_.layers, config_.dim, ToStd(w)};
}

LatentCode ToyGenerator::Invert(const Image& image, std::uint64_t seed) const {
  LatentCode w = Project(image);
  if (config_.noise_sigma > 0) {
    Rng rng(DeriveSeed(seed, HashPixels(image.pixels)));
    for (double& v : w.values) v += config_.noise_sigma * Gaussian(rng);
  }
  return w;
}

// --- joint embedder -------------------------------------------------------

struct ToyJointEmbedder::Impl {
  Matrix m;
  std::vector<std::vector<double>> attribute_vectors;  // by value index
};

ToyJointEmbedder::ToyJointEmbedder(const ToyBackendConfig& config)
    : config_(config), impl_(std::make_unique<Impl>()) {
  impl_->m = GaussianMatrix(config.embed_size, config.image_size, DeriveSeed(config.seed, 3));
  for (std::size_t i = 0; i < AttributeValue::kTotalCount; ++i) {
    Rng rng(DeriveSeed(DeriveSeed(config.seed, 4), i));
    std::vector<double> v(config.embed_size);
    for (double& x : v) x = Gaussian(rng);
    impl_->attribute_vectors.push_back(Normalized(v));
  }
}

ToyJointEmbedder::~ToyJointEmbedder() = default;

std::vector<double> ToyJointEmbedder::EmbedImage(const Image& image) const {
  CheckSize(image, config_.image_size);
  return LinearNormalize(impl_->m, image);
}

std::vector<double> ToyJointEmbedder::EmbedImageVjp(
    const Image& image, std::span<const double> grad_embedding) const {
  CheckSize(image, config_.image_size);
  return LinearNormalizeVjp(impl_->m, image, grad_embedding);
}

std::vector<double> ToyJointEmbedder::EmbedText(std::string_view text) const {
  std::vector<double> sum(config_.embed_size, 0.0);
  const auto values = Lexicon::Keywords(true).Values(text);
  if (values.empty()) {
    Rng rng(DeriveSeed(config_.seed, Fnv1a(NormalizeText(text))));
    for (double& x : sum) x = Gaussian(rng);
    return Normalized(sum);
  }
  for (AttributeValue v : values) {
    const auto& u = impl_->attribute_vectors[v.index()];
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += u[i];
  }
  return Normalized(sum);
}

// --- identity embedder ----------------------------------------------------

struct ToyIdentityEmbedder::Impl {
  Matrix p;
};

ToyIdentityEmbedder::ToyIdentityEmbedder(const ToyBackendConfig& config)
    : config_(config), impl_(std::make_unique<Impl>()) {
  impl_->p = GaussianMatrix(config.identity_size, config.image_size, DeriveSeed(config.seed, 5));
}

ToyIdentityEmbedder::~ToyIdentityEmbedder() = default;

std::vector<double> ToyIdentityEmbedder::Embed(const Image& image) const {
  CheckSize(image, config_.image_size);
  return LinearNormalize(impl_->p, image);
}

std::vector<double> ToyIdentityEmbedder::EmbedVjp(const Image& image,
                                                  std::span<const double> grad_embedding) const {
  CheckSize(image, config_.image_size);
  return LinearNormalizeVjp(impl_->p, image, grad_embedding);
}

std::vector<FeatureMap> ToyFeatureExtractor::Layers(const Image& image) const {
  return {FeatureMap{1, image.pixels.size(), image.pixels}};
}

// --- factories ------------------------------------------------------------

Backends MakeToyBackends(const ToyBackendConfig& config) {
  Backends b;
  b.kind = "toy";
  b.generator = std::make_shared<ToyGenerator>(config);
  b.joint = std::make_shared<ToyJointEmbedder>(config);
  b.identity = std::make_shared<ToyIdentityEmbedder>(config);
  b.features = std::make_shared<ToyFeatureExtractor>();
  b.gate = std::make_shared<ConcurrencyGate>(config.max_concurrency);
  return b;
}

Backends MakeBackends(const nlohmann::json& config) {
  const std::string kind = config.value("kind", std::string("toy"));
  if (kind != "toy") {
    throw Error(ErrorCode::kBackendUnavailable,
                "backend '" + kind + "' is not installed", {{"kind", kind}});
  }
  ToyBackendConfig toy;
  toy.seed = config.value("seed", toy.seed);
  toy.noise_sigma = config.value("noise_sigma", toy.noise_sigma);
  toy.max_concurrency = config.value("max_concurrency", toy.max_concurrency);
  if (toy.noise_sigma < 0) {
    throw Error(ErrorCode::kInvalidArgument, "noise_sigma must be >= 0");
  }
  return MakeToyBackends(toy);
}

Image ToyCatalogImage(const Generator& generator, std::string_view image_id) {
  Rng rng(Fnv1a(image_id));
  LatentCode w = LatentCode::Zeros(generator.layers(), generator.dim());
  for (double& v : w.values) v = Gaussian(rng);
  Image image = generator.Synthesize(w);
  image.id = std::string(image_id);
  return image;
}

}  // namespace dialedit
