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

#ifndef DIALEDIT_BACKENDS_H_
#define DIALEDIT_BACKENDS_H_

#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace dialedit {

// Flat pixel or feature vector in the backend's image space.
struct Image {
  std::vector<double> pixels;
  std::string id;
  // "original" or "edited(turn k, multi-turn|cascade)".
  std::string provenance = "original";

  nlohmann::json ToJson() const;
  static Image FromJson(const nlohmann::json& doc);
};

// `layers` style vectors of size `dim`, stored row-major.
struct LatentCode {
  int layers = 0;
  int dim = 0;
  std::vector<double> values;

  static LatentCode Zeros(int layers, int dim);
  bool SameShape(const LatentCode& other) const {
    return layers == other.layers && dim == other.dim;
  }
  bool AllFinite() const;
  nlohmann::json ToJson() const;
  static LatentCode FromJson(const nlohmann::json& doc);
};

// Image synthesis and inversion. Synthesize must be differentiable: the
// vector-Jacobian product maps d(loss)/d(image) to d(loss)/d(latent).
class Generator {
 public:
  virtual ~Generator() = default;
  virtual int layers() const = 0;
  virtual int dim() const = 0;
  virtual std::size_t image_size() const = 0;

  virtual Image Synthesize(const LatentCode& w) const = 0;
  virtual std::vector<double> SynthesizeVjp(const LatentCode& w,
                                            std::span<const double> grad_image) const = 0;
  // Stochastic inverters derive their noise from `seed` and the image.
  virtual LatentCode Invert(const Image& image, std::uint64_t seed) const = 0;

  // Maximum number of edits that may use this generator at once; 0 means
  // unlimited.
  virtual int max_concurrency() const { return 0; }
};

// Image and text into one space; outputs are unit vectors.
class JointEmbedder {
 public:
  virtual ~JointEmbedder() = default;
  virtual std::vector<double> EmbedImage(const Image& image) const = 0;
  virtual std::vector<double> EmbedImageVjp(const Image& image,
                                            std::span<const double> grad_embedding) const = 0;
  virtual std::vector<double> EmbedText(std::string_view text) const = 0;
};

class IdentityEmbedder {
 public:
  virtual ~IdentityEmbedder() = default;
  virtual std::vector<double> Embed(const Image& image) const = 0;
  virtual std::vector<double> EmbedVjp(const Image& image,
                                       std::span<const double> grad_embedding) const = 0;
};

// Per-layer feature maps for perceptual and distribution metrics.
struct FeatureMap {
  std::size_t locations = 0;
  std::size_t channels = 0;
  std::vector<double> values;  // locations x channels, row-major
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<FeatureMap> Layers(const Image& image) const = 0;
  virtual std::vector<double> LayerWeights() const = 0;
  // Flat descriptor for distribution statistics.
  virtual std::vector<double> Features(const Image& image) const = 0;
};

// Counting gate honoring Generator::max_concurrency.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int limit) : limit_(limit) {}
  void Acquire();
  void Release();

 private:
  int limit_;
  int active_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
};

struct Backends {
  std::string kind;
  std::shared_ptr<const Generator> generator;
  std::shared_ptr<const JointEmbedder> joint;
  std::shared_ptr<const IdentityEmbedder> identity;
  std::shared_ptr<const FeatureExtractor> features;
  std::shared_ptr<ConcurrencyGate> gate;
};

struct ToyBackendConfig {
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  int layers = 2;
  int dim = 4;
  std::size_t image_size = 16;
  std::size_t embed_size = 12;
  std::size_t identity_size = 8;
  int max_concurrency = 0;
};

// Linear generator G(w) = A vec(w) + b; inversion by pseudo-inverse plus
// Gaussian noise of scale noise_sigma.
class ToyGenerator : public Generator {
 public:
  explicit ToyGenerator(const ToyBackendConfig& config);
  ~ToyGenerator() override;

  int layers() const override { return config_.layers; }
  int dim() const override { return config_.dim; }
  std::size_t image_size() const override { return config_.image_size; }
  Image Synthesize(const LatentCode& w) const override;
  std::vector<double> SynthesizeVjp(const LatentCode& w,
                                    std::span<const double> grad_image) const override;
  LatentCode Invert(const Image& image, std::uint64_t seed) const override;
  int max_concurrency() const override { return config_.max_concurrency; }

  // Noise-free inversion.
  LatentCode Project(const Image& image) const;
  double noise_sigma() const { return config_.noise_sigma; }

 private:
  struct Impl;
  ToyBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

// Images: normalize(M x). Texts: normalized sum of one fixed unit vector
// per attribute value found in the text; text without attributes maps to a
// unit vector hashed from its normalized form.
class ToyJointEmbedder : public JointEmbedder {
 public:
  explicit ToyJointEmbedder(const ToyBackendConfig& config);
  ~ToyJointEmbedder() override;

  std::vector<double> EmbedImage(const Image& image) const override;
  std::vector<double> EmbedImageVjp(const Image& image,
                                    std::span<const double> grad_embedding) const override;
  std::vector<double> EmbedText(std::string_view text) const override;

 private:
  struct Impl;
  ToyBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

// normalize(P x).
class ToyIdentityEmbedder : public IdentityEmbedder {
 public:
  explicit ToyIdentityEmbedder(const ToyBackendConfig& config);
  ~ToyIdentityEmbedder() override;

  std::vector<double> Embed(const Image& image) const override;
  std::vector<double> EmbedVjp(const Image& image,
                               std::span<const double> grad_embedding) const override;

 private:
  struct Impl;
  ToyBackendConfig config_;
  std::unique_ptr<Impl> impl_;
};

// One layer, one location, the raw image as channels, unit weight.
class ToyFeatureExtractor : public FeatureExtractor {
 public:
  std::vector<FeatureMap> Layers(const Image& image) const override;
  std::vector<double> LayerWeights() const override { return {1.0}; }
  std::vector<double> Features(const Image& image) const override {
    return image.pixels;
  }
};

Backends MakeToyBackends(const ToyBackendConfig& config = {});

// Reads {"kind": "toy", "noise_sigma": ..., "seed": ...}. Other kinds are
// external plugins; without one installed this throws
// Error(kBackendUnavailable).
Backends MakeBackends(const nlohmann::json& config);

// Deterministic stand-in for a dataset image: the synthesis of a latent
// drawn from the image id.
Image ToyCatalogImage(const Generator& generator, std::string_view image_id);

// Normalized vector and the VJP of x -> x / |x|.
std::vector<double> Normalized(std::span<const double> x);
std::vector<double> NormalizeVjp(std::span<const double> x,
                                 std::span<const double> grad_out);
double Dot(std::span<const double> a, std::span<const double> b);

}  // namespace dialedit

#endif  // DIALEDIT_BACKENDS_H_
