#include "latentwarp/backends.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "latentwarp/errors.hpp"

namespace latentwarp {

const AttentionSite* TapRegistry::attention_site(const std::string& id) const {
  for (const auto& s : attention_sites) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

const FeatureSite* TapRegistry::feature_site(const std::string& id) const {
  for (const auto& s : feature_sites) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

std::vector<std::string> TapRegistry::attention_site_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : attention_sites) ids.push_back(s.id);
  return ids;
}

void TapRegistry::validate_for(const Shape& latent) const {
  auto check = [&](const std::string& id, int f) {
    if (f < 1 || latent.height % f != 0 || latent.width % f != 0) {
      throw std::invalid_argument("tap '" + id + "' resolution factor " + std::to_string(f) +
                                  " does not divide latent " + latent.to_string());
    }
  };
  for (const auto& s : attention_sites) check(s.id, s.downsample);
  for (const auto& s : feature_sites) check(s.id, s.downsample);
}

Grid Denoiser::feature_vjp(const DenoiserRequest&, const std::string&, const Grid&) const {
  throw std::logic_error("feature_vjp: backend does not provide analytic gradients");
}

DenoiserResponse run_denoiser(const Denoiser& denoiser, const DenoiserRequest& request) {
  const TapRegistry& taps = denoiser.taps();
  for (const auto& id : request.capture) {
    if (!taps.has(id)) throw ConfigError("denoiser: unknown tap '" + id + "'");
  }
  if (request.injection) {
    for (const auto& [id, kv] : request.injection->sites) {
      if (!taps.attention_site(id)) throw ConfigError("denoiser: injection into unknown site '" + id + "'");
    }
  }
  DenoiserResponse response = denoiser.predict(request);
  if (response.eps.shape() != request.latent.shape()) {
    throw std::runtime_error("denoiser: eps shape " + response.eps.shape().to_string() +
                             " differs from latent " + request.latent.shape().to_string());
  }
  for (const auto& id : request.capture) {
    const bool kv = taps.attention_site(id) && response.captured_kv.count(id);
    const bool feat = taps.feature_site(id) && response.captured_features.count(id);
    if (!kv && !feat) throw std::runtime_error("denoiser: requested tap '" + id + "' missing from response");
  }
  return response;
}

DepthMap disparity_to_depth(const std::vector<double>& disparity, int width, int height,
                            const DisparityConversion& conv) {
  if (disparity.size() != static_cast<std::size_t>(width) * height || disparity.empty()) {
    throw std::invalid_argument("disparity_to_depth: size mismatch");
  }
  if (!(conv.min_depth > 0.0 && conv.min_depth <= conv.max_depth)) {
    throw std::invalid_argument("disparity_to_depth: invalid clamp range");
  }
  const auto [lo_it, hi_it] = std::minmax_element(disparity.begin(), disparity.end());
  const double lo = *lo_it;
  const double range = *hi_it - lo;
  DepthMap out(width, height, 0.0, DepthSource::estimated);
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    const double n = range > 0.0 ? (disparity[i] - lo) / range : 0.0;
    const double denom = conv.scale * n + conv.offset;
    const double d = denom > 0.0 ? 1.0 / denom : conv.max_depth;
    out.values[i] = std::clamp(d, conv.min_depth, conv.max_depth);
  }
  return out;
}

namespace {

class SerialExecutor {
 public:
  SerialExecutor() : worker_([this] { run(); }) {}
  ~SerialExecutor() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stopping_ = true;
    }
    cv_.notify_one();
    worker_.join();
  }

  template <typename F>
  auto submit(F&& fn) -> decltype(fn()) {
    using R = decltype(fn());
    auto task = std::make_shared<std::packaged_task<R()>>(std::forward<F>(fn));
    std::future<R> result = task->get_future();
    {
      std::lock_guard<std::mutex> lock(mutex_);
      queue_.emplace_back([task] { (*task)(); });
    }
    cv_.notify_one();
    return result.get();
  }

 private:
  void run() {
    for (;;) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      job();
    }
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> queue_;
  bool stopping_ = false;
  std::thread worker_;
};

class SerialDenoiser final : public Denoiser {
 public:
  SerialDenoiser(std::shared_ptr<const Denoiser> inner, std::shared_ptr<SerialExecutor> exec)
      : inner_(std::move(inner)), exec_(std::move(exec)) {}
  const TapRegistry& taps() const override { return inner_->taps(); }
  DenoiserResponse predict(const DenoiserRequest& r) const override {
    return exec_->submit([&] { return inner_->predict(r); });
  }
  GradientMode gradient_mode() const override { return inner_->gradient_mode(); }
  Grid feature_vjp(const DenoiserRequest& r, const std::string& tap, const Grid& cot) const override {
    return exec_->submit([&] { return inner_->feature_vjp(r, tap, cot); });
  }

 private:
  std::shared_ptr<const Denoiser> inner_;
  std::shared_ptr<SerialExecutor> exec_;
};

class SerialAutoencoder final : public Autoencoder {
 public:
  SerialAutoencoder(std::shared_ptr<const Autoencoder> inner, std::shared_ptr<SerialExecutor> exec)
      : inner_(std::move(inner)), exec_(std::move(exec)) {}
  Grid encode(const Image& image) const override {
    return exec_->submit([&] { return inner_->encode(image); });
  }
  Image decode(const Grid& latent) const override {
    return exec_->submit([&] { return inner_->decode(latent); });
  }
  int spatial_factor() const override { return inner_->spatial_factor(); }
  int latent_channels() const override { return inner_->latent_channels(); }

 private:
  std::shared_ptr<const Autoencoder> inner_;
  std::shared_ptr<SerialExecutor> exec_;
};

class SerialDepth final : public DepthEstimator {
 public:
  SerialDepth(std::shared_ptr<const DepthEstimator> inner, std::shared_ptr<SerialExecutor> exec)
      : inner_(std::move(inner)), exec_(std::move(exec)) {}
  DepthMap estimate(const Image& image) const override {
    return exec_->submit([&] { return inner_->estimate(image); });
  }

 private:
  std::shared_ptr<const DepthEstimator> inner_;
  std::shared_ptr<SerialExecutor> exec_;
};

class SerialText final : public TextEncoder {
 public:
  SerialText(std::shared_ptr<const TextEncoder> inner, std::shared_ptr<SerialExecutor> exec)
      : inner_(std::move(inner)), exec_(std::move(exec)) {}
  TextEmbedding encode(const std::string& prompt) const override {
    return exec_->submit([&] { return inner_->encode(prompt); });
  }

 private:
  std::shared_ptr<const TextEncoder> inner_;
  std::shared_ptr<SerialExecutor> exec_;
};

}  // namespace

BackendSuite serialize_backend_access(BackendSuite suite) {
  if (!suite.complete()) throw std::invalid_argument("serialize_backend_access: incomplete suite");
  auto exec = std::make_shared<SerialExecutor>();
  suite.denoiser = std::make_shared<SerialDenoiser>(suite.denoiser, exec);
  suite.autoencoder = std::make_shared<SerialAutoencoder>(suite.autoencoder, exec);
  suite.depth_estimator = std::make_shared<SerialDepth>(suite.depth_estimator, exec);
  suite.text_encoder = std::make_shared<SerialText>(suite.text_encoder, exec);
  return suite;
}

}  // namespace latentwarp
