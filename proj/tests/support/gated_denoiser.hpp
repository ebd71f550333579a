#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>

#include "latentwarp/backends.hpp"

namespace testing_support {

/// Holds the first predict() call made after arm() until release(), so a
/// test can issue a second request while the first is known to be in flight.
class GatedDenoiser final : public latentwarp::Denoiser {
 public:
  explicit GatedDenoiser(std::shared_ptr<const latentwarp::Denoiser> inner) : inner_(std::move(inner)) {}

  const latentwarp::TapRegistry& taps() const override { return inner_->taps(); }
  latentwarp::GradientMode gradient_mode() const override { return inner_->gradient_mode(); }
  latentwarp::Grid feature_vjp(const latentwarp::DenoiserRequest& r, const std::string& tap,
                               const latentwarp::Grid& cot) const override {
    return inner_->feature_vjp(r, tap, cot);
  }
  latentwarp::DenoiserResponse predict(const latentwarp::DenoiserRequest& r) const override {
    std::unique_lock<std::mutex> lock(mutex_);
    if (armed_) {
      armed_ = false;
      entered_ = true;
      cv_.notify_all();
      cv_.wait(lock, [this] { return released_; });
    }
    lock.unlock();
    return inner_->predict(r);
  }

  void arm() {
    std::lock_guard<std::mutex> lock(mutex_);
    armed_ = true;
    entered_ = false;
    released_ = false;
  }
  void wait_entered() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [this] { return entered_; });
  }
  void release() {
    std::lock_guard<std::mutex> lock(mutex_);
    released_ = true;
    cv_.notify_all();
  }

 private:
  std::shared_ptr<const latentwarp::Denoiser> inner_;
  mutable std::mutex mutex_;
  mutable std::condition_variable cv_;
  mutable bool armed_ = false;
  mutable bool entered_ = false;
  bool released_ = false;
};

}  // namespace testing_support
