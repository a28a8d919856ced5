// Copyright 2026 The qshard Authors.

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     http://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
/**
 * @file memory.hpp
 * Per-rank accounting of full amplitude buffers.
 */
#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

namespace qshard {

/**
 * @brief Counts live amplitude buffers and bytes with high-water marks.
 *
 * One tracker belongs to each rank. Ranks are single-threaded, so the
 * counters are plain integers.
 */
class MemoryTracker {
  public:
    void on_alloc(std::size_t bytes) {
        live_bytes_ += bytes;
        ++live_buffers_;
        peak_bytes_ = std::max(peak_bytes_, live_bytes_);
        peak_buffers_ = std::max(peak_buffers_, live_buffers_);
        window_bytes_ = std::max(window_bytes_, live_bytes_);
        window_buffers_ = std::max(window_buffers_, live_buffers_);
    }

    void on_free(std::size_t bytes) {
        live_bytes_ -= bytes;
        --live_buffers_;
    }

    std::size_t live_bytes() const { return live_bytes_; }
    std::size_t peak_bytes() const { return peak_bytes_; }
    std::size_t live_buffers() const { return live_buffers_; }
    std::size_t peak_buffers() const { return peak_buffers_; }

    /// Start a measurement window; the lifetime peaks are left untouched.
    void begin_window() {
        window_bytes_ = live_bytes_;
        window_buffers_ = live_buffers_;
    }

    std::size_t window_peak_bytes() const { return window_bytes_; }
    std::size_t window_peak_buffers() const { return window_buffers_; }

  private:
    std::size_t live_bytes_ = 0;
    std::size_t peak_bytes_ = 0;
    std::size_t live_buffers_ = 0;
    std::size_t peak_buffers_ = 0;
    std::size_t window_bytes_ = 0;
    std::size_t window_buffers_ = 0;
};

/// A real array registered with a MemoryTracker for its whole lifetime.
template <typename Scalar> class AmplitudeBuffer {
  public:
    AmplitudeBuffer() = default;

    AmplitudeBuffer(std::size_t size, std::shared_ptr<MemoryTracker> tracker)
        : data_(size, Scalar{0}), tracker_(std::move(tracker)) {
        track();
    }

    AmplitudeBuffer(const AmplitudeBuffer &other) : data_(other.data_), tracker_(other.tracker_) {
        track();
    }

    AmplitudeBuffer(AmplitudeBuffer &&other) noexcept
        : data_(std::move(other.data_)), tracker_(std::move(other.tracker_)) {
        other.data_.clear();
    }

    AmplitudeBuffer &operator=(const AmplitudeBuffer &other) {
        if (this != &other) {
            AmplitudeBuffer copy(other);
            swap(copy);
        }
        return *this;
    }

    AmplitudeBuffer &operator=(AmplitudeBuffer &&other) noexcept {
        if (this != &other) {
            untrack();
            data_ = std::move(other.data_);
            tracker_ = std::move(other.tracker_);
            other.data_.clear();
        }
        return *this;
    }

    ~AmplitudeBuffer() { untrack(); }

    void swap(AmplitudeBuffer &other) noexcept {
        data_.swap(other.data_);
        tracker_.swap(other.tracker_);
    }

    Scalar *data() { return data_.data(); }
    const Scalar *data() const { return data_.data(); }
    std::size_t size() const { return data_.size(); }
    Scalar &operator[](std::size_t i) { return data_[i]; }
    const Scalar &operator[](std::size_t i) const { return data_[i]; }
    const std::shared_ptr<MemoryTracker> &tracker() const { return tracker_; }

  private:
    void track() {
        if (tracker_ && !data_.empty())
            tracker_->on_alloc(data_.size() * sizeof(Scalar));
    }
    void untrack() {
        if (tracker_ && !data_.empty())
            tracker_->on_free(data_.size() * sizeof(Scalar));
    }

    std::vector<Scalar> data_;
    std::shared_ptr<MemoryTracker> tracker_;
};

} // namespace qshard
