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
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>

#include "qshard/comm.hpp"

namespace qshard {

class InProcessHub {
  public:
    explicit InProcessHub(int world)
        : world_(world), claimed_(world, false), gather_(world), a2a_(world) {}

    void claim(int rank) {
        std::lock_guard lock(mutex_);
        if (rank < 0 || rank >= world_)
            throw CommError("rank " + std::to_string(rank) + " outside world of size " +
                            std::to_string(world_));
        if (claimed_[rank])
            throw CommError("rank collision: rank " + std::to_string(rank) + " already joined");
        claimed_[rank] = true;
    }

    /// Generation-counted rendezvous that wakes everybody on abort.
    void arrive_and_wait() {
        std::unique_lock lock(mutex_);
        if (aborted_)
            throw CommAborted("in-process world aborted");
        const auto generation = generation_;
        if (++arrived_ == world_) {
            arrived_ = 0;
            ++generation_;
            cv_.notify_all();
            return;
        }
        cv_.wait(lock, [&] { return generation_ != generation || aborted_; });
        if (aborted_)
            throw CommAborted("in-process world aborted");
    }

    void abort() {
        std::lock_guard lock(mutex_);
        aborted_ = true;
        cv_.notify_all();
    }

    int world_;
    std::vector<bool> claimed_;
    std::vector<Bytes> gather_;
    std::vector<std::vector<Bytes>> a2a_;

  private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int arrived_ = 0;
    std::uint64_t generation_ = 0;
    bool aborted_ = false;
};

namespace {

class InProcessCommunicator final : public Communicator {
  public:
    InProcessCommunicator(int rank, std::shared_ptr<InProcessHub> hub)
        : Communicator(rank, hub->world_, Transport::InProcess), hub_(std::move(hub)) {}

    void barrier() override { hub_->arrive_and_wait(); }

  protected:
    Bytes do_all_gather(std::span<const std::byte> local) override {
        hub_->gather_[rank()] = Bytes(local.begin(), local.end());
        hub_->arrive_and_wait();
        Bytes out;
        bool mismatch = false;
        for (int r = 0; r < world(); ++r) {
            mismatch = mismatch || hub_->gather_[r].size() != local.size();
            out.insert(out.end(), hub_->gather_[r].begin(), hub_->gather_[r].end());
        }
        hub_->arrive_and_wait();
        if (mismatch)
            throw CommError("all_gather: contribution lengths differ across ranks");
        return out;
    }

    std::vector<Bytes> do_all_to_all(std::vector<Bytes> blocks) override {
        hub_->a2a_[rank()] = std::move(blocks);
        hub_->arrive_and_wait();
        std::vector<Bytes> out(world());
        for (int src = 0; src < world(); ++src)
            out[src] = std::move(hub_->a2a_[src][rank()]);
        hub_->arrive_and_wait();
        return out;
    }

    void do_broadcast(Bytes &data, int root) override {
        if (rank() == root)
            hub_->gather_[root] = data;
        hub_->arrive_and_wait();
        if (rank() != root)
            data = hub_->gather_[root];
        hub_->arrive_and_wait();
    }

  private:
    std::shared_ptr<InProcessHub> hub_;
};

} // namespace

InProcessWorld::InProcessWorld(int world) : world_(world) {
    if (!is_power_of_two(world))
        throw CommError("world size must be a power of two, got " + std::to_string(world));
    hub_ = std::make_shared<InProcessHub>(world);
}

InProcessWorld::~InProcessWorld() = default;

std::unique_ptr<Communicator> InProcessWorld::communicator(int rank) {
    hub_->claim(rank);
    return std::make_unique<InProcessCommunicator>(rank, hub_);
}

void InProcessWorld::abort() { hub_->abort(); }

void run_in_process(int world, const std::function<void(Communicator &)> &body) {
    InProcessWorld hub(world);
    std::vector<std::unique_ptr<Communicator>> comms;
    for (int r = 0; r < world; ++r)
        comms.push_back(hub.communicator(r));
    if (world == 1) {
        body(*comms[0]);
        return;
    }

    std::vector<std::exception_ptr> errors(world);
    std::vector<std::thread> threads;
    threads.reserve(world);
    for (int r = 0; r < world; ++r) {
        threads.emplace_back([&, r] {
            try {
                body(*comms[r]);
            } catch (...) {
                errors[r] = std::current_exception();
                hub.abort();
            }
        });
    }
    for (auto &t : threads)
        t.join();

    std::exception_ptr first_abort;
    for (auto &e : errors) {
        if (!e)
            continue;
        try {
            std::rethrow_exception(e);
        } catch (const CommAborted &) {
            if (!first_abort)
                first_abort = e;
        } catch (...) {
            throw;
        }
    }
    if (first_abort)
        std::rethrow_exception(first_abort);
}

std::unique_ptr<Communicator> make_single_rank_comm() {
    auto hub = std::make_shared<InProcessHub>(1);
    hub->claim(0);
    return std::make_unique<InProcessCommunicator>(0, hub);
}

} // namespace qshard
