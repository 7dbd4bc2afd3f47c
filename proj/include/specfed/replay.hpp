#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "specfed/rng.hpp"

namespace specfed {

/// What an agent sees at the top of a slot. The initial marker is the
/// reserved state at the start of an episode, before any channel
/// information exists (nothing was allocated in a previous slot yet).
struct Observation {
    std::uint32_t bits = 0;  // bit m = subchannel m observed occupied
    bool initial = false;

    bool operator==(const Observation&) const = default;
};

/// Action 0 is idle; action 1 + m transmits on subchannel m next slot.
inline constexpr int kIdleAction = 0;

/// Admissible-action bitmask for an observation: idle always, plus every
/// subchannel the observation marks vacant. Bit 0 = idle, bit 1+m = channel m.
inline std::uint32_t admissible_mask(const Observation& obs, int num_subchannels) {
    std::uint32_t mask = 1u;  // idle
    if (obs.initial) return mask;
    for (int m = 0; m < num_subchannels; ++m)
        if (!((obs.bits >> m) & 1u)) mask |= (1u << (m + 1));
    return mask;
}

/// One transition for replay-based Q-learning.
struct Experience {
    Observation state;
    int action = kIdleAction;
    double reward = 0.0;
    Observation next_state;
    std::uint32_t next_mask = 1u;  // admissible actions at next_state
};

/// Bounded FIFO store with uniform sampling.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
        if (capacity_ == 0) throw std::invalid_argument("replay capacity must be positive");
        data_.reserve(capacity_);
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }

    void push(Experience e) {
        if (data_.size() < capacity_) {
            data_.push_back(std::move(e));
        } else {
            data_[head_] = std::move(e);  // overwrite the oldest entry
            head_ = (head_ + 1) % capacity_;
        }
    }

    const Experience& at(std::size_t i) const { return data_[i]; }

    /// Uniform draw (with replacement) of batch_size stored experiences.
    std::vector<const Experience*> sample(std::size_t batch_size, RandomStream& rng) const {
        if (data_.empty()) throw std::runtime_error("replay buffer is empty");
        std::vector<const Experience*> out;
        out.reserve(batch_size);
        for (std::size_t i = 0; i < batch_size; ++i)
            out.push_back(&data_[static_cast<std::size_t>(rng.uniform_int(data_.size()))]);
        return out;
    }

private:
    std::size_t capacity_;
    std::size_t head_ = 0;  // next eviction slot once full
    std::vector<Experience> data_;
};

}  // namespace specfed
