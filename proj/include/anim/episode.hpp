#pragma once

#include <Eigen/Dense>
#include <deque>
#include <vector>

#include "anim/errors.hpp"
#include "anim/signals.hpp"

namespace anim {

// One rollout: per-step objective o, unit action a, measured description d',
// and the ideal unit action m from the motion clip being imitated. All four
// sequences share the episode length.
struct EpisodeRecord {
    std::vector<Eigen::Matrix<double, sig::kObjectiveDim, 1>> o;
    std::vector<Eigen::VectorXd> a;
    std::vector<Eigen::Matrix<double, sig::kDescriptionDim, 1>> d_real;
    std::vector<Eigen::VectorXd> m;

    int length() const { return static_cast<int>(o.size()); }

    void validate() const {
        if (o.empty()) throw ValidationError("episode is empty");
        if (a.size() != o.size() || d_real.size() != o.size() || m.size() != o.size()) {
            throw ValidationError("episode sequences disagree on length");
        }
    }
};

// Bounded FIFO store of episodes; eviction is oldest-first.
class EpisodeBuffer {
public:
    explicit EpisodeBuffer(int capacity) : capacity_(capacity) {
        if (capacity < 1) throw ContractError("buffer capacity must be positive");
    }

    void push(EpisodeRecord episode) {
        episode.validate();
        episodes_.push_back(std::move(episode));
        while (static_cast<int>(episodes_.size()) > capacity_) episodes_.pop_front();
    }

    int size() const { return static_cast<int>(episodes_.size()); }
    int capacity() const { return capacity_; }
    bool empty() const { return episodes_.empty(); }
    const EpisodeRecord& at(int i) const { return episodes_.at(i); }

private:
    std::deque<EpisodeRecord> episodes_;
    int capacity_;
};

} // namespace anim
