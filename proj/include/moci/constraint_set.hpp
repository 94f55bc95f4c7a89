#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace moci {

// Subset of states treated as forbidden, over a fixed state universe.
class ConstraintSet {
  public:
    ConstraintSet() = default;

    explicit ConstraintSet(int num_states)
        : mask_(static_cast<std::size_t>(num_states), 0) {}

    static ConstraintSet from_states(int num_states, std::span<const int> states) {
        ConstraintSet c(num_states);
        for (int s : states)
            c.add(s);
        return c;
    }

    bool contains(int s) const { return mask_[static_cast<std::size_t>(s)] != 0; }

    void add(int s) {
        auto& slot = mask_.at(static_cast<std::size_t>(s));
        if (!slot) {
            slot = 1;
            ++count_;
        }
    }

    int size() const { return count_; }
    bool empty() const { return count_ == 0; }
    int universe() const { return static_cast<int>(mask_.size()); }

    // Members in ascending row-major order.
    std::vector<int> states() const {
        std::vector<int> out;
        out.reserve(static_cast<std::size_t>(count_));
        for (int s = 0; s < universe(); ++s)
            if (mask_[static_cast<std::size_t>(s)])
                out.push_back(s);
        return out;
    }

    friend bool operator==(const ConstraintSet& a, const ConstraintSet& b) {
        return a.mask_ == b.mask_;
    }

  private:
    std::vector<std::uint8_t> mask_;
    int count_ = 0;
};

} // namespace moci
