#ifndef METANO_PARAMS_HPP
#define METANO_PARAMS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace metano {

// Trainable-parameter groups: lifting / iterative / projection.
enum class Group { Lift, Iter, Proj };

struct ParamSlot {
    std::string name;
    Group group;
    std::vector<double> value;
    std::vector<double> grad; // zeroed at the start of each backward pass
};

// Flat registry of parameter slots shared by tapes, optimizers, and I/O.
class ParamStore {
public:
    int add(std::string name, Group group, std::size_t size, double fill = 0.0) {
        slots_.push_back({std::move(name), group, std::vector<double>(size, fill),
                          std::vector<double>(size, 0.0)});
        return static_cast<int>(slots_.size()) - 1;
    }

    ParamSlot& slot(int id) { return slots_.at(static_cast<size_t>(id)); }
    const ParamSlot& slot(int id) const { return slots_.at(static_cast<size_t>(id)); }
    int count() const { return static_cast<int>(slots_.size()); }

    void zero_grads() {
        for (auto& s : slots_)
            for (auto& g : s.grad) g = 0.0;
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& s : slots_) n += s.value.size();
        return n;
    }

private:
    std::vector<ParamSlot> slots_;
};

} // namespace metano

#endif
