#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "trackcast/tape.hpp"
#include "trackcast/tensor.hpp"

namespace trackcast {

enum class Init { zeros, uniform_xavier };

// Named parameter tensors plus per-parameter Adam moments and the run seed.
// Names are unique and shapes immutable after creation. Initialization is
// derived from (seed, name), so creation order does not change values.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

    Tensor& create(const std::string& name, std::vector<std::size_t> shape,
                   Init init = Init::zeros);
    bool has(const std::string& name) const { return params_.count(name) != 0; }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;

    std::vector<std::string> names() const;  // sorted
    std::size_t size() const { return params_.size(); }
    std::uint64_t seed() const { return seed_; }
    long step() const { return step_; }

    // Registers the parameter on the tape as a differentiable leaf.
    int on_tape(Tape& tape, const std::string& name) const {
        return tape.leaf(name, get(name));
    }

    // Versioned text container of (name, shape, values) triples plus the seed
    // and optimizer state; hexfloat rendering makes the round trip value-exact.
    void save(const std::string& path) const;
    static ParamStore load(const std::string& path);

    friend void adam_step_subset(ParamStore& params, const GradientMap& grads, double lr,
                                 const std::string& prefix, double beta1, double beta2,
                                 double eps_hat);

private:
    struct Moments {
        Tensor m, v;
    };

    std::uint64_t seed_;
    long step_ = 0;
    std::map<std::string, Tensor> params_;
    std::map<std::string, Moments> moments_;
};

// Bias-corrected adaptive-moment update. A parameter with no entry in
// `grads` is treated as having a zero gradient: its moments decay but a
// fresh parameter stays put.
void adam_step(ParamStore& params, const GradientMap& grads, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps_hat = 1e-8);

// Same update restricted to parameters whose name starts with `prefix`;
// everything else is left entirely untouched (state included). Used to
// freeze pretrained parts while training one head.
void adam_step_subset(ParamStore& params, const GradientMap& grads, double lr,
                      const std::string& prefix, double beta1 = 0.9, double beta2 = 0.999,
                      double eps_hat = 1e-8);

// Central-difference gradient of a scalar function of the store, the
// independent oracle every backward implementation is checked against.
GradientMap finite_diff_gradient(const std::function<double(ParamStore&)>& f, ParamStore& params,
                                 double epsilon = 1e-6);

}  // namespace trackcast
