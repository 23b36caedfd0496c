#pragma once

#include <string>

#include "trackcast/param_store.hpp"
#include "trackcast/tape.hpp"

namespace trackcast::nn {

// Affine layer; parameters live in the store as "<prefix>.w" and "<prefix>.b".
void ensure_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out);
int linear(Tape& tape, const ParamStore& store, const std::string& prefix, int x);

// Two-layer perceptron: affine, hidden activation, affine (linear output head).
struct Mlp {
    std::string prefix;
    std::size_t in = 0;
    std::size_t hidden = 0;
    std::size_t out = 0;
    OpKind hidden_act = OpKind::relu;

    void ensure(ParamStore& store) const;
    int forward(Tape& tape, const ParamStore& store, int x) const;
    // Activated hidden layer only; used where two output heads share a trunk.
    int trunk(Tape& tape, const ParamStore& store, int x) const;
};

}  // namespace trackcast::nn
