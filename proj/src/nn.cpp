#include "trackcast/nn.hpp"

namespace trackcast::nn {

void ensure_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out) {
    if (!store.has(prefix + ".w")) store.create(prefix + ".w", {in, out}, Init::uniform_xavier);
    if (!store.has(prefix + ".b")) store.create(prefix + ".b", {1, out}, Init::zeros);
}

int linear(Tape& tape, const ParamStore& store, const std::string& prefix, int x) {
    const int w = store.on_tape(tape, prefix + ".w");
    const int b = store.on_tape(tape, prefix + ".b");
    return ops::add(tape, ops::matmul(tape, x, w), b);
}

void Mlp::ensure(ParamStore& store) const {
    ensure_linear(store, prefix + ".l1", in, hidden);
    ensure_linear(store, prefix + ".l2", hidden, out);
}

int Mlp::trunk(Tape& tape, const ParamStore& store, int x) const {
    return tape.apply(hidden_act, {linear(tape, store, prefix + ".l1", x)});
}

int Mlp::forward(Tape& tape, const ParamStore& store, int x) const {
    return linear(tape, store, prefix + ".l2", trunk(tape, store, x));
}

}  // namespace trackcast::nn
