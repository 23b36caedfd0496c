#include "trackcast/param_store.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "trackcast/errors.hpp"
#include "trackcast/rng.hpp"

namespace trackcast {

Tensor& ParamStore::create(const std::string& name, std::vector<std::size_t> shape, Init init) {
    if (params_.count(name))
        throw Error("param store: duplicate parameter '" + name + "'");
    Tensor t(shape);
    if (init == Init::uniform_xavier) {
        const std::size_t fan_in = shape.size() == 2 ? shape[0] : 1;
        const std::size_t fan_out = shape.size() == 2 ? shape[1] : t.numel();
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Rng rng(Rng::mix(seed_, Rng::hash_str(name.c_str())));
        for (double& v : t.data) v = rng.uniform(-bound, bound);
    }
    moments_[name] = {Tensor::zeros_like(t), Tensor::zeros_like(t)};
    return params_[name] = std::move(t);
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("param store: unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("param store: unknown parameter '" + name + "'");
    return it->second;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(params_.size());
    for (const auto& [name, _] : params_) out.push_back(name);
    return out;
}

void adam_step(ParamStore& params, const GradientMap& grads, double lr, double beta1, double beta2,
               double eps_hat) {
    adam_step_subset(params, grads, lr, "", beta1, beta2, eps_hat);
}

void adam_step_subset(ParamStore& params, const GradientMap& grads, double lr,
                      const std::string& prefix, double beta1, double beta2, double eps_hat) {
    params.step_ += 1;
    const double t = static_cast<double>(params.step_);
    const double bc1 = 1.0 - std::pow(beta1, t);
    const double bc2 = 1.0 - std::pow(beta2, t);
    for (auto& [name, theta] : params.params_) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        const auto git = grads.find(name);
        auto& mom = params.moments_[name];
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            const double g = git == grads.end() ? 0.0 : git->second.data[i];
            mom.m.data[i] = beta1 * mom.m.data[i] + (1.0 - beta1) * g;
            mom.v.data[i] = beta2 * mom.v.data[i] + (1.0 - beta2) * g * g;
            const double m_hat = mom.m.data[i] / bc1;
            const double v_hat = mom.v.data[i] / bc2;
            theta.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_hat);
        }
    }
}

GradientMap finite_diff_gradient(const std::function<double(ParamStore&)>& f, ParamStore& params,
                                 double epsilon) {
    GradientMap out;
    for (const std::string& name : params.names()) {
        Tensor& theta = params.get(name);
        Tensor grad = Tensor::zeros_like(theta);
        for (std::size_t i = 0; i < theta.numel(); ++i) {
            const double saved = theta.data[i];
            theta.data[i] = saved + epsilon;
            const double fp = f(params);
            theta.data[i] = saved - epsilon;
            const double fm = f(params);
            theta.data[i] = saved;
            grad.data[i] = (fp - fm) / (2.0 * epsilon);
        }
        out[name] = std::move(grad);
    }
    return out;
}

namespace {

constexpr const char* kMagic = "trackcast.checkpoint.v1";

void write_values(std::FILE* f, const char* tag, const Tensor& t) {
    std::fprintf(f, "%s", tag);
    for (double v : t.data) std::fprintf(f, " %a", v);
    std::fprintf(f, "\n");
}

std::vector<double> parse_values(const std::string& line, const char* tag, std::size_t expect,
                                 const std::string& path, long line_no) {
    std::istringstream ss(line);
    std::string head;
    ss >> head;
    if (head != tag) throw ParseError(path, line_no, "expected '" + std::string(tag) + "' row");
    std::vector<double> vals;
    vals.reserve(expect);
    std::string tok;
    while (ss >> tok) {
        char* end = nullptr;
        const double v = std::strtod(tok.c_str(), &end);
        if (end == tok.c_str() || *end != '\0')
            throw ParseError(path, line_no, "bad float '" + tok + "'");
        vals.push_back(v);
    }
    if (vals.size() != expect)
        throw ParseError(path, line_no,
                         "expected " + std::to_string(expect) + " values, got " +
                             std::to_string(vals.size()));
    return vals;
}

}  // namespace

void ParamStore::save(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot write checkpoint: " + path);
    std::fprintf(f, "%s\n", kMagic);
    std::fprintf(f, "seed %" PRIu64 "\n", seed_);
    std::fprintf(f, "step %ld\n", step_);
    for (const auto& [name, t] : params_) {
        std::fprintf(f, "param %s %zu", name.c_str(), t.shape.size());
        for (std::size_t d : t.shape) std::fprintf(f, " %zu", d);
        std::fprintf(f, "\n");
        write_values(f, "v", t);
        const auto& mom = moments_.at(name);
        write_values(f, "m", mom.m);
        write_values(f, "s", mom.v);
    }
    std::fprintf(f, "end\n");
    std::fclose(f);
}

ParamStore ParamStore::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read checkpoint: " + path);
    std::string line;
    long line_no = 0;
    auto next_line = [&]() -> std::string& {
        if (!std::getline(in, line)) throw ParseError(path, line_no, "unexpected end of file");
        ++line_no;
        return line;
    };

    if (next_line() != kMagic) throw ParseError(path, line_no, "bad checkpoint magic");

    std::uint64_t seed = 0;
    {
        std::istringstream ss(next_line());
        std::string key;
        if (!(ss >> key >> seed) || key != "seed")
            throw ParseError(path, line_no, "expected 'seed <n>'");
    }
    ParamStore store(seed);
    {
        std::istringstream ss(next_line());
        std::string key;
        if (!(ss >> key >> store.step_) || key != "step")
            throw ParseError(path, line_no, "expected 'step <n>'");
    }

    while (true) {
        next_line();
        if (line == "end") break;
        std::istringstream ss(line);
        std::string key, name;
        std::size_t rank = 0;
        if (!(ss >> key >> name >> rank) || key != "param")
            throw ParseError(path, line_no, "expected 'param <name> <rank> <dims...>'");
        std::vector<std::size_t> shape(rank);
        for (std::size_t i = 0; i < rank; ++i)
            if (!(ss >> shape[i])) throw ParseError(path, line_no, "missing dimension");
        Tensor t(shape);
        const std::size_t n = t.numel();
        t.data = parse_values(next_line(), "v", n, path, line_no);
        Moments mom{Tensor(shape), Tensor(shape)};
        mom.m.data = parse_values(next_line(), "m", n, path, line_no);
        mom.v.data = parse_values(next_line(), "s", n, path, line_no);
        if (store.params_.count(name)) throw ParseError(path, line_no, "duplicate param " + name);
        store.params_[name] = std::move(t);
        store.moments_[name] = std::move(mom);
    }
    return store;
}

}  // namespace trackcast
