#include "trackcast/forecast.hpp"

#include <algorithm>
#include <cmath>

#include "trackcast/errors.hpp"
#include "trackcast/nn.hpp"

namespace trackcast {

namespace {

constexpr double kPosScale = 10.0;

nn::Mlp encoder_trunk(const ForecastConfig& cfg, std::size_t ctx_width) {
    const std::size_t in = 2 * cfg.history_len + 2 * cfg.horizon + ctx_width;
    return {"cvae.enc", in, cfg.hidden, cfg.latent_width, OpKind::relu};
}

nn::Mlp decoder_mlp(const ForecastConfig& cfg, std::size_t ctx_width) {
    return {"cvae.dec", cfg.latent_width + ctx_width, cfg.hidden, 2 * cfg.horizon, OpKind::relu};
}

nn::Mlp sampler_mlp(const ForecastConfig& cfg, std::size_t ctx_width) {
    return {"samp", ctx_width, cfg.hidden, cfg.num_samples * cfg.latent_width, OpKind::relu};
}

std::vector<double> flatten_relative(const std::vector<GroundPoint>& pts, GroundPoint origin) {
    std::vector<double> out;
    out.reserve(2 * pts.size());
    for (const auto& p : pts) {
        out.push_back((p[0] - origin[0]) / kPosScale);
        out.push_back((p[1] - origin[1]) / kPosScale);
    }
    return out;
}

double mean_step_distance(const FutureTrajectory& a, const FutureTrajectory& b) {
    if (a.points.size() != b.points.size())
        throw ShapeError("trajectory distance: horizon mismatch");
    double acc = 0.0;
    for (std::size_t t = 0; t < a.points.size(); ++t) {
        const double dx = a.points[t][0] - b.points[t][0];
        const double dz = a.points[t][1] - b.points[t][1];
        acc += std::sqrt(dx * dx + dz * dz);
    }
    return acc / static_cast<double>(a.points.size());
}

}  // namespace

double ForecastConfig::radius() const {
    return quality_radius > 0.0 ? quality_radius
                                : 2.0 * std::sqrt(static_cast<double>(latent_width));
}

void ensure_forecast_params(ParamStore& store, const GnnConfig& gnn, const ForecastConfig& cfg) {
    const std::size_t ctx = cfg.context_width(gnn);
    const nn::Mlp enc = encoder_trunk(cfg, ctx);
    nn::ensure_linear(store, enc.prefix + ".l1", enc.in, enc.hidden);
    nn::ensure_linear(store, "cvae.enc.mu", cfg.hidden, cfg.latent_width);
    nn::ensure_linear(store, "cvae.enc.logvar", cfg.hidden, cfg.latent_width);
    decoder_mlp(cfg, ctx).ensure(store);
    sampler_mlp(cfg, ctx).ensure(store);
}

PastTrajectory pad_past(PastTrajectory past, std::size_t history_len) {
    if (past.points.empty()) throw Error("pad_past: empty history");
    while (past.points.size() < history_len) past.points.insert(past.points.begin(), past.points.front());
    if (past.points.size() > history_len)
        past.points.erase(past.points.begin(),
                          past.points.begin() + static_cast<long>(past.points.size() - history_len));
    return past;
}

int forecast_context(Tape& tape, int feature_id, const PastTrajectory& past,
                     const ForecastConfig& cfg) {
    const PastTrajectory padded = pad_past(past, cfg.history_len);
    const GroundPoint last = padded.points.back();
    const int hist = tape.constant(Tensor::row(flatten_relative(padded.points, last)));
    return ops::concat(tape, {feature_id, hist});
}

std::pair<int, int> cvae_encode(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
                                const PastTrajectory& past, const FutureTrajectory& future,
                                int context) {
    if (future.points.size() != cfg.horizon)
        throw ShapeError("cvae_encode: future has " + std::to_string(future.points.size()) +
                         " steps, expected " + std::to_string(cfg.horizon));
    const PastTrajectory padded = pad_past(past, cfg.history_len);
    const GroundPoint last = padded.points.back();
    const int past_in = tape.constant(Tensor::row(flatten_relative(padded.points, last)));
    const int future_in = tape.constant(Tensor::row(flatten_relative(future.points, last)));
    const int x = ops::concat(tape, {past_in, future_in, context});

    const int hidden = ops::relu(tape, nn::linear(tape, store, "cvae.enc.l1", x));
    const int mu = nn::linear(tape, store, "cvae.enc.mu", hidden);
    const int logvar = nn::linear(tape, store, "cvae.enc.logvar", hidden);
    return {mu, logvar};
}

int reparameterize(Tape& tape, int mu, int logvar, const std::vector<double>& noise) {
    const int eps = tape.constant(Tensor::row(noise));
    const int std_dev = ops::exp(tape, ops::scale(tape, logvar, 0.5));
    return ops::add(tape, mu, ops::mul(tape, std_dev, eps));
}

int cvae_decode(Tape& tape, const ParamStore& store, const ForecastConfig& cfg, int z, int context,
                GroundPoint last_position) {
    const std::size_t ctx_width = tape.value(context).cols();
    const int disp = decoder_mlp(cfg, ctx_width).forward(tape, store, ops::concat(tape, {z, context}));

    // Cumulative sum from the last observed position: positions = disp * M + tile(last).
    const std::size_t t2 = 2 * cfg.horizon;
    Tensor cumsum({t2, t2});
    for (std::size_t s = 0; s < cfg.horizon; ++s)
        for (std::size_t t = s; t < cfg.horizon; ++t) {
            cumsum.at(2 * s, 2 * t) = 1.0;
            cumsum.at(2 * s + 1, 2 * t + 1) = 1.0;
        }
    Tensor base({1, t2});
    for (std::size_t t = 0; t < cfg.horizon; ++t) {
        base.at(0, 2 * t) = last_position[0];
        base.at(0, 2 * t + 1) = last_position[1];
    }
    return ops::add(tape, ops::matmul(tape, disp, tape.constant(std::move(cumsum))),
                    tape.constant(std::move(base)));
}

int kl_divergence(Tape& tape, int mu, int logvar) {
    const int one = tape.constant(Tensor::scalar(1.0));
    const int var = ops::exp(tape, logvar);
    const int terms = ops::sub(tape, ops::sub(tape, ops::add(tape, ops::square(tape, mu), var), logvar), one);
    return ops::scale(tape, ops::reduce_sum(tape, terms), 0.5);
}

int cvae_loss(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
              const PastTrajectory& past, const FutureTrajectory& future, int context, double beta,
              Rng& rng) {
    const auto [mu, logvar] = cvae_encode(tape, store, cfg, past, future, context);
    std::vector<double> noise(cfg.latent_width);
    for (double& v : noise) v = rng.normal();
    const int z = reparameterize(tape, mu, logvar, noise);

    const PastTrajectory padded = pad_past(past, cfg.history_len);
    const int pred = cvae_decode(tape, store, cfg, z, context, padded.points.back());

    std::vector<double> target;
    target.reserve(2 * cfg.horizon);
    for (const auto& p : future.points) {
        target.push_back(p[0]);
        target.push_back(p[1]);
    }
    const int diff = ops::sub(tape, pred, tape.constant(Tensor::row(target)));
    // mean over T of squared step distance = sum of squared coords / T
    const int recon = ops::scale(tape, ops::reduce_sum(tape, ops::square(tape, diff)),
                                 1.0 / static_cast<double>(cfg.horizon));
    if (beta == 0.0) return recon;
    return ops::add(tape, recon, ops::scale(tape, kl_divergence(tape, mu, logvar), beta));
}

std::vector<int> sampler_forward(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
                                 int context) {
    const std::size_t ctx_width = tape.value(context).cols();
    const int flat = sampler_mlp(cfg, ctx_width).forward(tape, store, context);
    const int stacked = tape.reshape(flat, {cfg.num_samples, cfg.latent_width});
    std::vector<int> codes;
    codes.reserve(cfg.num_samples);
    for (std::size_t k = 0; k < cfg.num_samples; ++k) {
        Tensor pick({1, cfg.num_samples});
        pick.at(0, k) = 1.0;
        codes.push_back(ops::matmul(tape, tape.constant(std::move(pick)), stacked));
    }
    return codes;
}

namespace {

// Kernel assembly without the PSD assert. Gaussian similarity over the
// mean-per-step metric can dip a hair below PSD for near-duplicate sample
// sets; greedy selection tolerates that, so the oversampling path uses this
// directly while the public constructor keeps the strict check.
DppKernel dpp_kernel_unchecked(const TrajectorySet& trajs, double sigma_d, double rho,
                               double radius) {
    const std::size_t k = trajs.size();
    if (k < 2) throw Error("dpp_kernel: need at least 2 samples");
    for (const auto& traj : trajs.trajectories)
        for (const auto& p : traj.points)
            if (!std::isfinite(p[0]) || !std::isfinite(p[1]))
                throw DomainError("dpp_kernel: non-finite trajectory");

    DppKernel kernel;
    kernel.s = linalg::Mat(k, k);
    kernel.l = linalg::Mat(k, k);
    kernel.quality.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        double norm2 = 0.0;
        for (double v : trajs.codes[i]) norm2 += v * v;
        const double excess = std::max(0.0, norm2 - radius * radius);
        kernel.quality[i] = std::exp(-rho * excess);
    }
    for (std::size_t i = 0; i < k; ++i) {
        kernel.s(i, i) = 1.0;
        for (std::size_t j = i + 1; j < k; ++j) {
            const double d = mean_step_distance(trajs.trajectories[i], trajs.trajectories[j]);
            const double s = std::exp(-(d * d) / (sigma_d * sigma_d));
            kernel.s(i, j) = s;
            kernel.s(j, i) = s;
        }
    }
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            kernel.l(i, j) = kernel.quality[i] * kernel.s(i, j) * kernel.quality[j];
    return kernel;
}

}  // namespace

DppKernel dpp_kernel(const TrajectorySet& trajs, double sigma_d, double rho, double radius) {
    DppKernel kernel = dpp_kernel_unchecked(trajs, sigma_d, rho, radius);
    const std::vector<double> eig = linalg::symmetric_eigenvalues(kernel.l);
    if (!eig.empty() && eig.front() < -1e-9)
        throw NumericalError("dpp_kernel: kernel not PSD, min eigenvalue " +
                             std::to_string(eig.front()));
    return kernel;
}

double expected_cardinality(const DppKernel& kernel) {
    const std::size_t k = kernel.size();
    linalg::Mat a = kernel.l;
    for (std::size_t i = 0; i < k; ++i) a(i, i) += 1.0;
    const linalg::Mat inv = linalg::lu_inverse(a);
    return static_cast<double>(k) - linalg::trace(inv);
}

int dpp_kernel_on_tape(Tape& tape, const TrajectorySet& trajs, const ForecastConfig& cfg) {
    const std::size_t k = trajs.size();
    if (k < 2) throw Error("dpp_kernel: need at least 2 samples");
    const std::size_t t = cfg.horizon;
    const double r = cfg.radius();

    // Constant selector summing (x,z) coordinate pairs per step.
    Tensor pair_sum({2 * t, t});
    for (std::size_t s = 0; s < t; ++s) {
        pair_sum.at(2 * s, s) = 1.0;
        pair_sum.at(2 * s + 1, s) = 1.0;
    }
    const int pair_sum_id = tape.constant(std::move(pair_sum));

    std::vector<int> quality(k);
    for (std::size_t i = 0; i < k; ++i) {
        const int norm2 = ops::reduce_sum(tape, ops::square(tape, trajs.code_ids[i]));
        const int excess = ops::relu(tape, ops::add_const(tape, norm2, -(r * r)));
        quality[i] = ops::exp(tape, ops::scale(tape, excess, -cfg.rho));
    }

    std::vector<std::vector<int>> sim(k, std::vector<int>(k, -1));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const int diff = ops::sub(tape, trajs.traj_ids[i], trajs.traj_ids[j]);
            const int step_sq = ops::matmul(tape, ops::square(tape, diff), pair_sum_id);
            const int mean_d = ops::reduce_mean(tape, ops::sqrt(tape, step_sq));
            const int s = ops::exp(tape, ops::scale(tape, ops::square(tape, mean_d),
                                                    -1.0 / (cfg.sigma_d * cfg.sigma_d)));
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }

    std::vector<int> entries;
    entries.reserve(k * k);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const int qq = ops::mul(tape, quality[i], quality[j]);
            entries.push_back(i == j ? qq : ops::mul(tape, qq, sim[i][j]));
        }
    return tape.reshape(ops::concat(tape, entries), {k, k});
}

int diversity_loss(Tape& tape, const TrajectorySet& trajs, const ForecastConfig& cfg) {
    const int kernel = dpp_kernel_on_tape(tape, trajs, cfg);
    return ops::scale(tape, ops::dpp_expected_cardinality(tape, kernel), -1.0);
}

std::vector<int> greedy_map(const DppKernel& kernel) {
    const std::size_t k = kernel.size();
    std::vector<int> selected;
    std::vector<char> in_set(k, 0);
    double current_logdet = 0.0;  // log det of the empty minor

    while (selected.size() < k) {
        int best_idx = -1;
        double best_gain = 0.0;
        double best_logdet = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            if (in_set[i]) continue;
            const std::size_t m = selected.size() + 1;
            linalg::Mat minor(m, m);
            std::vector<int> idx = selected;
            idx.push_back(static_cast<int>(i));
            for (std::size_t a = 0; a < m; ++a)
                for (std::size_t b = 0; b < m; ++b)
                    minor(a, b) = kernel.l(static_cast<std::size_t>(idx[a]),
                                           static_cast<std::size_t>(idx[b]));
            double ld;
            try {
                ld = linalg::logdet_spd(minor);
            } catch (const NumericalError&) {
                continue;  // singular minor: gain -inf
            }
            const double gain = ld - current_logdet;
            if (gain > best_gain) {  // strict: ties keep the lowest index
                best_idx = static_cast<int>(i);
                best_gain = gain;
                best_logdet = ld;
            }
        }
        if (best_idx < 0 || best_gain <= 0.0) break;  // strictly positive gain rule
        selected.push_back(best_idx);
        in_set[static_cast<std::size_t>(best_idx)] = 1;
        current_logdet = best_logdet;
    }
    return selected;
}

FutureTrajectory tape_trajectory(const Tape& tape, int traj_id) {
    const Tensor& v = tape.value(traj_id);
    FutureTrajectory out;
    out.points.resize(v.numel() / 2);
    for (std::size_t t = 0; t < out.points.size(); ++t)
        out.points[t] = {v.data[2 * t], v.data[2 * t + 1]};
    return out;
}

namespace {

TrajectorySet decode_codes(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
                           int context, GroundPoint last, const std::vector<int>& code_ids) {
    TrajectorySet set;
    set.context = tape.value(context).data;
    for (int z : code_ids) {
        const int traj = cvae_decode(tape, store, cfg, z, context, last);
        set.code_ids.push_back(z);
        set.traj_ids.push_back(traj);
        set.codes.push_back(tape.value(z).data);
        set.trajectories.push_back(tape_trajectory(tape, traj));
    }
    return set;
}

}  // namespace

TrajectorySet sample_forecast(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
                              int context, const PastTrajectory& past, SampleMode mode,
                              std::size_t k, Rng& rng) {
    const GroundPoint last = pad_past(past, cfg.history_len).points.back();

    if (mode == SampleMode::learned_sampler) {
        if (k != cfg.num_samples)
            throw Error("sample_forecast: learned sampler emits exactly " +
                        std::to_string(cfg.num_samples) + " samples");
        return decode_codes(tape, store, cfg, context, last,
                            sampler_forward(tape, store, cfg, context));
    }

    auto draw_codes = [&](std::size_t count) {
        std::vector<int> ids;
        for (std::size_t i = 0; i < count; ++i) {
            std::vector<double> z(cfg.latent_width);
            for (double& v : z) v = rng.normal();
            ids.push_back(tape.constant(Tensor::row(z)));
        }
        return ids;
    };

    if (mode == SampleMode::iid)
        return decode_codes(tape, store, cfg, context, last, draw_codes(k));

    // greedy_map_over_iid: oversample, select a diverse subset, pad by quality.
    TrajectorySet pool = decode_codes(tape, store, cfg, context, last, draw_codes(4 * k));
    const DppKernel kernel = dpp_kernel_unchecked(pool, cfg.sigma_d, cfg.rho, cfg.radius());
    std::vector<int> chosen = greedy_map(kernel);
    if (chosen.size() > k) chosen.resize(k);
    if (chosen.size() < k) {
        std::vector<char> used(pool.size(), 0);
        for (int i : chosen) used[static_cast<std::size_t>(i)] = 1;
        std::vector<int> rest;
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (!used[i]) rest.push_back(static_cast<int>(i));
        std::stable_sort(rest.begin(), rest.end(), [&](int a, int b) {
            return kernel.quality[static_cast<std::size_t>(a)] >
                   kernel.quality[static_cast<std::size_t>(b)];
        });
        for (int i : rest) {
            if (chosen.size() == k) break;
            chosen.push_back(i);
        }
    }
    TrajectorySet out;
    out.context = pool.context;
    for (int i : chosen) {
        const std::size_t idx = static_cast<std::size_t>(i);
        out.trajectories.push_back(pool.trajectories[idx]);
        out.codes.push_back(pool.codes[idx]);
        out.traj_ids.push_back(pool.traj_ids[idx]);
        out.code_ids.push_back(pool.code_ids[idx]);
    }
    return out;
}

}  // namespace trackcast
