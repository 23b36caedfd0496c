#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "trackcast/linalg.hpp"
#include "trackcast/param_store.hpp"
#include "trackcast/rng.hpp"
#include "trackcast/scene_graph.hpp"
#include "trackcast/tape.hpp"

namespace trackcast {

using GroundPoint = std::array<double, 2>;  // (x, z), meters

// Ground-plane history, oldest to newest, padded to H by repeating the
// oldest entry.
struct PastTrajectory {
    int agent_id = -1;
    std::vector<GroundPoint> points;
};

struct FutureTrajectory {
    std::vector<GroundPoint> points;  // T predicted positions
};

struct ForecastConfig {
    std::size_t latent_width = 16;  // Z
    std::size_t num_samples = 10;   // K
    std::size_t horizon = 30;       // T
    std::size_t history_len = 5;    // H
    std::size_t hidden = 64;
    double sigma_d = 2.0;  // similarity length scale, meters
    double rho = 1.0;      // quality falloff outside the prior ball
    double quality_radius = 0.0;  // 0 selects the default 2*sqrt(Z)
    double beta = 0.1;     // KL weight

    double radius() const;
    std::size_t context_width(const GnnConfig& gnn) const {
        return gnn.feature_width + 2 * history_len;
    }
};

// K decoded futures with their latent codes; traj_ids/code_ids keep the tape
// handles alive so losses can differentiate through the set.
struct TrajectorySet {
    std::vector<FutureTrajectory> trajectories;
    std::vector<std::vector<double>> codes;
    std::vector<double> context;
    std::vector<int> traj_ids;
    std::vector<int> code_ids;

    std::size_t size() const { return trajectories.size(); }
};

// L = diag(q) S diag(q) with S the trajectory similarity and q the code
// quality. Checked at construction: S symmetric with unit diagonal, q > 0,
// smallest eigenvalue of L >= -1e-9.
struct DppKernel {
    linalg::Mat l;
    linalg::Mat s;
    std::vector<double> quality;

    std::size_t size() const { return quality.size(); }
};

enum class SampleMode { iid, learned_sampler, greedy_map_over_iid };

void ensure_forecast_params(ParamStore& store, const GnnConfig& gnn, const ForecastConfig& cfg);

// Conditioning context: the post-GNN feature concatenated with the history
// re-expressed relative to the last observed position (scaled by 10 m).
int forecast_context(Tape& tape, int feature_id, const PastTrajectory& past,
                     const ForecastConfig& cfg);

PastTrajectory pad_past(PastTrajectory past, std::size_t history_len);

// Recognition network over [flatten(past); flatten(future); context].
// Returns (mu, logvar), each 1 x Z. Training mode only.
std::pair<int, int> cvae_encode(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
                                const PastTrajectory& past, const FutureTrajectory& future,
                                int context);

// z = mu + exp(logvar / 2) * noise
int reparameterize(Tape& tape, int mu, int logvar, const std::vector<double>& noise);

// Decodes [z; context] into T per-step displacements, cumulatively summed
// from the last observed position. Deterministic given (z, context).
int cvae_decode(Tape& tape, const ParamStore& store, const ForecastConfig& cfg, int z, int context,
                GroundPoint last_position);

// 0.5 * sum(mu^2 + exp(logvar) - logvar - 1)
int kl_divergence(Tape& tape, int mu, int logvar);

// Mean squared Euclidean error over the T future positions plus
// beta * kl_divergence. Noise for the reparameterization comes from `rng`.
int cvae_loss(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
              const PastTrajectory& past, const FutureTrajectory& future, int context, double beta,
              Rng& rng);

// Deterministic sampling network mapping one context to K latent codes.
std::vector<int> sampler_forward(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
                                 int context);

// Numeric kernel over a decoded set. d is the mean per-step Euclidean
// distance; S_ij = exp(-d^2 / sigma_d^2); q_i = exp(-rho * max(0, |z_i|^2 - R^2)).
DppKernel dpp_kernel(const TrajectorySet& trajs, double sigma_d, double rho, double radius);

// trace(I - (L+I)^-1) via a pivoted solve; equals sum eig/(1+eig).
double expected_cardinality(const DppKernel& kernel);

// Same kernel assembled on the tape, for differentiable objectives.
int dpp_kernel_on_tape(Tape& tape, const TrajectorySet& trajs, const ForecastConfig& cfg);

// -expected_cardinality(dpp_kernel(trajs)), end-to-end differentiable.
int diversity_loss(Tape& tape, const TrajectorySet& trajs, const ForecastConfig& cfg);

// Greedy MAP: repeatedly add the index with the largest strictly positive
// log-det gain; ties go to the lowest index. Returns selection order.
std::vector<int> greedy_map(const DppKernel& kernel);

// Draws K futures for one agent. iid samples seeded standard normals;
// learned_sampler is deterministic given the context; greedy_map_over_iid
// decodes 4K iid candidates and keeps a diverse subset (padded back to K
// with the highest-quality leftovers).
TrajectorySet sample_forecast(Tape& tape, const ParamStore& store, const ForecastConfig& cfg,
                              int context, const PastTrajectory& past, SampleMode mode,
                              std::size_t k, Rng& rng);

FutureTrajectory tape_trajectory(const Tape& tape, int traj_id);

}  // namespace trackcast
