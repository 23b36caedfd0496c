#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "trackcast/param_store.hpp"
#include "trackcast/tape.hpp"

namespace trackcast {

enum class NodeSource { existing_track, new_detection };

// Pose, extent and velocity of one agent node.
struct AgentState {
    double x = 0, y = 0, z = 0;
    double yaw = 0;
    double l = 0, w = 0, h = 0;
    double vx = 0, vy = 0, vz = 0;
};

struct AgentNode {
    int id = 0;  // stable within a frame; aggregation order is sorted by id
    NodeSource source = NodeSource::new_detection;
    AgentState state;
    // Past positions, oldest to newest. Shorter histories are padded by
    // repeating the oldest entry at encode time.
    std::vector<std::array<double, 3>> history;
    int feature = -1;  // tape node id of the current feature, 1 x D
};

// Relative geometry of a directed edge i -> j; (j, i) carries the negated
// displacement. dist is the Euclidean norm of the displacement.
struct EdgeAttr {
    double dx = 0, dy = 0, dz = 0;
    double dyaw = 0;
    double dist = 0;
};

struct AgentGraph {
    std::vector<AgentNode> nodes;
    // neighbors[i]: (node index, edge attr i->j), sorted by neighbor node id.
    std::vector<std::vector<std::pair<int, EdgeAttr>>> neighbors;
    int layer_index = 0;
    std::array<double, 3> centroid{0, 0, 0};  // input-normalization origin

    std::size_t edge_count() const;  // undirected edges
};

struct GnnConfig {
    std::size_t feature_width = 32;   // D
    std::size_t message_width = 32;   // D_msg
    std::size_t layers = 2;           // L
    std::size_t history_len = 5;      // H
    double radius_m = 30.0;

    static constexpr std::size_t kEdgeAttrWidth = 5;
    std::size_t encoder_input_width() const { return 10 + 2 * history_len + 1; }
};

// Creates encoder and per-layer message-passing weights if absent.
// Layer l uses gnn.l<l>.{w_self,w_msg,w_out,bias}.
void ensure_gnn_params(ParamStore& store, const GnnConfig& cfg);

// Normalized encoder input: positions centered on the scene centroid and
// divided by 10 m, plus yaw, extents, velocity, flattened (x, z) history and
// the track/detection source flag.
std::vector<double> node_input_vector(const AgentNode& node, const std::array<double, 3>& centroid,
                                      const GnnConfig& cfg);

// Pre-interaction embedding: two-layer perceptron with tanh hidden layer.
int encode_node(Tape& tape, const ParamStore& store, const GnnConfig& cfg, const AgentNode& node,
                const std::array<double, 3>& centroid);

// Undirected radius graph over node centers; radius <= 0 means complete.
AgentGraph build_graph(std::vector<AgentNode> nodes, double radius_m);

// Runs encode_node for every node of a fresh graph.
void encode_graph(Tape& tape, const ParamStore& store, const GnnConfig& cfg, AgentGraph& graph);

// One aggregation layer:
//   h'_i = relu(h_i W_self + (sum_j relu([h_j ; e_ij] W_msg)) W_out + bias)
// Nodes without neighbors use a zero aggregate. Neighbor sums run in
// ascending neighbor-id order so results are permutation-equivariant.
void message_pass(Tape& tape, const ParamStore& store, const GnnConfig& cfg, AgentGraph& graph);

// Encode (when features are absent) and apply all L layers.
void run_gnn(Tape& tape, const ParamStore& store, const GnnConfig& cfg, AgentGraph& graph);

}  // namespace trackcast
