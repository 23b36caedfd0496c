#include "trackcast/scene_graph.hpp"

#include <algorithm>
#include <cmath>

#include "trackcast/errors.hpp"
#include "trackcast/nn.hpp"

namespace trackcast {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kPosScale = 10.0;  // meters; keeps tanh inputs in range

nn::Mlp encoder_mlp(const GnnConfig& cfg) {
    return {"gnn.enc", cfg.encoder_input_width(), cfg.feature_width, cfg.feature_width,
            OpKind::tanh_fn};
}

std::vector<double> edge_feature(const EdgeAttr& e) {
    return {e.dx / kPosScale, e.dy / kPosScale, e.dz / kPosScale, e.dyaw, e.dist / kPosScale};
}

}  // namespace

std::size_t AgentGraph::edge_count() const {
    std::size_t n = 0;
    for (const auto& nbrs : neighbors) n += nbrs.size();
    return n / 2;
}

void ensure_gnn_params(ParamStore& store, const GnnConfig& cfg) {
    encoder_mlp(cfg).ensure(store);
    const std::size_t d = cfg.feature_width;
    const std::size_t dm = cfg.message_width;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const std::string p = "gnn.l" + std::to_string(l);
        if (!store.has(p + ".w_self")) store.create(p + ".w_self", {d, d}, Init::uniform_xavier);
        if (!store.has(p + ".w_msg"))
            store.create(p + ".w_msg", {d + GnnConfig::kEdgeAttrWidth, dm}, Init::uniform_xavier);
        if (!store.has(p + ".w_out")) store.create(p + ".w_out", {dm, d}, Init::uniform_xavier);
        if (!store.has(p + ".bias")) store.create(p + ".bias", {1, d}, Init::zeros);
    }
}

std::vector<double> node_input_vector(const AgentNode& node, const std::array<double, 3>& centroid,
                                      const GnnConfig& cfg) {
    const AgentState& s = node.state;
    std::vector<double> in;
    in.reserve(cfg.encoder_input_width());
    in.push_back((s.x - centroid[0]) / kPosScale);
    in.push_back((s.y - centroid[1]) / kPosScale);
    in.push_back((s.z - centroid[2]) / kPosScale);
    in.push_back(s.yaw / kPi);
    in.push_back(s.l / kPosScale);
    in.push_back(s.w / kPosScale);
    in.push_back(s.h / kPosScale);
    in.push_back(s.vx / kPosScale);
    in.push_back(s.vy / kPosScale);
    in.push_back(s.vz / kPosScale);

    // History padded to H by repeating the oldest entry; an empty history
    // falls back to the current position.
    std::vector<std::array<double, 3>> hist = node.history;
    if (hist.empty()) hist.push_back({s.x, s.y, s.z});
    while (hist.size() < cfg.history_len) hist.insert(hist.begin(), hist.front());
    if (hist.size() > cfg.history_len)
        hist.erase(hist.begin(), hist.begin() + static_cast<long>(hist.size() - cfg.history_len));
    for (const auto& p : hist) {
        in.push_back((p[0] - centroid[0]) / kPosScale);
        in.push_back((p[2] - centroid[2]) / kPosScale);
    }
    in.push_back(node.source == NodeSource::existing_track ? 1.0 : 0.0);
    return in;
}

int encode_node(Tape& tape, const ParamStore& store, const GnnConfig& cfg, const AgentNode& node,
                const std::array<double, 3>& centroid) {
    Tensor in = Tensor::row(node_input_vector(node, centroid, cfg));
    check_finite(in, "encode_node input");
    return encoder_mlp(cfg).forward(tape, store, tape.constant(std::move(in)));
}

AgentGraph build_graph(std::vector<AgentNode> nodes, double radius_m) {
    AgentGraph g;
    g.nodes = std::move(nodes);
    g.neighbors.assign(g.nodes.size(), {});
    const std::size_t n = g.nodes.size();

    for (std::size_t i = 0; i < n; ++i) {
        g.centroid[0] += g.nodes[i].state.x;
        g.centroid[1] += g.nodes[i].state.y;
        g.centroid[2] += g.nodes[i].state.z;
    }
    if (n > 0)
        for (double& c : g.centroid) c /= static_cast<double>(n);

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const AgentState& a = g.nodes[i].state;
            const AgentState& b = g.nodes[j].state;
            EdgeAttr e;
            e.dx = b.x - a.x;
            e.dy = b.y - a.y;
            e.dz = b.z - a.z;
            e.dyaw = b.yaw - a.yaw;
            e.dist = std::sqrt(e.dx * e.dx + e.dy * e.dy + e.dz * e.dz);
            if (radius_m > 0.0 && e.dist > radius_m) continue;
            g.neighbors[i].emplace_back(static_cast<int>(j), e);
            EdgeAttr back{-e.dx, -e.dy, -e.dz, -e.dyaw, e.dist};
            g.neighbors[j].emplace_back(static_cast<int>(i), back);
        }
    }
    for (auto& nbrs : g.neighbors)
        std::sort(nbrs.begin(), nbrs.end(), [&](const auto& lhs, const auto& rhs) {
            return g.nodes[static_cast<std::size_t>(lhs.first)].id <
                   g.nodes[static_cast<std::size_t>(rhs.first)].id;
        });
    return g;
}

void encode_graph(Tape& tape, const ParamStore& store, const GnnConfig& cfg, AgentGraph& graph) {
    for (AgentNode& node : graph.nodes)
        node.feature = encode_node(tape, store, cfg, node, graph.centroid);
}

void message_pass(Tape& tape, const ParamStore& store, const GnnConfig& cfg, AgentGraph& graph) {
    if (graph.layer_index >= static_cast<int>(cfg.layers))
        throw Error("message_pass: layer index " + std::to_string(graph.layer_index) +
                    " out of range for " + std::to_string(cfg.layers) + " layers");
    const std::string p = "gnn.l" + std::to_string(graph.layer_index);
    const int w_self = store.on_tape(tape, p + ".w_self");
    const int w_msg = store.on_tape(tape, p + ".w_msg");
    const int w_out = store.on_tape(tape, p + ".w_out");
    const int bias = store.on_tape(tape, p + ".bias");

    std::vector<int> updated(graph.nodes.size(), -1);
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        const AgentNode& node = graph.nodes[i];
        if (node.feature < 0) throw Error("message_pass: node features not encoded");

        int agg = -1;
        for (const auto& [j, edge] : graph.neighbors[i]) {
            const int hj = graph.nodes[static_cast<std::size_t>(j)].feature;
            const int ej = tape.constant(Tensor::row(edge_feature(edge)));
            const int msg = ops::relu(tape, ops::matmul(tape, ops::concat(tape, {hj, ej}), w_msg));
            agg = agg < 0 ? msg : ops::add(tape, agg, msg);
        }
        int combined = ops::matmul(tape, node.feature, w_self);
        if (agg >= 0) combined = ops::add(tape, combined, ops::matmul(tape, agg, w_out));
        updated[i] = ops::relu(tape, ops::add(tape, combined, bias));
    }
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) graph.nodes[i].feature = updated[i];
    graph.layer_index += 1;
}

void run_gnn(Tape& tape, const ParamStore& store, const GnnConfig& cfg, AgentGraph& graph) {
    if (graph.layer_index != 0) throw Error("run_gnn: graph already processed");
    bool encoded = true;
    for (const AgentNode& node : graph.nodes) encoded = encoded && node.feature >= 0;
    if (!encoded) encode_graph(tape, store, cfg, graph);
    for (std::size_t l = 0; l < cfg.layers; ++l) message_pass(tape, store, cfg, graph);
}

}  // namespace trackcast
