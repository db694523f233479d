#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <unordered_map>
#include <vector>

#include "vanetsim/core.hpp"

namespace vanet {

enum class NodeKind { junction, traffic_light, dead_end };

inline const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::junction: return "junction";
        case NodeKind::traffic_light: return "traffic_light";
        case NodeKind::dead_end: return "dead_end";
    }
    return "?";
}

inline std::optional<NodeKind> node_kind_from(const std::string& s) {
    if (s == "junction") return NodeKind::junction;
    if (s == "traffic_light") return NodeKind::traffic_light;
    if (s == "dead_end") return NodeKind::dead_end;
    return std::nullopt;
}

struct RoadNode {
    int id = 0;
    Vec2 pos;
    NodeKind kind = NodeKind::junction;
};

struct RoadEdge {
    int id = 0;
    int from = 0;
    int to = 0;
    double length = 0.0;      // m, may exceed the straight-line distance
    double speed_limit = 0.0; // m/s
    int lanes = 1;
    int priority = 0;         // right-of-way only, never affects routing
};

struct TlsPhase {
    double duration = 0.0;        // s
    std::set<int> green_edges;    // incoming edge ids with green
};

struct TrafficLightProgram {
    int node = 0;
    std::vector<TlsPhase> phases;
    double offset = 0.0;

    double cycle() const {
        double c = 0.0;
        for (const auto& p : phases) c += p.duration;
        return c;
    }

    /// Incoming edge green at absolute time t?
    bool is_green(int edge_id, double t) const {
        const double c = cycle();
        if (c <= 0.0) return false;
        double tt = std::fmod(t - offset, c);
        if (tt < 0) tt += c;
        for (const auto& p : phases) {
            if (tt < p.duration) return p.green_edges.count(edge_id) > 0;
            tt -= p.duration;
        }
        return phases.back().green_edges.count(edge_id) > 0;
    }
};

struct Violation {
    std::string rule;   // short rule name, e.g. "dangling-endpoint"
    std::string what;   // offending ids and detail
};

/**
 * Directed road graph. Immutable once built; building (add_*) validates
 * hard preconditions eagerly, validate() reports everything else as data.
 */
class RoadNetwork {
public:
    void add_node(const RoadNode& n) {
        if (node_index_.count(n.id))
            throw Error("duplicate node id " + std::to_string(n.id));
        node_index_[n.id] = static_cast<int>(nodes_.size());
        nodes_.push_back(n);
        out_edges_.emplace_back();
        in_edges_.emplace_back();
    }

    void add_edge(const RoadEdge& e) {
        if (edge_index_.count(e.id))
            throw Error("duplicate edge id " + std::to_string(e.id));
        if (e.from == e.to)
            throw Error("edge " + std::to_string(e.id) + ": self-loop at node " +
                        std::to_string(e.from));
        auto fi = node_index_.find(e.from);
        auto ti = node_index_.find(e.to);
        if (fi == node_index_.end() || ti == node_index_.end())
            throw Error("edge " + std::to_string(e.id) + ": dangling endpoint");
        if (e.length <= 0 || e.speed_limit <= 0 || e.lanes < 1 || e.priority < 0)
            throw Error("edge " + std::to_string(e.id) + ": bad attributes");
        const double d = distance(nodes_[fi->second].pos, nodes_[ti->second].pos);
        if (e.length < d)
            throw Error("edge " + std::to_string(e.id) + ": length " + num_str(e.length) +
                        " < " + num_str(d) + " Euclidean");
        edge_index_[e.id] = static_cast<int>(edges_.size());
        edges_.push_back(e);
        out_edges_[fi->second].push_back(e.id);
        in_edges_[ti->second].push_back(e.id);
        std::sort(out_edges_[fi->second].begin(), out_edges_[fi->second].end());
        std::sort(in_edges_[ti->second].begin(), in_edges_[ti->second].end());
    }

    void add_program(const TrafficLightProgram& p) {
        if (programs_.count(p.node))
            throw Error("node " + std::to_string(p.node) + ": duplicate tls program");
        programs_[p.node] = p;
    }

    /// Assembles without eager checks; pair with validate() when loading
    /// inputs that must be reported on rather than rejected.
    static RoadNetwork unchecked(std::vector<RoadNode> nodes, std::vector<RoadEdge> edges,
                                 std::vector<TrafficLightProgram> programs = {}) {
        RoadNetwork net;
        for (const auto& n : nodes) {
            net.node_index_.emplace(n.id, static_cast<int>(net.nodes_.size()));
            net.nodes_.push_back(n);
            net.out_edges_.emplace_back();
            net.in_edges_.emplace_back();
        }
        for (const auto& e : edges) {
            net.edge_index_.emplace(e.id, static_cast<int>(net.edges_.size()));
            net.edges_.push_back(e);
            if (auto it = net.node_index_.find(e.from); it != net.node_index_.end()) {
                net.out_edges_[it->second].push_back(e.id);
                std::sort(net.out_edges_[it->second].begin(), net.out_edges_[it->second].end());
            }
            if (auto it = net.node_index_.find(e.to); it != net.node_index_.end()) {
                net.in_edges_[it->second].push_back(e.id);
                std::sort(net.in_edges_[it->second].begin(), net.in_edges_[it->second].end());
            }
        }
        for (const auto& p : programs) net.programs_[p.node] = p;
        return net;
    }

    bool has_node(int id) const { return node_index_.count(id) > 0; }
    bool has_edge(int id) const { return edge_index_.count(id) > 0; }

    const RoadNode& node(int id) const {
        auto it = node_index_.find(id);
        if (it == node_index_.end()) throw Error("unknown node id " + std::to_string(id));
        return nodes_[it->second];
    }

    const RoadEdge& edge(int id) const {
        auto it = edge_index_.find(id);
        if (it == edge_index_.end()) throw Error("unknown edge id " + std::to_string(id));
        return edges_[it->second];
    }

    const std::vector<RoadNode>& nodes() const { return nodes_; }
    const std::vector<RoadEdge>& edges() const { return edges_; }
    const std::map<int, TrafficLightProgram>& programs() const { return programs_; }

    const TrafficLightProgram* program_for(int node_id) const {
        auto it = programs_.find(node_id);
        return it == programs_.end() ? nullptr : &it->second;
    }

    /// Outgoing edge ids of a node, ascending.
    const std::vector<int>& out_edges(int node_id) const {
        return out_edges_[node_index_.at(node_id)];
    }

    /// Incoming edge ids of a node, ascending.
    const std::vector<int>& in_edges(int node_id) const {
        return in_edges_[node_index_.at(node_id)];
    }

    int degree(int node_id) const {
        int i = node_index_.at(node_id);
        return static_cast<int>(out_edges_[i].size() + in_edges_[i].size());
    }

    /// Distinct neighbor count, ignoring direction.
    int neighbor_count(int node_id) const {
        std::set<int> nb;
        for (int eid : out_edges(node_id)) nb.insert(edge(eid).to);
        for (int eid : in_edges(node_id)) nb.insert(edge(eid).from);
        return static_cast<int>(nb.size());
    }

private:
    std::vector<RoadNode> nodes_;
    std::vector<RoadEdge> edges_;
    std::map<int, TrafficLightProgram> programs_;
    std::unordered_map<int, int> node_index_;
    std::unordered_map<int, int> edge_index_;
    std::vector<std::vector<int>> out_edges_;
    std::vector<std::vector<int>> in_edges_;
};

/// Every invariant breach in the network, as data. Empty means usable.
inline std::vector<Violation> validate(const RoadNetwork& net) {
    std::vector<Violation> v;
    for (const auto& n : net.nodes()) {
        if (n.kind == NodeKind::dead_end && net.degree(n.id) > 2)
            v.push_back({"dead-end-degree",
                         "node " + std::to_string(n.id) + " has degree " +
                             std::to_string(net.degree(n.id))});
        if (n.kind == NodeKind::traffic_light && !net.program_for(n.id))
            v.push_back({"missing-program", "node " + std::to_string(n.id)});
    }
    for (const auto& [nid, prog] : net.programs()) {
        if (!net.has_node(nid)) {
            v.push_back({"dangling-program", "node " + std::to_string(nid)});
            continue;
        }
        if (net.node(nid).kind != NodeKind::traffic_light)
            v.push_back({"program-on-plain-node", "node " + std::to_string(nid)});
        if (prog.cycle() <= 0)
            v.push_back({"empty-cycle", "node " + std::to_string(nid)});
        for (const auto& ph : prog.phases)
            if (ph.duration <= 0)
                v.push_back({"bad-phase-duration", "node " + std::to_string(nid)});
        for (int eid : net.in_edges(nid)) {
            bool green_somewhere = false;
            for (const auto& ph : prog.phases)
                if (ph.green_edges.count(eid)) { green_somewhere = true; break; }
            if (!green_somewhere)
                v.push_back({"never-green", "edge " + std::to_string(eid) + " at node " +
                                                std::to_string(nid)});
        }
        for (const auto& ph : prog.phases)
            for (int eid : ph.green_edges)
                if (!net.has_edge(eid) || net.edge(eid).to != nid)
                    v.push_back({"green-not-incoming", "edge " + std::to_string(eid) +
                                                           " at node " + std::to_string(nid)});
    }
    // add_edge enforces endpoint existence for its own inputs; a network
    // assembled by other means is re-checked here.
    for (const auto& e : net.edges()) {
        if (!net.has_node(e.from))
            v.push_back({"dangling-endpoint",
                         "edge " + std::to_string(e.id) + ", node " + std::to_string(e.from)});
        if (!net.has_node(e.to))
            v.push_back({"dangling-endpoint",
                         "edge " + std::to_string(e.id) + ", node " + std::to_string(e.to)});
    }
    return v;
}

struct Route {
    std::vector<int> edges;   // ordered edge ids, connected head to tail
    double travel_time = 0.0; // s, free-flow
};

inline double route_travel_time(const RoadNetwork& net, const std::vector<int>& edges) {
    double t = 0.0;
    for (int eid : edges) {
        const auto& e = net.edge(eid);
        t += e.length / e.speed_limit;
    }
    return t;
}

inline bool route_is_connected(const RoadNetwork& net, const std::vector<int>& edges) {
    for (size_t i = 0; i + 1 < edges.size(); ++i)
        if (net.edge(edges[i]).to != net.edge(edges[i + 1]).from) return false;
    return true;
}

/**
 * Minimum free-flow travel-time route (weight = length / speed_limit).
 * Among equal-cost routes returns the lexicographically smallest edge-id
 * sequence. nullopt iff dest is unreachable. origin == dest gives an
 * empty route.
 */
inline std::optional<Route> shortest_route(const RoadNetwork& net, int origin, int dest) {
    if (!net.has_node(origin)) throw Error("unknown node id " + std::to_string(origin));
    if (!net.has_node(dest)) throw Error("unknown node id " + std::to_string(dest));
    if (origin == dest) return Route{};

    // Label-setting pass from dest over reversed edges gives the remaining
    // cost at every node; the lexicographically smallest optimal route then
    // falls out of a greedy walk over tight edges.
    const double inf = std::numeric_limits<double>::infinity();
    std::unordered_map<int, double> dist_to_dest;
    for (const auto& n : net.nodes()) dist_to_dest[n.id] = inf;
    dist_to_dest[dest] = 0.0;

    using QItem = std::pair<double, int>; // (cost, node id)
    std::priority_queue<QItem, std::vector<QItem>, std::greater<>> pq;
    pq.push({0.0, dest});
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist_to_dest[u]) continue;
        for (int eid : net.in_edges(u)) {
            const auto& e = net.edge(eid);
            const double w = e.length / e.speed_limit;
            if (d + w < dist_to_dest[e.from]) {
                dist_to_dest[e.from] = d + w;
                pq.push({d + w, e.from});
            }
        }
    }
    if (dist_to_dest[origin] == inf) return std::nullopt;

    Route route;
    int at = origin;
    while (at != dest) {
        int best_edge = -1;
        for (int eid : net.out_edges(at)) { // ascending ids: first tight edge is lex-min
            const auto& e = net.edge(eid);
            const double w = e.length / e.speed_limit;
            if (dist_to_dest[e.to] + w == dist_to_dest[at]) {
                best_edge = eid;
                break;
            }
        }
        if (best_edge < 0) { // float round-off guard: take the minimizing edge
            double best = inf;
            for (int eid : net.out_edges(at)) {
                const auto& e = net.edge(eid);
                double c = dist_to_dest[e.to] + e.length / e.speed_limit;
                if (c < best) { best = c; best_edge = eid; }
            }
            if (best_edge < 0) return std::nullopt;
        }
        route.edges.push_back(best_edge);
        at = net.edge(best_edge).to;
    }
    route.travel_time = route_travel_time(net, route.edges);
    return route;
}

// ---------------------------------------------------------------------------
// Network file format (plain text, line oriented, '#' comments):
//   node <id> <x> <y> <kind>
//   edge <id> <from> <to> <length> <speed> <lanes> <priority>
//   tls <node> <offset> <phase-dur>:<edge,edge,...> ...
// ---------------------------------------------------------------------------

inline std::string write_network(const RoadNetwork& net) {
    std::string out;
    for (const auto& n : net.nodes()) {
        out += "node " + num_str(n.id) + " " + num_str(n.pos.x) + " " + num_str(n.pos.y) +
               " " + to_string(n.kind) + "\n";
    }
    for (const auto& e : net.edges()) {
        out += "edge " + num_str(e.id) + " " + num_str(e.from) + " " + num_str(e.to) + " " +
               num_str(e.length) + " " + num_str(e.speed_limit) + " " + num_str(e.lanes) +
               " " + num_str(e.priority) + "\n";
    }
    for (const auto& [nid, prog] : net.programs()) {
        out += "tls " + num_str(nid) + " " + num_str(prog.offset);
        for (const auto& ph : prog.phases) {
            out += " " + num_str(ph.duration) + ":";
            bool first = true;
            for (int eid : ph.green_edges) {
                if (!first) out += ",";
                out += num_str(eid);
                first = false;
            }
        }
        out += "\n";
    }
    return out;
}

inline RoadNetwork parse_network(const std::string& text) {
    RoadNetwork net;
    const auto lines = text_lines(text);
    for (size_t i = 0; i < lines.size(); ++i) {
        const int ln = static_cast<int>(i + 1);
        if (is_comment_or_blank(lines[i])) continue;
        auto tok = split_ws(lines[i]);
        try {
            if (tok[0] == "node") {
                if (tok.size() != 5) throw ParseError("node needs 4 fields", ln);
                auto kind = node_kind_from(tok[4]);
                if (!kind) throw ParseError("unknown node kind '" + tok[4] + "'", ln);
                net.add_node({static_cast<int>(parse_int(tok[1], ln)),
                              {parse_double(tok[2], ln), parse_double(tok[3], ln)},
                              *kind});
            } else if (tok[0] == "edge") {
                if (tok.size() != 8) throw ParseError("edge needs 7 fields", ln);
                net.add_edge({static_cast<int>(parse_int(tok[1], ln)),
                              static_cast<int>(parse_int(tok[2], ln)),
                              static_cast<int>(parse_int(tok[3], ln)),
                              parse_double(tok[4], ln), parse_double(tok[5], ln),
                              static_cast<int>(parse_int(tok[6], ln)),
                              static_cast<int>(parse_int(tok[7], ln))});
            } else if (tok[0] == "tls") {
                if (tok.size() < 4) throw ParseError("tls needs node, offset, phases", ln);
                TrafficLightProgram prog;
                prog.node = static_cast<int>(parse_int(tok[1], ln));
                prog.offset = parse_double(tok[2], ln);
                for (size_t k = 3; k < tok.size(); ++k) {
                    auto parts = split_char(tok[k], ':');
                    if (parts.size() != 2) throw ParseError("bad phase '" + tok[k] + "'", ln);
                    TlsPhase ph;
                    ph.duration = parse_double(parts[0], ln);
                    for (const auto& es : split_char(parts[1], ','))
                        if (!es.empty()) ph.green_edges.insert(static_cast<int>(parse_int(es, ln)));
                    prog.phases.push_back(ph);
                }
                net.add_program(prog);
            } else {
                throw ParseError("unknown record '" + tok[0] + "'", ln);
            }
        } catch (const ParseError&) {
            throw;
        } catch (const Error& e) {
            throw ParseError(e.what(), ln);
        }
    }
    return net;
}

} // namespace vanet
