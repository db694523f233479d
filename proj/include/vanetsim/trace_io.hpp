// Bit-exact writer and strict parser for the NS-2 mobility trace dialect,
// plus CSV and node-index sidecar exports.
//
// File shape: first an initial-position block, three lines per node
//
//     $node_(i) set X_ <x>
//     $node_(i) set Y_ <y>
//     $node_(i) set Z_ 0.00
//
// then movement commands sorted by (time, node index)
//
//     $ns_ at <t> "$node_(i) setdest <x> <y> <speed>"
//
// All numbers are fixed-point with exactly two decimals, lines end with a
// single '\n'. The block carries each node's first waypoint position; every
// later waypoint becomes one command line. A first waypoint with nonzero
// speed (a node already moving at t = 0) is also emitted as a command so the
// file captures it; parsing is the exact inverse of writing up to two-decimal
// quantization.
#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "mobility.hpp"

namespace vanet {

/// Every waypoint of every node rounded to two decimals (the precision the
/// trace file stores). Trace metadata is kept untouched.
inline MobilityTrace quantize_trace(const MobilityTrace& trace) {
    MobilityTrace out = trace;
    for (auto& node : out.nodes)
        for (auto& w : node.wp)
            w = {quantize2(w.t), {quantize2(w.pos.x), quantize2(w.pos.y)}, quantize2(w.speed)};
    return out;
}

inline std::string write_ns2(const MobilityTrace& trace) {
    std::string out;
    struct Cmd {
        double t;
        int node;
        Vec2 pos;
        double speed;
    };
    std::vector<Cmd> cmds;
    for (size_t i = 0; i < trace.nodes.size(); ++i) {
        const auto& wp = trace.nodes[i].wp;
        if (wp.empty())
            throw Error("write trace: node " + std::to_string(i) + " has no waypoints");
        if (wp.front().t != 0.0)
            throw Error("write trace: node " + std::to_string(i) +
                        " must start at time 0 (initial positions are timeless)");
        const std::string who = "$node_(" + std::to_string(i) + ") set ";
        out += who + "X_ " + fixed2(wp.front().pos.x) + "\n";
        out += who + "Y_ " + fixed2(wp.front().pos.y) + "\n";
        out += who + "Z_ " + fixed2(0.0) + "\n";
        size_t first = wp.front().speed > 0.0 ? 0 : 1;
        for (size_t k = first; k < wp.size(); ++k)
            cmds.push_back({quantize2(wp[k].t), static_cast<int>(i), wp[k].pos, wp[k].speed});
    }
    std::sort(cmds.begin(), cmds.end(), [](const Cmd& a, const Cmd& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.node < b.node;
    });
    for (const auto& c : cmds)
        out += "$ns_ at " + fixed2(c.t) + " \"$node_(" + std::to_string(c.node) + ") setdest " +
               fixed2(c.pos.x) + " " + fixed2(c.pos.y) + " " + fixed2(c.speed) + "\"\n";
    return out;
}

namespace detail {

/// The node index inside a `$node_(i)` token; -1 when the token has a
/// different shape.
inline int node_index_of(const std::string& tok, int line) {
    const std::string_view t{tok};
    if (t.size() < 9 || t.substr(0, 7) != "$node_(" || t.back() != ')') return -1;
    const std::string digits{t.substr(7, t.size() - 8)};
    if (digits.empty() ||
        !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw ParseError("bad node index in '" + tok + "'", line);
    return static_cast<int>(parse_int(digits, line));
}

} // namespace detail

/**
 * Strict inverse of write_ns2: unknown lines are rejected, initial positions
 * must precede movement commands, a command needs a complete initial-position
 * block for its node, per-node times must strictly increase, and node indices
 * must be dense from 0. Nodes without a time-0 command start at rest at their
 * block position. Blank lines are ignored.
 */
inline MobilityTrace parse_ns2(std::string_view text) {
    struct Init {
        bool has[3] = {false, false, false}; // X_, Y_, Z_
        Vec2 pos;
        int line = 0;
    };
    std::map<int, Init> init;
    std::map<int, std::vector<Waypoint>> moves;
    bool seen_command = false;

    const std::vector<std::string> lines = text_lines(text);
    for (size_t li = 0; li < lines.size(); ++li) {
        const int ln = static_cast<int>(li) + 1;
        const std::string& line = lines[li];
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        if (line.rfind("$node_(", 0) == 0) {
            const auto tok = split_ws(line);
            if (tok.size() != 4 || tok[1] != "set")
                throw ParseError("expected '$node_(i) set <axis> <value>'", ln);
            const int idx = detail::node_index_of(tok[0], ln);
            if (idx < 0) throw ParseError("bad node token '" + tok[0] + "'", ln);
            int axis;
            if (tok[2] == "X_")
                axis = 0;
            else if (tok[2] == "Y_")
                axis = 1;
            else if (tok[2] == "Z_")
                axis = 2;
            else
                throw ParseError("unknown axis '" + tok[2] + "'", ln);
            if (seen_command)
                throw ParseError("initial position after movement commands", ln);
            const double v = parse_double(tok[3], ln);
            Init& in = init[idx];
            if (in.has[axis]) throw ParseError("duplicate " + tok[2] + " for node", ln);
            in.has[axis] = true;
            in.line = ln;
            if (axis == 0) in.pos.x = v;
            if (axis == 1) in.pos.y = v; // Z_ is parsed and ignored (always 0)
            continue;
        }

        if (line.rfind("$ns_", 0) == 0) {
            const size_t q1 = line.find('"');
            if (q1 == std::string::npos || line.back() != '"' || q1 + 1 >= line.size() - 1)
                throw ParseError("expected quoted setdest command", ln);
            const auto head = split_ws(std::string_view{line}.substr(0, q1));
            if (head.size() != 3 || head[0] != "$ns_" || head[1] != "at")
                throw ParseError("expected '$ns_ at <t> \"...\"'", ln);
            const double t = parse_double(head[2], ln);
            if (t < 0) throw ParseError("negative time", ln);
            const auto body = split_ws(std::string_view{line}.substr(q1 + 1, line.size() - q1 - 2));
            if (body.size() != 5 || body[1] != "setdest")
                throw ParseError("expected '$node_(i) setdest <x> <y> <speed>'", ln);
            const int idx = detail::node_index_of(body[0], ln);
            if (idx < 0) throw ParseError("bad node token '" + body[0] + "'", ln);
            const double x = parse_double(body[2], ln);
            const double y = parse_double(body[3], ln);
            const double v = parse_double(body[4], ln);
            if (v < 0) throw ParseError("negative speed", ln);
            const auto in = init.find(idx);
            if (in == init.end() || !in->second.has[0] || !in->second.has[1] ||
                !in->second.has[2])
                throw ParseError("setdest for node " + std::to_string(idx) +
                                     " without a complete initial position",
                                 ln);
            auto& wp = moves[idx];
            if (!wp.empty() && t <= wp.back().t)
                throw ParseError("setdest times for node " + std::to_string(idx) +
                                     " must strictly increase",
                                 ln);
            if (wp.empty() && t == 0.0 && (x != in->second.pos.x || y != in->second.pos.y))
                throw ParseError("time-0 waypoint differs from the initial position", ln);
            wp.push_back({t, {x, y}, v});
            seen_command = true;
            continue;
        }

        throw ParseError("unrecognized line", ln);
    }

    MobilityTrace trace;
    trace.nodes.resize(init.size());
    int expect = 0;
    for (const auto& [idx, in] : init) {
        if (idx != expect)
            throw Error("trace: node indices must be dense from 0 (missing " +
                        std::to_string(expect) + ")");
        for (int a = 0; a < 3; ++a)
            if (!in.has[a])
                throw Error("trace: node " + std::to_string(idx) + " is missing its " +
                            (a == 0 ? "X_" : a == 1 ? "Y_" : "Z_") + " line");
        auto& node = trace.nodes[idx];
        node.vehicle_id = idx;
        const auto mv = moves.find(idx);
        if (mv == moves.end() || mv->second.front().t > 0.0)
            node.wp.push_back({0.0, in.pos, 0.0}); // at rest until the first command
        if (mv != moves.end())
            node.wp.insert(node.wp.end(), mv->second.begin(), mv->second.end());
        for (const auto& w : node.wp) {
            trace.duration = std::max(trace.duration, w.t);
            trace.width = std::max(trace.width, w.pos.x);
            trace.height = std::max(trace.height, w.pos.y);
        }
        ++expect;
    }
    return trace;
}

/// Analysis-friendly dump: header `node,time,x,y,speed`, one row per
/// waypoint, nodes in index order, full double precision.
inline std::string write_csv(const MobilityTrace& trace) {
    std::string out = "node,time,x,y,speed\n";
    for (size_t i = 0; i < trace.nodes.size(); ++i)
        for (const auto& w : trace.nodes[i].wp)
            out += std::to_string(i) + "," + num_str(w.t) + "," + num_str(w.pos.x) + "," +
                   num_str(w.pos.y) + "," + num_str(w.speed) + "\n";
    return out;
}

/// Sidecar mapping from trace-local node index to external vehicle id, one
/// `<index> <vehicle_id>` pair per line.
inline std::string write_node_map(const MobilityTrace& trace) {
    std::string out;
    for (size_t i = 0; i < trace.nodes.size(); ++i)
        out += std::to_string(i) + " " + std::to_string(trace.nodes[i].vehicle_id) + "\n";
    return out;
}

} // namespace vanet
