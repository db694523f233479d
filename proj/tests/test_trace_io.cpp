#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "vanetsim/demand.hpp"
#include "vanetsim/map_gen.hpp"
#include "vanetsim/mobility.hpp"
#include "vanetsim/trace_io.hpp"

using namespace vanet;

namespace {

MobilityTrace single_node(double x, double y) {
    MobilityTrace t;
    t.duration = 10.0;
    t.width = 500.0;
    t.height = 500.0;
    t.nodes.resize(1);
    t.nodes[0].wp = {{0.0, {x, y}, 0.0}};
    return t;
}

bool same_waypoints(const MobilityTrace& a, const MobilityTrace& b) {
    if (a.nodes.size() != b.nodes.size()) return false;
    for (size_t n = 0; n < a.nodes.size(); ++n) {
        const auto& x = a.nodes[n].wp;
        const auto& y = b.nodes[n].wp;
        if (x.size() != y.size()) return false;
        for (size_t i = 0; i < x.size(); ++i)
            if (x[i].t != y[i].t || x[i].pos.x != y[i].pos.x || x[i].pos.y != y[i].pos.y ||
                x[i].speed != y[i].speed)
                return false;
    }
    return true;
}

} // namespace

TEST_CASE("ns2 writer emits the initial-position block") {
    const std::string text = write_ns2(single_node(100.0, 200.0));
    CHECK(text ==
          "$node_(0) set X_ 100.00\n"
          "$node_(0) set Y_ 200.00\n"
          "$node_(0) set Z_ 0.00\n");
}

TEST_CASE("ns2 writer formats movement commands") {
    MobilityTrace t = single_node(100.0, 200.0);
    t.nodes[0].wp.push_back({1.0, {150.0, 200.0}, 10.0});
    const std::string text = write_ns2(t);
    CHECK(text.find("$ns_ at 1.00 \"$node_(0) setdest 150.00 200.00 10.00\"\n") !=
          std::string::npos);
    // exactly two decimals everywhere, even for integral values
    CHECK(text.find("X_ 100.00") != std::string::npos);
    CHECK(write_ns2(t) == text); // bytes are reproducible
}

TEST_CASE("ns2 writer sorts commands by time then node") {
    MobilityTrace t;
    t.duration = 30.0;
    t.width = t.height = 1000.0;
    t.nodes.resize(2);
    t.nodes[0].wp = {{0.0, {0.0, 0.0}, 0.0}, {5.0, {0.0, 0.0}, 1.0}, {20.0, {15.0, 0.0}, 0.0}};
    t.nodes[1].wp = {{0.0, {9.0, 9.0}, 0.0}, {5.0, {9.0, 9.0}, 2.0}, {10.0, {19.0, 9.0}, 0.0}};
    const std::string text = write_ns2(t);
    std::vector<std::string> cmds;
    for (const auto& line : text_lines(text))
        if (line.rfind("$ns_", 0) == 0) cmds.push_back(line);
    REQUIRE(cmds.size() == 4);
    CHECK(cmds[0].find("at 5.00 \"$node_(0)") != std::string::npos);
    CHECK(cmds[1].find("at 5.00 \"$node_(1)") != std::string::npos);
    CHECK(cmds[2].find("at 10.00 \"$node_(1)") != std::string::npos);
    CHECK(cmds[3].find("at 20.00 \"$node_(0)") != std::string::npos);
}

TEST_CASE("ns2 writer records motion that starts immediately") {
    MobilityTrace t = single_node(0.0, 0.0);
    t.nodes[0].wp = {{0.0, {0.0, 0.0}, 5.0}, {10.0, {50.0, 0.0}, 0.0}};
    const std::string text = write_ns2(t);
    CHECK(text.find("$ns_ at 0.00 \"$node_(0) setdest 0.00 0.00 5.00\"\n") != std::string::npos);
    const MobilityTrace back = parse_ns2(text);
    REQUIRE(back.nodes.size() == 1);
    REQUIRE(back.nodes[0].wp.size() == 2);
    CHECK(back.nodes[0].wp[0].speed == 5.0);
}

TEST_CASE("ns2 writer rejects malformed traces") {
    MobilityTrace t;
    t.nodes.resize(1); // no waypoints at all
    CHECK_THROWS_AS(write_ns2(t), Error);
    t.nodes[0].wp = {{3.0, {0.0, 0.0}, 0.0}}; // does not start at time 0
    CHECK_THROWS_AS(write_ns2(t), Error);
}

TEST_CASE("ns2 parser inverts the writer") {
    MobilityTrace t;
    t.duration = 20.0;
    t.width = t.height = 300.0;
    t.nodes.resize(2);
    t.nodes[0].wp = {{0.0, {1.234, 5.678}, 0.0},
                     {4.5, {1.234, 5.678}, 3.21},
                     {9.0, {15.679, 5.678}, 0.0}};
    t.nodes[1].wp = {{0.0, {250.0, 250.0}, 0.0}};
    const MobilityTrace back = parse_ns2(write_ns2(t));
    CHECK(same_waypoints(back, quantize_trace(t)));
    CHECK(back.nodes[0].vehicle_id == 0);
    CHECK(back.nodes[1].vehicle_id == 1);
    CHECK(back.duration == Catch::Approx(9.0));
}

TEST_CASE("ns2 round trip holds over random generated traces") {
    int checked = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        RwpSpec spec;
        spec.n_nodes = 3 + static_cast<int>(seed % 5);
        spec.width = 200.0 + 13.0 * static_cast<double>(seed);
        spec.height = 150.0 + 7.0 * static_cast<double>(seed);
        spec.v_min = 0.5 + 0.1 * static_cast<double>(seed % 4);
        spec.v_max = spec.v_min + 12.0;
        spec.pause = (seed % 3 == 0) ? 2.5 : 0.0;
        spec.duration = 40.0 + static_cast<double>(seed % 7) * 10.0;
        spec.seed = seed;
        const MobilityTrace t = random_waypoint(spec);
        CHECK(same_waypoints(parse_ns2(write_ns2(t)), quantize_trace(t)));
        ++checked;
    }
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        GridSpec gs;
        gs.k = 3;
        gs.block_len = 120.0;
        const RoadNetwork net = generate_grid(gs);
        const std::vector<Trip> trips = random_trips(net, 6, 0.0, 30.0, seed);
        const MobilityTrace t = simulate_traffic(net, trips, VehicleParams{}, 1.0, 90.0, seed);
        CHECK(same_waypoints(parse_ns2(write_ns2(t)), quantize_trace(t)));
        ++checked;
    }
    CHECK(checked == 50);
}

TEST_CASE("ns2 parser accepts an empty file") {
    const MobilityTrace t = parse_ns2("");
    CHECK(t.nodes.empty());
    CHECK(t.duration == 0.0);
    CHECK(write_ns2(t).empty());
}

TEST_CASE("ns2 parser reports malformed input with line numbers") {
    const std::string block =
        "$node_(0) set X_ 1.00\n"
        "$node_(0) set Y_ 2.00\n"
        "$node_(0) set Z_ 0.00\n";

    SECTION("negative time") {
        try {
            parse_ns2(block + "$ns_ at -1.00 \"$node_(0) setdest 5.00 2.00 1.00\"\n");
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.line() == 4);
            CHECK(std::string(e.what()).find("negative time") != std::string::npos);
        }
    }
    SECTION("setdest without initial position") {
        CHECK_THROWS_AS(parse_ns2(block + "$ns_ at 1.00 \"$node_(7) setdest 5.00 2.00 1.00\"\n"),
                        ParseError);
    }
    SECTION("non-monotone setdest times") {
        CHECK_THROWS_AS(parse_ns2(block +
                                  "$ns_ at 2.00 \"$node_(0) setdest 5.00 2.00 1.00\"\n"
                                  "$ns_ at 2.00 \"$node_(0) setdest 6.00 2.00 1.00\"\n"),
                        ParseError);
        CHECK_THROWS_AS(parse_ns2(block +
                                  "$ns_ at 2.00 \"$node_(0) setdest 5.00 2.00 1.00\"\n"
                                  "$ns_ at 1.00 \"$node_(0) setdest 6.00 2.00 1.00\"\n"),
                        ParseError);
    }
    SECTION("unrecognized line") {
        CHECK_THROWS_AS(parse_ns2("hello world\n"), ParseError);
        CHECK_THROWS_AS(parse_ns2("# comment\n"), ParseError);
    }
    SECTION("bad numbers and token counts") {
        CHECK_THROWS_AS(parse_ns2("$node_(0) set X_ abc\n"), ParseError);
        CHECK_THROWS_AS(parse_ns2("$node_(0) set X_\n"), ParseError);
        CHECK_THROWS_AS(parse_ns2("$node_(0) set W_ 1.00\n"), ParseError);
        CHECK_THROWS_AS(parse_ns2(block + "$ns_ at 1.00 \"$node_(0) setdest 5.00 2.00\"\n"),
                        ParseError);
        CHECK_THROWS_AS(parse_ns2(block + "$ns_ at 1.00 $node_(0) setdest 5.00 2.00 1.00\n"),
                        ParseError);
        CHECK_THROWS_AS(parse_ns2(block + "$ns_ at 1.00 \"$node_(0) setdest 5.00 2.00 -1.00\"\n"),
                        ParseError);
    }
    SECTION("duplicate or incomplete blocks") {
        CHECK_THROWS_AS(parse_ns2(block + "$node_(0) set X_ 9.00\n"), ParseError);
        CHECK_THROWS_AS(parse_ns2("$node_(0) set X_ 1.00\n$node_(0) set Y_ 2.00\n"), Error);
    }
    SECTION("block line after a command") {
        CHECK_THROWS_AS(parse_ns2(block +
                                  "$ns_ at 1.00 \"$node_(0) setdest 5.00 2.00 1.00\"\n"
                                  "$node_(1) set X_ 1.00\n"),
                        ParseError);
    }
    SECTION("node indices must be dense") {
        const std::string sparse =
            "$node_(1) set X_ 1.00\n"
            "$node_(1) set Y_ 2.00\n"
            "$node_(1) set Z_ 0.00\n";
        CHECK_THROWS_AS(parse_ns2(sparse), Error);
    }
    SECTION("time-0 command must match the block position") {
        CHECK_THROWS_AS(parse_ns2(block + "$ns_ at 0.00 \"$node_(0) setdest 9.00 2.00 1.00\"\n"),
                        ParseError);
    }
}

TEST_CASE("csv export lists every waypoint") {
    MobilityTrace t;
    t.nodes.resize(1);
    t.nodes[0].wp = {{0.0, {0.0, 0.0}, 10.0}, {10.0, {100.0, 0.0}, 0.0}};
    const std::string text = write_csv(t);
    const auto lines = text_lines(text);
    REQUIRE(lines.size() == 3);
    CHECK(lines[0] == "node,time,x,y,speed");
    CHECK(lines[1] == "0,0,0,0,10");
    CHECK(lines[2] == "0,10,100,0,0");

    MobilityTrace empty;
    CHECK(write_csv(empty) == "node,time,x,y,speed\n");

    RwpSpec spec;
    spec.n_nodes = 4;
    spec.width = spec.height = 300.0;
    spec.v_min = 1.0;
    spec.v_max = 10.0;
    spec.duration = 120.0;
    spec.seed = 9;
    const MobilityTrace r = random_waypoint(spec);
    size_t total = 0;
    for (const auto& n : r.nodes) total += n.wp.size();
    CHECK(text_lines(write_csv(r)).size() == total + 1);
}

TEST_CASE("node map pairs trace indices with vehicle ids") {
    MobilityTrace t;
    t.nodes.resize(2);
    t.nodes[0].vehicle_id = 7;
    t.nodes[1].vehicle_id = 12;
    CHECK(write_node_map(t) == "0 7\n1 12\n");
}

TEST_CASE("quantization is idempotent") {
    RwpSpec spec;
    spec.n_nodes = 3;
    spec.width = spec.height = 250.0;
    spec.v_min = 1.0;
    spec.v_max = 13.9;
    spec.duration = 60.0;
    spec.seed = 3;
    const MobilityTrace t = random_waypoint(spec);
    const MobilityTrace q = quantize_trace(t);
    CHECK(same_waypoints(quantize_trace(q), q));
    const MobilityTrace back = parse_ns2(write_ns2(q));
    CHECK(same_waypoints(back, q));
}
