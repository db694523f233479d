#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "vanetsim/road_net.hpp"

using namespace vanet;

namespace {

RoadNetwork two_nodes() {
    RoadNetwork net;
    net.add_node({0, {0, 0}, NodeKind::junction});
    net.add_node({1, {100, 0}, NodeKind::junction});
    return net;
}

} // namespace

TEST_CASE("add_edge rejects self-loops") {
    auto net = two_nodes();
    CHECK_THROWS_AS(net.add_edge({0, 1, 1, 50, 10, 1, 0}), Error);
}

TEST_CASE("add_edge accepts a straight road and rejects a short one") {
    auto net = two_nodes();
    CHECK_NOTHROW(net.add_edge({0, 0, 1, 100, 10, 1, 0}));
    CHECK_THROWS_WITH(net.add_edge({1, 1, 0, 90, 10, 1, 0}),
                      Catch::Matchers::ContainsSubstring("90") &&
                          Catch::Matchers::ContainsSubstring("100"));
}

TEST_CASE("add_node and add_edge reject duplicate ids and dangling endpoints") {
    auto net = two_nodes();
    CHECK_THROWS_AS(net.add_node({0, {5, 5}, NodeKind::junction}), Error);
    net.add_edge({0, 0, 1, 100, 10, 1, 0});
    CHECK_THROWS_AS(net.add_edge({0, 1, 0, 100, 10, 1, 0}), Error);
    CHECK_THROWS_AS(net.add_edge({1, 0, 7, 100, 10, 1, 0}), Error);
}

TEST_CASE("validate reports nothing for an empty network") {
    CHECK(validate(RoadNetwork{}).empty());
}

TEST_CASE("validate flags dangling endpoints on unchecked input") {
    auto net = RoadNetwork::unchecked({{0, {0, 0}, NodeKind::junction}},
                                      {{0, 0, 7, 100, 10, 1, 0}});
    auto v = validate(net);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "dangling-endpoint");
    CHECK(v[0].what.find("7") != std::string::npos);
}

TEST_CASE("validate flags a traffic light without a program") {
    RoadNetwork net;
    net.add_node({0, {0, 0}, NodeKind::traffic_light});
    auto v = validate(net);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "missing-program");
}

TEST_CASE("validate flags dead ends with more than one road") {
    RoadNetwork net;
    net.add_node({0, {0, 0}, NodeKind::dead_end});
    net.add_node({1, {100, 0}, NodeKind::junction});
    net.add_node({2, {0, 100}, NodeKind::junction});
    net.add_edge({0, 0, 1, 100, 10, 1, 0});
    net.add_edge({1, 1, 0, 100, 10, 1, 0});
    CHECK(validate(net).empty()); // one two-way road is fine
    net.add_edge({2, 0, 2, 100, 10, 1, 0});
    auto v = validate(net);
    REQUIRE(v.size() == 1);
    CHECK(v[0].rule == "dead-end-degree");
}

TEST_CASE("validate checks traffic light programs against incoming edges") {
    RoadNetwork net;
    net.add_node({0, {0, 0}, NodeKind::junction});
    net.add_node({1, {100, 0}, NodeKind::traffic_light});
    net.add_edge({0, 0, 1, 100, 10, 1, 0});
    net.add_edge({1, 1, 0, 100, 10, 1, 0});
    TrafficLightProgram prog;
    prog.node = 1;
    prog.phases.push_back({30.0, {}}); // edge 0 never green
    net.add_program(prog);
    auto v = validate(net);
    bool found = false;
    for (const auto& viol : v) found = found || viol.rule == "never-green";
    CHECK(found);
}

TEST_CASE("shortest_route trivial cases") {
    auto net = two_nodes();
    net.add_edge({0, 0, 1, 100, 10, 1, 0});

    auto same = shortest_route(net, 0, 0);
    REQUIRE(same);
    CHECK(same->edges.empty());
    CHECK(same->travel_time == 0.0);

    auto one = shortest_route(net, 0, 1);
    REQUIRE(one);
    CHECK(one->edges == std::vector<int>{0});
    CHECK(one->travel_time == Catch::Approx(10.0));

    CHECK_FALSE(shortest_route(net, 1, 0).has_value()); // no reverse edge
    CHECK_THROWS_AS(shortest_route(net, 0, 99), Error);
}

TEST_CASE("shortest_route minimizes travel time, not length") {
    RoadNetwork net;
    net.add_node({0, {0, 0}, NodeKind::junction});
    net.add_node({1, {0, 0}, NodeKind::junction});
    net.add_node({2, {0, 0}, NodeKind::junction});
    net.add_edge({0, 0, 1, 100, 10, 1, 0}); // A->B, 10 s
    net.add_edge({1, 1, 2, 100, 20, 1, 0}); // B->C, 5 s
    net.add_edge({2, 0, 2, 300, 10, 1, 0}); // A->C direct, 30 s
    auto r = shortest_route(net, 0, 2);
    REQUIRE(r);
    CHECK(r->edges == std::vector<int>{0, 1});
    CHECK(r->travel_time == Catch::Approx(15.0));
}

TEST_CASE("shortest_route matches exhaustive enumeration on tiny networks") {
    Rng rng(20240817);
    int checked = 0;
    for (int it = 0; it < 60; ++it) {
        auto net = testing_oracles::random_tiny_network(rng);
        const int n = static_cast<int>(net.nodes().size());
        for (int o = 0; o < n; ++o) {
            for (int d = 0; d < n; ++d) {
                auto expect = testing_oracles::enumerate_shortest(net, o, d);
                auto got = shortest_route(net, o, d);
                REQUIRE(expect.has_value() == got.has_value());
                if (!expect) continue;
                CHECK(route_travel_time(net, got->edges) == expect->cost); // exact
                CHECK(got->edges == expect->edges);                        // lex tie-break
                CHECK(route_is_connected(net, got->edges));
                ++checked;
            }
        }
    }
    CHECK(checked > 500);
}

TEST_CASE("network file round-trips and reports parse errors") {
    RoadNetwork net;
    net.add_node({0, {0, 0}, NodeKind::junction});
    net.add_node({1, {100, 0}, NodeKind::traffic_light});
    net.add_node({2, {200, 0.5}, NodeKind::dead_end});
    net.add_edge({0, 0, 1, 100, 13.9, 2, 1});
    net.add_edge({1, 1, 0, 100, 13.9, 2, 1});
    net.add_edge({2, 1, 2, 100.75, 10, 1, 0});
    TrafficLightProgram prog;
    prog.node = 1;
    prog.offset = 5;
    prog.phases.push_back({30.0, {0}});
    prog.phases.push_back({30.0, {}});
    net.add_program(prog);

    const std::string text = write_network(net);
    auto back = parse_network(text);
    CHECK(write_network(back) == text);
    CHECK(back.node(1).kind == NodeKind::traffic_light);
    CHECK(back.program_for(1)->phases.size() == 2);
    CHECK(back.edge(2).length == 100.75);

    const std::string with_comment = "# a map\n\n" + text;
    CHECK(write_network(parse_network(with_comment)) == text);

    CHECK_THROWS_AS(parse_network("node 0 0 0 bogus\n"), ParseError);
    CHECK_THROWS_AS(parse_network("frob 1 2\n"), ParseError);
    try {
        parse_network("node 0 0 0 junction\nedge 0 0 9 10 10 1 0\n");
        FAIL("expected parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("traffic light phase lookup honors offset and wraps") {
    TrafficLightProgram prog;
    prog.node = 0;
    prog.offset = 10;
    prog.phases.push_back({30.0, {1}});
    prog.phases.push_back({30.0, {2}});
    CHECK(prog.cycle() == 60.0);
    CHECK(prog.is_green(1, 10.0));
    CHECK_FALSE(prog.is_green(2, 10.0));
    CHECK(prog.is_green(2, 45.0));
    CHECK(prog.is_green(1, 70.0));  // wrapped
    CHECK(prog.is_green(2, 5.0));   // before offset counts back into cycle
}
