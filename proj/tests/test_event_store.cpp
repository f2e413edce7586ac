#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gady/event_store.hpp"
#include "gady/rng.hpp"

using namespace gady;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

EventStore tiny_store() {
    std::vector<Interaction> ev;
    for (int i = 0; i < 10; ++i)
        ev.push_back({i % 3, (i + 1) % 3, static_cast<double>(i), {}, Label::Real});
    return EventStore(std::move(ev), 3);
}

}  // namespace

TEST_CASE("ingest sorts shuffled rows by time", "[tgraph]") {
    auto path = write_temp("shuffled.csv", "src,dst,time\n7,8,5.0\n1,2,1.0\n3,4,3.0\n");
    EventStore s = ingest(path, DatasetFormat::GenericCsv);
    REQUIRE(s.num_events() == 3);
    CHECK(s.event(0).time == 0.0);  // normalized so min time = 0
    CHECK(s.event(1).time == 2.0);
    CHECK(s.event(2).time == 4.0);
    // first-appearance remap over the sorted stream
    CHECK(s.event(0).src == 0);
    CHECK(s.event(0).dst == 1);
    CHECK(s.event(2).src == 4);
    CHECK(s.num_nodes() == 6);
}

TEST_CASE("ingest accepts ucimsg rows and skips comments", "[tgraph]") {
    auto path =
        write_temp("uci.txt", "% comment line\n1 2 1 100\n2 3 4 50\n# also skipped\n1 3 1 75\n");
    EventStore s = ingest(path, DatasetFormat::UciMsg);
    REQUIRE(s.num_events() == 3);
    CHECK(s.num_nodes() == 3);
    CHECK(s.event(0).time == 0.0);
    CHECK(s.event(2).time == 50.0);
    CHECK(s.feat_dim() == 0);
}

TEST_CASE("bitcoin_otc rating is dropped unless requested", "[tgraph]") {
    auto path = write_temp("otc.csv", "5,6,4,10\n6,7,-2,20\n");
    EventStore plain = ingest(path, DatasetFormat::BitcoinOtc);
    CHECK(plain.feat_dim() == 0);
    IngestOptions opts;
    opts.use_edge_weight = true;
    EventStore weighted = ingest(path, DatasetFormat::BitcoinOtc, opts);
    REQUIRE(weighted.feat_dim() == 1);
    CHECK(weighted.event(0).edge_feat[0] == 4.0);
    CHECK(weighted.event(1).edge_feat[0] == -2.0);
}

TEST_CASE("email_dnc format parses", "[tgraph]") {
    auto path = write_temp("dnc.csv", "1,2,100\n2,3,90\n");
    EventStore s = ingest(path, DatasetFormat::EmailDnc);
    REQUIRE(s.num_events() == 2);
    CHECK(s.event(0).src == 0);  // the t=90 row comes first after sorting
}

TEST_CASE("malformed row reports its line number", "[tgraph]") {
    auto path = write_temp("bad.csv", "src,dst,time\n1,2,1.0\nx,2,3.0\n");
    REQUIRE_THROWS_WITH(ingest(path, DatasetFormat::GenericCsv),
                        Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("empty file is an error", "[tgraph]") {
    auto path = write_temp("empty.csv", "src,dst,time\n");
    REQUIRE_THROWS_AS(ingest(path, DatasetFormat::GenericCsv), error);
}

TEST_CASE("ingest of the canonical form is idempotent", "[tgraph]") {
    Rng rng(17);
    std::ostringstream raw;
    raw << "src,dst,time\n";
    for (int i = 0; i < 60; ++i)
        raw << rng.below(20) + 100 << ',' << rng.below(20) + 100 << ',' << rng.below(40) << "\n";
    auto p1 = write_temp("round1.csv", raw.str());
    EventStore s1 = ingest(p1, DatasetFormat::GenericCsv);
    auto p2 = (std::filesystem::temp_directory_path() / "round2.csv").string();
    write_generic_csv(s1, p2);
    EventStore s2 = ingest(p2, DatasetFormat::GenericCsv);
    REQUIRE(s1.num_events() == s2.num_events());
    REQUIRE(s1.num_nodes() == s2.num_nodes());
    for (std::size_t i = 0; i < s1.num_events(); ++i) {
        CHECK(s1.event(i).src == s2.event(i).src);
        CHECK(s1.event(i).dst == s2.event(i).dst);
        CHECK(s1.event(i).time == s2.event(i).time);
    }
}

TEST_CASE("remap is a bijection onto 0..N-1", "[tgraph]") {
    Rng rng(23);
    std::ostringstream raw;
    raw << "src,dst,time\n";
    for (int i = 0; i < 100; ++i)
        raw << rng.below(1000) * 7 + 3 << ',' << rng.below(1000) * 7 + 3 << ',' << i << "\n";
    auto p = write_temp("remap.csv", raw.str());
    EventStore s = ingest(p, DatasetFormat::GenericCsv);
    std::vector<bool> seen(s.num_nodes(), false);
    for (const auto& e : s.events()) {
        REQUIRE(e.src >= 0);
        REQUIRE(e.src < s.num_nodes());
        REQUIRE(e.dst >= 0);
        REQUIRE(e.dst < s.num_nodes());
        seen[e.src] = seen[e.dst] = true;
    }
    for (bool b : seen) CHECK(b);
}

TEST_CASE("split takes a chronological prefix", "[tgraph]") {
    EventStore s = tiny_store();
    auto [train, test] = s.split(0.5);
    CHECK(train.num_events() == 5);
    CHECK(test.num_events() == 5);
    CHECK(train.event(4).time == 4.0);
    CHECK(test.event(0).time == 5.0);
    CHECK(train.num_nodes() == s.num_nodes());
    REQUIRE_THROWS_AS(s.split(0.0), error);
    std::vector<Interaction> two{{0, 1, 0.0, {}, Label::Real}, {0, 1, 1.0, {}, Label::Real}};
    EventStore small(std::move(two), 2);
    REQUIRE_THROWS_AS(small.split(0.01), error);  // empty train side
}

TEST_CASE("temporal neighbors honor the strict time bound", "[tgraph]") {
    std::vector<Interaction> ev{{0, 1, 1.0, {}, Label::Real},
                                {0, 2, 2.0, {}, Label::Real},
                                {0, 3, 3.0, {}, Label::Real}};
    EventStore s(std::move(ev), 4);
    auto n = s.temporal_neighbors(0, 3.0, 2);
    REQUIRE(n.size() == 2);
    CHECK(n[0].time == 2.0);  // most recent first, t=3 excluded
    CHECK(n[1].time == 1.0);
    CHECK(s.temporal_neighbors(3, 3.0, 5).empty());        // history strictly before t
    CHECK(s.temporal_neighbors(0, 10.0, 99).size() == 3);  // k larger than history
    CHECK(s.temporal_neighbors(2, 1.5, 4).empty());        // no history yet
}

TEST_CASE("neighbor causality holds on random stores", "[tgraph][property]") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Interaction> ev;
        int n = 5 + static_cast<int>(rng.below(10));
        for (int i = 0; i < 40; ++i) {
            Interaction e;
            e.src = static_cast<NodeId>(rng.below(n));
            e.dst = static_cast<NodeId>(rng.below(n));
            e.time = std::floor(rng.uniform(0, 20));
            ev.push_back(e);
        }
        std::stable_sort(ev.begin(), ev.end(),
                         [](const Interaction& a, const Interaction& b) { return a.time < b.time; });
        EventStore s(std::move(ev), n);
        for (int q = 0; q < 30; ++q) {
            NodeId node = static_cast<NodeId>(rng.below(n));
            double t = rng.uniform(0, 22);
            for (const auto& r : s.temporal_neighbors(node, t, 1 + rng.below(6)))
                REQUIRE(r.time < t);
        }
    }
}

TEST_CASE("batches cover the stream in order", "[tgraph]") {
    EventStore s = tiny_store();
    auto bs = s.batches(4);
    REQUIRE(bs.size() == 3);
    CHECK(bs[0].end - bs[0].begin == 4);
    CHECK(bs[2].end - bs[2].begin == 2);
    CHECK(bs[0].t_min == 0.0);
    CHECK(bs[0].t_max == 3.0);
    CHECK(bs[2].t_min == 8.0);
    for (std::size_t i = 1; i < bs.size(); ++i) CHECK(bs[i].t_min >= bs[i - 1].t_max);

    std::vector<Interaction> one{{0, 1, 7.0, {}, Label::Real}};
    EventStore single(std::move(one), 2);
    auto sb = single.batches(5);
    REQUIRE(sb.size() == 1);
    CHECK(sb[0].t_min == 7.0);
    CHECK(sb[0].t_max == 7.0);
}

TEST_CASE("labeled stream requires a label column", "[tgraph]") {
    auto p = write_temp("nolabel.csv", "src,dst,time\n0,1,1.0\n");
    REQUIRE_THROWS_WITH(read_labeled_stream(p, 2), Catch::Matchers::ContainsSubstring("label"));
    auto p2 = write_temp("label.csv", "src,dst,time,label\n0,1,1.0,0\n1,0,2.0,1\n");
    EventStore s = read_labeled_stream(p2, 2);
    REQUIRE(s.num_events() == 2);
    CHECK(s.event(0).label == Label::Real);
    CHECK(s.event(1).label == Label::Injected);
}
