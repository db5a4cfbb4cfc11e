#include "doctest.h"

#include "confiforge/sampler.hpp"

#include <map>

#include "test_support.hpp"

using namespace confiforge;
using testsupport::graph_from_tsv;

namespace {

KnowledgeGraph chain_abc() {
    return graph_from_tsv("A\ta\t\t\nB\tb\t\t\nC\tc\t\t\n",
                          "r1\tfirst\t[subject] r1 [target]\t\nr2\tsecond\t[subject] r2 [target]\t\n",
                          "A\tr1\tB\nB\tr2\tC\n");
}

bool paths_equal(const FactualPath& a, const std::vector<Triple>& b) { return a.hops == b; }

}  // namespace

TEST_CASE("sample_factual_path: unique two-hop chain") {
    auto g = chain_abc();
    auto p = sample_factual_path(g, 2, 123);
    CHECK(paths_equal(p, {{"A", "r1", "B"}, {"B", "r2", "C"}}));
}

TEST_CASE("sample_factual_path: no three-hop chain exists") {
    auto g = chain_abc();
    CHECK_THROWS_AS(sample_factual_path(g, 3, 7), NoPathAvailableError);
}

TEST_CASE("sample_factual_path: citizenship chain is found") {
    auto g = testsupport::bobby_moore_graph();
    bool found = false;
    for (std::uint64_t seed = 0; seed < 32 && !found; ++seed) {
        auto p = sample_factual_path(g, 2, seed);
        found = paths_equal(p, {{"BM", "P27", "UK"}, {"UK", "P35", "C3"}});
    }
    CHECK(found);
}

TEST_CASE("sample_factual_path: every draw is in the brute-force enumeration") {
    auto g = testsupport::sample_graph();
    for (std::size_t n : {2u, 3u, 4u}) {
        auto oracle = testsupport::oracle_paths(g, static_cast<int>(n));
        REQUIRE(!oracle.empty());
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            auto p = sample_factual_path(g, n, seed);
            bool member = false;
            for (const auto& o : oracle) {
                if (p.hops == o) {
                    member = true;
                    break;
                }
            }
            CHECK(member);
        }
        // the two routes agree on the search space
        CHECK(enumerate_factual_paths(g, n).size() == oracle.size());
    }
}

TEST_CASE("sample_factual_path: invalid hop counts and empty graphs") {
    auto g = chain_abc();
    CHECK_THROWS_AS(sample_factual_path(g, 0, 1), Error);
    CHECK_THROWS_AS(sample_factual_path(g, 5, 1), Error);
    auto empty = graph_from_tsv("", "", "");
    CHECK_THROWS_AS(sample_factual_path(empty, 2, 1), NoPathAvailableError);
}

TEST_CASE("same_type_candidates") {
    auto g = graph_from_tsv(
        "US\tUnited States\t\t\nFR\tFrance\t\t\nCA\tCanada\t\t\n"
        "DC\tWashington, D.C.\t\t\nPA\tParis\t\t\nOT\tOttawa\t\t\n",
        "P36\tcapital\tThe capital of [subject] is [target]\tthe capital of\n",
        "US\tP36\tDC\nFR\tP36\tPA\nCA\tP36\tOT\n");
    SUBCASE("set subtraction") {
        CHECK(same_type_candidates(g, "P36", {"DC"}) == std::set<std::string>{"PA", "OT"});
    }
    SUBCASE("excluding the full tail set leaves nothing") {
        CHECK(same_type_candidates(g, "P36", {"DC", "PA", "OT"}).empty());
    }
}

TEST_CASE("same_type_candidates: head-of-state pool") {
    auto g = testsupport::bobby_moore_graph();
    CHECK(same_type_candidates(g, "P35", {"JB"}) == std::set<std::string>{"C3", "ZK"});
}

TEST_CASE("counterfact_qa") {
    auto g = testsupport::kyiv_graph();
    const Triple kyiv{"KY", "P30", "EU"};

    SUBCASE("pool is {South America, Asia}; a seeded pick lands on South America") {
        CHECK(same_type_candidates(g, "P30", {"EU", "KY"}) == std::set<std::string>{"SA", "AS"});
        bool south_america_seen = false;
        for (std::uint64_t seed = 0; seed < 32 && !south_america_seen; ++seed) {
            auto inst = counterfact_qa(g, kyiv, seed);
            REQUIRE(inst.counterfactual.size() == 1);
            CHECK(inst.counterfactual[0].subject == "KY");
            CHECK(inst.counterfactual[0].relation == "P30");
            if (inst.counterfactual[0].object == "SA") south_america_seen = true;
        }
        CHECK(south_america_seen);
    }
    SUBCASE("empty pool") {
        auto g2 = graph_from_tsv("K\tk\t\t\nE\te\t\t\n",
                                 "P30\tcontinent\t[subject] is in [target]\t\n", "K\tP30\tE\n");
        CHECK_THROWS_AS(counterfact_qa(g2, {"K", "P30", "E"}, 3), NoCandidateError);
    }
    SUBCASE("determinism: the same seed picks the same substitute") {
        auto a = counterfact_qa(g, kyiv, 99);
        auto b = counterfact_qa(g, kyiv, 99);
        CHECK(a.counterfactual == b.counterfactual);
        CHECK(a.substituted_indices == std::set<std::size_t>{0});
        CHECK(a.factual.hops == a.original);
    }
}

TEST_CASE("counterfact_mr") {
    // Two parallel origin->currency chains so hop 0 has a candidate with a
    // factual continuation.
    auto g = graph_from_tsv(
        "GB\tGully Boy\t\t\nTG\tTop Gun\t\t\n"
        "IN\tIndia\t\tIndian\nUS\tUnited States of America\t\tAmerican\n"
        "RU\tIndian rupee\t\t\nUD\tUnited States dollar\t\t\n",
        "P495\tcountry of origin\t[subject] originated from [target]\tthe country of origin of\n"
        "P38\tcurrency\t[subject]'s currency is [target]\tthe currency of\n",
        "GB\tP495\tIN\nTG\tP495\tUS\nIN\tP38\tRU\nUS\tP38\tUD\n");
    FactualPath gully{{{"GB", "P495", "IN"}, {"IN", "P38", "RU"}}};

    SUBCASE("substituting the first hop re-derives the factual continuation") {
        bool hop0_seen = false;
        for (std::uint64_t seed = 0; seed < 64 && !hop0_seen; ++seed) {
            auto inst = counterfact_mr(g, gully, seed);
            REQUIRE(inst.counterfactual.size() == 2);
            CHECK(inst.substituted_indices.size() == 1);
            if (*inst.substituted_indices.begin() == 0) {
                hop0_seen = true;
                CHECK(inst.counterfactual[0] == Triple{"GB", "P495", "US"});
                CHECK(inst.counterfactual[1] == Triple{"US", "P38", "UD"});
                CHECK(inst.original == gully.hops);
            }
        }
        CHECK(hop0_seen);
    }
    SUBCASE("substituting the last hop swaps only the tail") {
        bool hop1_seen = false;
        for (std::uint64_t seed = 0; seed < 64 && !hop1_seen; ++seed) {
            auto inst = counterfact_mr(g, gully, seed);
            if (*inst.substituted_indices.begin() == 1) {
                hop1_seen = true;
                CHECK(inst.counterfactual[0] == gully.hops[0]);
                CHECK(inst.counterfactual[1] == Triple{"IN", "P38", "UD"});
            }
        }
        CHECK(hop1_seen);
    }
    SUBCASE("dead-end candidates raise NoContinuation") {
        // B2 is an alternative r1 tail with no outgoing r2 edge.
        auto g2 = graph_from_tsv(
            "A\ta\t\t\nB\tb\t\t\nB2\tb2\t\t\nC\tc\t\t\nA2\ta2\t\t\n",
            "r1\tfirst\t[subject] r1 [target]\t\n"
            "r2\tsecond\t[subject] r2 [target]\t\n",
            "A\tr1\tB\nA2\tr1\tB2\nB\tr2\tC\n");
        CHECK_THROWS_AS(counterfact_mr(g2, FactualPath{{{"A", "r1", "B"}, {"B", "r2", "C"}}}, 5),
                        NoContinuationError);
    }
    SUBCASE("no substitutable hop raises NoCandidate") {
        auto g3 = chain_abc();
        CHECK_THROWS_AS(counterfact_mr(g3, FactualPath{{{"A", "r1", "B"}, {"B", "r2", "C"}}}, 5),
                        NoCandidateError);
    }
}

TEST_CASE("counterfact_mc") {
    SUBCASE("forced two-hop instance matches the citizenship example") {
        auto g = testsupport::bobby_moore_graph();
        FactualPath path{{{"BM", "P27", "UK"}, {"UK", "P35", "C3"}}};
        auto inst = counterfact_mc(g, path, 42);
        CHECK(inst.counterfactual ==
              std::vector<Triple>{{"BM", "P27", "US"}, {"US", "P35", "ZK"}});
        CHECK(inst.original == std::vector<Triple>{{"BM", "P27", "UK"}, {"US", "P35", "JB"}});
        CHECK(inst.substituted_indices == std::set<std::size_t>{0, 1});
    }
    SUBCASE("singleton pools raise NoCandidate") {
        auto g = chain_abc();
        CHECK_THROWS_AS(counterfact_mc(g, FactualPath{{{"A", "r1", "B"}, {"B", "r2", "C"}}}, 7),
                        NoCandidateError);
    }
    SUBCASE("chaining and relation equality hold across seeded runs") {
        auto g = testsupport::sample_graph();
        int built = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            FactualPath path = sample_factual_path(g, 2 + seed % 3, seed);
            PathInstance inst;
            try {
                inst = counterfact_mc(g, path, seed);
            } catch (const Error&) {
                continue;  // some sampled paths have no full substitution
            }
            ++built;
            REQUIRE(inst.counterfactual.size() == path.size());
            CHECK(inst.counterfactual[0].subject == path.head());
            for (std::size_t i = 0; i < path.size(); ++i) {
                CHECK(inst.counterfactual[i].relation == path.hops[i].relation);
                CHECK(inst.original[i].relation == path.hops[i].relation);
                CHECK(inst.counterfactual[i].object != inst.original[i].object);
                if (i > 0) {
                    CHECK(inst.counterfactual[i].subject == inst.counterfactual[i - 1].object);
                    CHECK(inst.original[i].subject == inst.counterfactual[i - 1].object);
                }
            }
        }
        CHECK(built >= 50);
    }
}

TEST_CASE("substitution instances are deterministic in (graph, args, seed)") {
    auto g = testsupport::sample_graph();
    for (std::uint64_t seed : {3ull, 17ull, 95ull}) {
        auto p1 = sample_factual_path(g, 3, seed);
        auto p2 = sample_factual_path(g, 3, seed);
        CHECK(p1 == p2);
        auto a = counterfact_mr(g, p1, seed);
        auto b = counterfact_mr(g, p2, seed);
        CHECK(a.counterfactual == b.counterfactual);
        CHECK(a.original == b.original);
        CHECK(a.substituted_indices == b.substituted_indices);
    }
}
