#include "doctest.h"

#include "confiforge/kg.hpp"

#include "test_support.hpp"

using namespace confiforge;
using testsupport::graph_from_tsv;

TEST_CASE("load_graph: header-only files give an empty graph") {
    auto g = graph_from_tsv("", "", "");
    CHECK(g.entities.empty());
    CHECK(g.relations.empty());
    CHECK(g.triples.empty());
}

TEST_CASE("load_graph: two-hop citizenship chain resolves through out_index") {
    auto g = testsupport::bobby_moore_graph();
    CHECK(g.object_of("BM", "P27") == "UK");
    CHECK(g.object_of("UK", "P35") == "C3");
    CHECK(g.object_of("BM", "P35") == "");
}

TEST_CASE("load_graph: conflicting objects for one (subject, relation) are rejected") {
    CHECK_THROWS_AS(graph_from_tsv("X\tX-land\t\t\nA\tA-city\t\t\nB\tB-city\t\t\n",
                                   "P36\tcapital\tThe capital of [subject] is [target]\tthe capital of\n",
                                   "X\tP36\tA\nX\tP36\tB\n"),
                    FunctionalViolationError);
}

TEST_CASE("load_graph: exact duplicate rows collapse") {
    auto g = graph_from_tsv("X\tX-land\t\t\nA\tA-city\t\t\n",
                            "P36\tcapital\tThe capital of [subject] is [target]\tthe capital of\n",
                            "X\tP36\tA\nX\tP36\tA\n");
    CHECK(g.triples.size() == 1);
}

TEST_CASE("load_graph: ids must resolve") {
    CHECK_THROWS_AS(graph_from_tsv("A\ta\t\t\n",
                                   "R\tr\t[subject] r [target]\t\n",
                                   "A\tR\tB\n"),
                    UnknownIdError);
}

TEST_CASE("load_graph: malformed rows and templates") {
    CHECK_THROWS_AS(graph_from_tsv("A\n", "", ""), MalformedRowError);
    CHECK_THROWS_AS(graph_from_tsv("A\ta\t\t\n", "R\tr\tno placeholders here\t\n", ""),
                    MissingPlaceholderError);
    CHECK_THROWS_AS(graph_from_tsv("A\ta\t\t\n", "R\tr\t[subject] and [subject] is [target]\t\n", ""),
                    MissingPlaceholderError);
}

TEST_CASE("load_graph: comment lines are ignored") {
    auto g = graph_from_tsv("# a comment\nA\ta\t\t\n", "", "");
    CHECK(g.entities.size() == 1);
}

TEST_CASE("loading is idempotent") {
    testsupport::TempDir dir;
    testsupport::write_file(dir.file("e.tsv"), "id\tlabel\nA\ta-label\tx|y\tz\nB\tb-label\n");
    testsupport::write_file(dir.file("r.tsv"), "id\tlabel\ttemplate\nR\tr\t[subject] to [target]\tof\n");
    testsupport::write_file(dir.file("t.tsv"), "s\tr\to\nA\tR\tB\n");
    auto g1 = load_graph(dir.file("e.tsv"), dir.file("r.tsv"), dir.file("t.tsv"));
    auto g2 = load_graph(dir.file("e.tsv"), dir.file("r.tsv"), dir.file("t.tsv"));
    CHECK(g1 == g2);
}

TEST_CASE("tails_of") {
    SUBCASE("relation with no triples") {
        auto g = graph_from_tsv("A\ta\t\t\n", "R\tr\t[subject] r [target]\t\n", "");
        CHECK(tails_of(g, "R").empty());
    }
    SUBCASE("capital tails enumerate the two objects") {
        auto g = graph_from_tsv(
            "US\tUnited States\t\t\nFR\tFrance\t\t\nDC\tWashington, D.C.\t\t\nPA\tParis\t\t\n",
            "P36\tcapital\tThe capital of [subject] is [target]\tthe capital of\n",
            "US\tP36\tDC\nFR\tP36\tPA\n");
        CHECK(tails_of(g, "P36") == std::set<std::string>{"DC", "PA"});
    }
    SUBCASE("head-of-state tails on the two-triple chain") {
        auto g = graph_from_tsv(
            "BM\tBobby Moore\t\t\nUK\tUnited Kingdom\t\t\nC3\tCharles III\t\t\n",
            "P27\tcitizenship\t[subject] is a citizen of [target]\t\n"
            "P35\thead of state\tThe name of the current head of state in [subject] is [target]\t\n",
            "BM\tP27\tUK\nUK\tP35\tC3\n");
        CHECK(tails_of(g, "P35") == std::set<std::string>{"C3"});
    }
    SUBCASE("unknown relation") {
        auto g = graph_from_tsv("", "", "");
        CHECK_THROWS_AS(tails_of(g, "nope"), UnknownIdError);
    }
}

TEST_CASE("surface_forms") {
    auto g = graph_from_tsv(
        "IN\tIndia\t\tIndian\n"
        "SOLO\tJust a label\t\t\n"
        "US\tUnited States of America\tUSA|United States\t\n",
        "", "");
    SUBCASE("label then variants") {
        CHECK(surface_forms(g, "IN") == std::vector<std::string>{"India", "Indian"});
    }
    SUBCASE("label only") {
        CHECK(surface_forms(g, "SOLO") == std::vector<std::string>{"Just a label"});
    }
    SUBCASE("length-descending within the alias group") {
        CHECK(surface_forms(g, "US") ==
              std::vector<std::string>{"United States of America", "United States", "USA"});
    }
    SUBCASE("unknown entity") { CHECK_THROWS_AS(surface_forms(g, "nope"), UnknownIdError); }
}

TEST_CASE("surface_forms is non-empty and duplicate-free for every sample entity") {
    auto g = testsupport::sample_graph();
    for (const auto& [id, _] : g.entities) {
        auto forms = surface_forms(g, id);
        REQUIRE(!forms.empty());
        std::set<std::string> unique(forms.begin(), forms.end());
        CHECK(unique.size() == forms.size());
    }
}

TEST_CASE("out_index matches each triple's object on the sample graph") {
    auto g = testsupport::sample_graph();
    CHECK(g.triples.size() == 30);
    for (const auto& t : g.triples) {
        CHECK(g.object_of(t.subject, t.relation) == t.object);
        CHECK(tails_of(g, t.relation).count(t.object) == 1);
    }
}
