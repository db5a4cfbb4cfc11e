#include "doctest.h"

#include "confiforge/dataset.hpp"

#include <fstream>

#include "test_support.hpp"

using namespace confiforge;

namespace {

TaskInstance make_mc_instance() {
    auto g = testsupport::bobby_moore_graph();
    auto paths = counterfact_mc(g, FactualPath{{{"BM", "P27", "UK"}, {"UK", "P35", "C3"}}}, 1);
    auto context = compose_context(g, paths, nullptr);
    auto question = gen_question(nullptr, g, paths.factual);
    return assemble_instance(g, paths, context, question, "mc-000000");
}

TaskInstance make_qa_instance() {
    auto g = testsupport::kyiv_graph();
    PathInstance paths = counterfact_qa(g, {"KY", "P30", "EU"}, 0);
    // pin the substitute to South America for a stable fixture
    for (std::uint64_t seed = 0; seed < 64; ++seed) {
        paths = counterfact_qa(g, {"KY", "P30", "EU"}, seed);
        if (paths.counterfactual[0].object == "SA") break;
    }
    REQUIRE(paths.counterfactual[0].object == "SA");
    auto context = compose_context(g, paths, nullptr);
    auto question = gen_question(nullptr, g, paths.factual);
    return assemble_instance(g, paths, context, question, "qa-000000");
}

}  // namespace

TEST_CASE("assemble_instance") {
    SUBCASE("multi-conflict answers come from the final tails") {
        auto inst = make_mc_instance();
        CHECK(inst.answer_cf.label == "Željko Komšić");
        CHECK(inst.answer_orig.label == "Charles III");
        CHECK(inst.response_faithful.ends_with("So the final answer is Željko Komšić."));
        CHECK(inst.response_stubborn.ends_with("So the final answer is Charles III."));
        CHECK(inst.task == Task::MC);
        CHECK(inst.hops == 2);
    }
    SUBCASE("single-hop continent answers") {
        auto inst = make_qa_instance();
        CHECK(inst.answer_cf.label == "South America");
        CHECK(inst.answer_orig.label == "Europe");
        CHECK(inst.response_faithful.ends_with("So the final answer is South America."));
    }
    SUBCASE("mismatched inputs are rejected") {
        auto g = testsupport::bobby_moore_graph();
        auto paths = counterfact_mc(g, FactualPath{{{"BM", "P27", "UK"}, {"UK", "P35", "C3"}}}, 1);
        auto context = compose_context(g, paths, nullptr);
        CHECK_THROWS_AS(
            assemble_instance(g, paths, context, "Who leads the country Gordon Moore lives in?", "x"),
            InconsistentInputsError);

        ContextDoc truncated = context;
        truncated.per_hop_segments.pop_back();
        CHECK_THROWS_AS(assemble_instance(g, paths, truncated,
                                          gen_question(nullptr, g, paths.factual), "x"),
                        InconsistentInputsError);
    }
}

TEST_CASE("build_preference_pair") {
    SUBCASE("prompt concatenates context and question; chosen/rejected mirror the responses") {
        auto inst = make_mc_instance();
        auto pair = build_preference_pair(inst);
        CHECK(pair.instance_id == inst.id);
        CHECK(pair.prompt.find(inst.context_counterfactual) != std::string::npos);
        CHECK(pair.prompt.find("Q: " + inst.question) != std::string::npos);
        CHECK(pair.prompt.ends_with("A:"));
        CHECK(pair.chosen.ends_with("Željko Komšić."));
        CHECK(pair.rejected.ends_with("Charles III."));
        CHECK(pair.chosen != pair.rejected);
    }
    SUBCASE("single-hop pair ends with the counterfactual continent") {
        auto pair = build_preference_pair(make_qa_instance());
        CHECK(pair.chosen.ends_with("South America."));
    }
}

TEST_CASE("dataset round-trip") {
    testsupport::TempDir dir;
    SUBCASE("empty list") {
        write_dataset({}, dir.file("d.jsonl"));
        CHECK(read_dataset(dir.file("d.jsonl")).empty());
    }
    SUBCASE("three instances survive structurally") {
        std::vector<TaskInstance> instances{make_mc_instance(), make_qa_instance(), make_mc_instance()};
        instances[2].id = "mc-000002";
        write_dataset(instances, dir.file("d.jsonl"));
        auto loaded = read_dataset(dir.file("d.jsonl"));
        REQUIRE(loaded.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) CHECK(loaded[i] == instances[i]);
    }
    SUBCASE("serialization is byte-deterministic") {
        std::vector<TaskInstance> instances{make_mc_instance()};
        write_dataset(instances, dir.file("a.jsonl"));
        write_dataset(instances, dir.file("b.jsonl"));
        std::ifstream a(dir.file("a.jsonl")), b(dir.file("b.jsonl"));
        std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(sa == sb);
        CHECK(!sa.empty());
    }
    SUBCASE("missing question field is malformed") {
        testsupport::write_file(dir.file("bad.jsonl"),
                                "{\"schema_version\":1}\n"
                                "{\"id\":\"x\",\"task\":\"qa\"}\n");
        CHECK_THROWS_AS(read_dataset(dir.file("bad.jsonl")), MalformedRecordError);
    }
    SUBCASE("schema version mismatch") {
        testsupport::write_file(dir.file("v9.jsonl"), "{\"schema_version\":9}\n");
        CHECK_THROWS_AS(read_dataset(dir.file("v9.jsonl")), SchemaVersionError);
    }
    SUBCASE("unreadable path") {
        CHECK_THROWS_AS(read_dataset(dir.file("does-not-exist.jsonl")), IoError);
    }
}

TEST_CASE("preference round-trip and id uniqueness") {
    testsupport::TempDir dir;
    std::vector<TaskInstance> instances{make_mc_instance(), make_qa_instance()};
    std::vector<PreferencePair> pairs;
    for (const auto& inst : instances) pairs.push_back(build_preference_pair(inst));

    write_preferences(pairs, dir.file("p.jsonl"));
    auto loaded = read_preferences(dir.file("p.jsonl"));
    REQUIRE(loaded.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(loaded[i] == pairs[i]);

    std::set<std::string> ids;
    for (const auto& p : loaded) ids.insert(p.instance_id);
    CHECK(ids.size() == loaded.size());
}

TEST_CASE("normalized answers differ in every generated instance") {
    auto g = testsupport::sample_graph();
    int built = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        PathInstance paths;
        try {
            auto path = sample_factual_path(g, 2 + seed % 3, seed);
            paths = (seed % 2 == 0) ? counterfact_mr(g, path, seed) : counterfact_mc(g, path, seed);
        } catch (const Error&) {
            continue;
        }
        auto inst = assemble_instance(g, paths, compose_context(g, paths, nullptr),
                                      gen_question(nullptr, g, paths.factual), "t");
        CHECK(inst.answer_cf.label != inst.answer_orig.label);
        ++built;
    }
    CHECK(built >= 20);
}
