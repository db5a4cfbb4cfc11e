#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "confiforge/dataset.hpp"
#include "confiforge/errors.hpp"
#include "confiforge/kg.hpp"
#include "confiforge/model_client.hpp"
#include "confiforge/rng.hpp"
#include "confiforge/sampler.hpp"
#include "confiforge/textgen.hpp"

namespace confiforge {

struct GenerationConfig {
    Task task = Task::QA;
    int count = 100;
    std::uint64_t seed = 0;
    int hops = 0;  // 0 = default policy: QA 1 hop, MR/MC round-robin over 2,3,4
    TextGenOptions textgen;
    int max_attempts = 100;
    int workers = 4;
};

namespace detail {

inline int hops_for_index(const GenerationConfig& cfg, int index) {
    if (cfg.task == Task::QA) return 1;
    if (cfg.hops >= 2 && cfg.hops <= 4) return cfg.hops;
    return 2 + (index % 3);
}

inline std::string instance_id(Task task, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s-%06d", to_string(task).c_str(), index);
    return buf;
}

inline PathInstance substituted_path(const KnowledgeGraph& g, const GenerationConfig& cfg, int hops,
                                     std::uint64_t seed) {
    const FactualPath path = sample_factual_path(g, static_cast<std::size_t>(hops), seed);
    switch (cfg.task) {
        case Task::QA: return counterfact_qa(g, path.hops.front(), seed);
        case Task::MR: return counterfact_mr(g, path, seed);
        case Task::MC: return counterfact_mc(g, path, seed);
    }
    throw ConfigError("unknown task");
}

}  // namespace detail

/// Deterministically generates one instance for (config, index): substitution
/// failures on a sampled path roll to the next derived attempt seed.
inline TaskInstance build_instance(const KnowledgeGraph& g, ModelClient* client,
                                   const GenerationConfig& cfg, int index) {
    const int hops = detail::hops_for_index(cfg, index);
    const std::uint64_t instance_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(index));

    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const std::uint64_t seed = mix_seed(instance_seed, static_cast<std::uint64_t>(attempt));
        PathInstance paths;
        try {
            paths = detail::substituted_path(g, cfg, hops, seed);
        } catch (const NoCandidateError&) {
            continue;
        } catch (const NoContinuationError&) {
            continue;
        } catch (const MissingFactError&) {
            continue;
        }
        const ContextDoc context = compose_context(g, paths, client, cfg.textgen);
        const std::string question = gen_question(client, g, paths.factual, cfg.textgen);
        return assemble_instance(g, paths, context, question, detail::instance_id(cfg.task, index));
    }
    throw Error("exhausted " + std::to_string(cfg.max_attempts) + " attempts for instance " +
                std::to_string(index) + " (" + std::to_string(hops) + " hops)");
}

/// Generates `count` instances. Work is split across workers; every instance
/// depends only on (graph, config, index), so results are identical however
/// the threads interleave.
inline std::vector<TaskInstance> build_instances(const KnowledgeGraph& g, ModelClient* client,
                                                 const GenerationConfig& cfg) {
    if (cfg.count <= 0) throw ConfigError("count must be positive");
    std::vector<TaskInstance> out(static_cast<std::size_t>(cfg.count));

    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (int i = next.fetch_add(1); i < cfg.count; i = next.fetch_add(1)) {
            try {
                out[static_cast<std::size_t>(i)] = build_instance(g, client, cfg, i);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int threads = std::max(1, std::min(cfg.workers, cfg.count));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

inline std::vector<PreferencePair> build_preference_pairs(const std::vector<TaskInstance>& instances,
                                                          const PromptScaffold& scaffold = {}) {
    std::vector<PreferencePair> pairs;
    pairs.reserve(instances.size());
    for (const auto& inst : instances) pairs.push_back(build_preference_pair(inst, scaffold));
    return pairs;
}

}  // namespace confiforge
