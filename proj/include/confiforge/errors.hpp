#pragma once

#include <stdexcept>
#include <string>

namespace confiforge {

// Base class for every error raised by the library. Subclasses carry the
// failure category; the message carries the offending identifier/line.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- graph ingestion ----

struct MalformedRowError : Error {
    MalformedRowError(const std::string& file, std::size_t line, const std::string& why)
        : Error(file + ":" + std::to_string(line) + ": malformed row: " + why), line_number(line) {}
    std::size_t line_number;
};

struct UnknownIdError : Error {
    explicit UnknownIdError(const std::string& id) : Error("unknown id: " + id), id(id) {}
    std::string id;
};

struct FunctionalViolationError : Error {
    FunctionalViolationError(const std::string& subject, const std::string& relation)
        : Error("conflicting objects for (" + subject + ", " + relation + ")"),
          subject(subject), relation(relation) {}
    std::string subject;
    std::string relation;
};

struct MissingPlaceholderError : Error {
    explicit MissingPlaceholderError(const std::string& relation)
        : Error("relation " + relation + ": template must contain [subject] and [target] exactly once"),
          relation(relation) {}
    std::string relation;
};

// ---- path sampling / substitution ----

struct NoPathAvailableError : Error {
    explicit NoPathAvailableError(int hops)
        : Error("no path of length " + std::to_string(hops) + " exists"), hops(hops) {}
    int hops;
};

struct NoCandidateError : Error {
    explicit NoCandidateError(const std::string& detail) : Error("no substitution candidate: " + detail) {}
};

struct NoContinuationError : Error {
    explicit NoContinuationError(const std::string& detail) : Error("no factual continuation: " + detail) {}
};

struct MissingFactError : Error {
    MissingFactError(std::size_t hop, const std::string& subject, const std::string& relation)
        : Error("hop " + std::to_string(hop) + ": no fact for (" + subject + ", " + relation + ")"),
          hop(hop) {}
    std::size_t hop;
};

// ---- text generation ----

struct TailMissingError : Error {
    explicit TailMissingError(const std::string& tail)
        : Error("generated description never mentions \"" + tail + "\"") {}
};

struct BridgeLeakError : Error {
    explicit BridgeLeakError(const std::string& entity)
        : Error("generated question leaks bridge entity \"" + entity + "\"") {}
};

// ---- dataset assembly / serialization ----

struct InconsistentInputsError : Error {
    explicit InconsistentInputsError(const std::string& why) : Error("inconsistent inputs: " + why) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error("io error: " + what) {}
};

struct SchemaVersionError : Error {
    SchemaVersionError(int found, int expected)
        : Error("schema_version " + std::to_string(found) + " (expected " + std::to_string(expected) + ")") {}
};

struct MalformedRecordError : Error {
    MalformedRecordError(std::size_t line, const std::string& why)
        : Error("record at line " + std::to_string(line) + ": " + why), line_number(line) {}
    std::size_t line_number;
};

// ---- model client ----

struct ClientError : Error {
    explicit ClientError(const std::string& what) : Error(what) {}
};

struct TimeoutError : ClientError {
    explicit TimeoutError(const std::string& what) : ClientError("timeout: " + what) {}
};

struct RateLimitedError : ClientError {
    explicit RateLimitedError(const std::string& what) : ClientError("rate limited: " + what) {}
};

struct AuthError : ClientError {
    explicit AuthError(const std::string& what) : ClientError("auth error: " + what) {}
};

struct ProtocolError : ClientError {
    explicit ProtocolError(const std::string& what) : ClientError("protocol error: " + what) {}
};

struct UnsupportedByEndpointError : ClientError {
    explicit UnsupportedByEndpointError(const std::string& what)
        : ClientError("unsupported by endpoint: " + what) {}
};

// ---- evaluation ----

struct EmptyInputError : Error {
    explicit EmptyInputError(const std::string& what) : Error("empty input: " + what) {}
};

struct MissingEditsError : Error {
    MissingEditsError() : Error("ICE prompt style requires a non-empty edit statement list") {}
};

struct RunAbortedError : Error {
    explicit RunAbortedError(const std::string& why) : Error("run aborted: " + why) {}
};

// ---- dpo ----

struct EmptyBatchError : Error {
    EmptyBatchError() : Error("empty batch") {}
};

struct UnknownTokenError : Error {
    explicit UnknownTokenError(const std::string& token) : Error("token not in vocabulary: " + token) {}
};

struct DivergenceError : Error {
    explicit DivergenceError(int step)
        : Error("loss became non-finite at step " + std::to_string(step)), step(step) {}
    int step;
};

// ---- cli ----

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

struct StageInputMissingError : Error {
    explicit StageInputMissingError(const std::string& path)
        : Error("stage input missing: " + path), path(path) {}
    std::string path;
};

}  // namespace confiforge
