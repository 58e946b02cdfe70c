#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace concord {

// Root of every error the library raises. Callers that only need a message
// can catch this; the CLI maps the concrete subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ── core-model ──────────────────────────────────────────────────────────────

class UnresolvedPlaceholder : public Error {
 public:
  explicit UnresolvedPlaceholder(std::string name)
      : Error("unresolved placeholder: {{" + name + "}}"), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class MissingImage : public Error {
 public:
  explicit MissingImage(std::string source_id)
      : Error("image not resolvable: " + source_id), source_id_(std::move(source_id)) {}
  const std::string& source_id() const { return source_id_; }

 private:
  std::string source_id_;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field_path, const std::string& detail)
      : Error("config error at '" + field_path + "': " + detail), field_path_(std::move(field_path)) {}
  const std::string& field_path() const { return field_path_; }

 private:
  std::string field_path_;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

// ── backend ─────────────────────────────────────────────────────────────────

class BackendError : public Error {
 public:
  using Error::Error;
};

class Timeout : public BackendError {
 public:
  explicit Timeout(const std::string& detail) : BackendError("timeout: " + detail) {}
};

class TransportError : public BackendError {
 public:
  explicit TransportError(const std::string& detail) : BackendError("transport error: " + detail) {}
};

class UpstreamError : public BackendError {
 public:
  UpstreamError(int status, std::string body_excerpt)
      : BackendError("upstream error " + std::to_string(status) + ": " + body_excerpt),
        status_(status),
        body_excerpt_(std::move(body_excerpt)) {}
  int status() const { return status_; }
  const std::string& body_excerpt() const { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

class AuthMissing : public BackendError {
 public:
  explicit AuthMissing(std::string env_var)
      : BackendError("credential environment variable not set: " + env_var), env_var_(std::move(env_var)) {}
  const std::string& env_var() const { return env_var_; }

 private:
  std::string env_var_;
};

class MalformedResponse : public BackendError {
 public:
  explicit MalformedResponse(std::string path)
      : BackendError("malformed response, missing or invalid: " + path), path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// ── orchestrator / governance ───────────────────────────────────────────────

class QuorumNotMet : public Error {
 public:
  QuorumNotMet(std::size_t got, std::size_t needed)
      : Error("quorum not met: " + std::to_string(got) + " of " + std::to_string(needed) + " required"),
        got_(got),
        needed_(needed) {}
  std::size_t got() const { return got_; }
  std::size_t needed() const { return needed_; }

 private:
  std::size_t got_;
  std::size_t needed_;
};

class NoComparableContent : public Error {
 public:
  NoComparableContent() : Error("no candidate produced comparable content under the output schema") {}
};

class EmptyAfterNormalization : public Error {
 public:
  EmptyAfterNormalization() : Error("text is empty after normalization") {}
};

class ReasonerFailed : public Error {
 public:
  explicit ReasonerFailed(const std::string& detail) : Error("reasoner failed: " + detail) {}
};

class ReasonerOutputInvalid : public Error {
 public:
  explicit ReasonerOutputInvalid(const std::string& detail) : Error("reasoner output invalid: " + detail) {}
};

// ── audit ───────────────────────────────────────────────────────────────────

class StorageError : public Error {
 public:
  explicit StorageError(const std::string& detail) : Error("audit storage error: " + detail) {}
};

class MalformedRecord : public Error {
 public:
  explicit MalformedRecord(std::uint64_t seq)
      : Error("malformed audit record at seq " + std::to_string(seq)), seq_(seq) {}
  std::uint64_t seq() const { return seq_; }

 private:
  std::uint64_t seq_;
};

class IncompleteTrail : public Error {
 public:
  explicit IncompleteTrail(const std::string& missing) : Error("incomplete audit trail: missing " + missing) {}
};

class ReplayDivergence : public Error {
 public:
  explicit ReplayDivergence(std::string diff)
      : Error("replay diverged from recorded decision: " + diff), diff_(std::move(diff)) {}
  // JSON patch (RFC 6902) from the recorded decision to the replayed one.
  const std::string& diff() const { return diff_; }

 private:
  std::string diff_;
};

}  // namespace concord
