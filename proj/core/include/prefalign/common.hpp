#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace prefalign {

using json = nlohmann::json;

// Domain errors map to CLI exit code 1, environment errors to exit code 2.
enum class ErrorCategory { Domain, Environment };

class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message,
        ErrorCategory category = ErrorCategory::Domain)
      : std::runtime_error(kind + ": " + message),
        kind_(std::move(kind)),
        category_(category) {}

  const std::string& kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_; }

 private:
  std::string kind_;
  ErrorCategory category_;
};

#define PREFALIGN_DOMAIN_ERROR(Name)                            \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& message)                   \
        : Error(#Name, message, ErrorCategory::Domain) {}       \
  }

#define PREFALIGN_ENV_ERROR(Name)                               \
  class Name : public Error {                                   \
   public:                                                      \
    explicit Name(const std::string& message)                   \
        : Error(#Name, message, ErrorCategory::Environment) {}  \
  }

PREFALIGN_DOMAIN_ERROR(DomainError);
PREFALIGN_DOMAIN_ERROR(EmptyInput);
PREFALIGN_DOMAIN_ERROR(EmptyDataset);
PREFALIGN_DOMAIN_ERROR(LexError);
PREFALIGN_DOMAIN_ERROR(AugmentError);
PREFALIGN_DOMAIN_ERROR(MissingPlaceholder);
PREFALIGN_DOMAIN_ERROR(PreconditionViolation);
PREFALIGN_DOMAIN_ERROR(MalformedResponse);
PREFALIGN_DOMAIN_ERROR(NoCodeFound);
PREFALIGN_DOMAIN_ERROR(MalformedVerdict);
PREFALIGN_DOMAIN_ERROR(SequenceTooLong);
PREFALIGN_DOMAIN_ERROR(StatsNotFitted);
PREFALIGN_DOMAIN_ERROR(RewardNotFrozen);
PREFALIGN_DOMAIN_ERROR(ModelFrozen);
PREFALIGN_DOMAIN_ERROR(NonDeterministicLoss);
PREFALIGN_DOMAIN_ERROR(NonFiniteGradient);
PREFALIGN_DOMAIN_ERROR(MissingPrerequisite);
PREFALIGN_DOMAIN_ERROR(FormatError);

PREFALIGN_ENV_ERROR(TransportError);
PREFALIGN_ENV_ERROR(JudgeUnavailable);
PREFALIGN_ENV_ERROR(SandboxSetupError);
PREFALIGN_ENV_ERROR(IoError);

#undef PREFALIGN_DOMAIN_ERROR
#undef PREFALIGN_ENV_ERROR

class RateLimited : public Error {
 public:
  RateLimited(const std::string& message, double retry_after_seconds)
      : Error("RateLimited", message, ErrorCategory::Environment),
        retry_after_(retry_after_seconds) {}
  double retry_after() const noexcept { return retry_after_; }

 private:
  double retry_after_;
};

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Stable 64-bit seed derived from a base seed and a textual key. Independent
/// of std::hash so that derived streams are identical across builds.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view key);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames it into place, so readers
/// never observe a partially written file under `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

std::vector<json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<json>& records);
void write_jsonl_atomic(const std::filesystem::path& path,
                        const std::vector<json>& records);

std::string trim(std::string_view s);

}  // namespace prefalign
