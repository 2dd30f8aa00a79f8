#pragma once

// Append-only JSON-lines session log. Line 1 is a header
// {"format":"coeval-log","version":1}; every later line is one record
// {"seq", "schema", "type", "ts", "data"} with strictly increasing seq.

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coeval/clock.hpp"

namespace coeval {

inline constexpr const char* kLogFormat = "coeval-log";
inline constexpr int kLogVersion = 1;
inline constexpr int kRecordSchema = 1;

struct LogRecord {
  std::uint64_t seq = 0;
  int schema = kRecordSchema;
  std::string type;
  Timestamp ts{};
  nlohmann::json data = nlohmann::json::object();
  /// Top-level fields this version does not know; written back untouched.
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static LogRecord from_json(const nlohmann::json& j);

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

/// Record types and the data fields each must carry.
const std::vector<std::string>& known_record_types();

/// Throws Error(schema_violation) when `type` is unknown or `data` lacks a
/// required field or has one of the wrong JSON type.
void validate_record(const std::string& type, const nlohmann::json& data);

struct LogContents {
  nlohmann::json header;
  std::vector<LogRecord> records;
  /// A partial trailing line (interrupted write) was found and ignored.
  bool dropped_partial_tail = false;
  /// Byte length of the intact prefix.
  std::uintmax_t intact_bytes = 0;
};

/// Reads a log without locking it. A missing or empty file reads as empty.
/// Throws Error(corrupt_record) for damage before the last line.
LogContents read_log(const std::filesystem::path& path);

class SessionLog {
 public:
  struct Options {
    bool fsync = false;
    /// Appends that would grow the file past this size fail with storage_full.
    std::optional<std::uintmax_t> max_bytes;
    Clock clock;  // defaults to the system clock
  };

  /// Opens (creating if needed) and takes an exclusive advisory lock;
  /// throws Error(log_locked) if another writer holds it. A partial trailing
  /// line is truncated away before the first append.
  SessionLog(std::filesystem::path path, Options options);
  explicit SessionLog(std::filesystem::path path);
  ~SessionLog();
  SessionLog(const SessionLog&) = delete;
  SessionLog& operator=(const SessionLog&) = delete;

  /// Validates, assigns the next sequence number and writes the record with
  /// one write() call. Returns the sequence number.
  std::uint64_t append(const std::string& type, nlohmann::json data);

  /// Records present when the log was opened.
  const LogContents& initial_contents() const noexcept { return initial_; }
  std::uint64_t last_seq() const;
  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  void write_all(const std::string& bytes);

  std::filesystem::path path_;
  Options options_;
  int fd_ = -1;
  mutable std::mutex mutex_;
  std::uint64_t last_seq_ = 0;
  std::uintmax_t size_ = 0;
  LogContents initial_;
};

/// Writes header + records to `path` atomically (temp file + rename),
/// preserving each record's unknown fields.
void rewrite_log(const std::filesystem::path& path, const nlohmann::json& header, std::span<const LogRecord> records);

}  // namespace coeval
