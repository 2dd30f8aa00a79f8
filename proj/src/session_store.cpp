#include "coeval/session_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <spdlog/spdlog.h>

#include "coeval/error.hpp"

namespace coeval {

using nlohmann::json;

namespace {

enum class Field { string, number, object, array };

struct FieldSpec {
  const char* name;
  Field kind;
};

const std::map<std::string, std::vector<FieldSpec>>& record_specs() {
  static const std::map<std::string, std::vector<FieldSpec>> specs{
      {"task_created", {{"task", Field::object}}},
      {"draft_generated",
       {{"batch_id", Field::string}, {"task_id", Field::string}, {"sets", Field::array}, {"consistency", Field::object}}},
      {"action_applied", {{"set_id", Field::string}, {"action", Field::object}}},
      {"set_finalized", {{"set_id", Field::string}}},
      {"run_created", {{"run", Field::object}}},
      {"sample_evaluated", {{"run_id", Field::string}, {"index", Field::number}, {"evaluation", Field::object}}},
      {"sample_failed",
       {{"run_id", Field::string}, {"index", Field::number}, {"sample_id", Field::string}, {"reason", Field::string}}},
      {"evaluation_finalized", {{"evaluation", Field::object}}},
      {"human_scores_imported", {{"run_id", Field::string}, {"scores", Field::array}}},
      {"report_computed", {{"run_id", Field::string}, {"kind", Field::string}, {"report", Field::object}}},
  };
  return specs;
}

bool has_kind(const json& v, Field kind) {
  switch (kind) {
    case Field::string: return v.is_string();
    case Field::number: return v.is_number_integer();
    case Field::object: return v.is_object();
    case Field::array: return v.is_array();
  }
  return false;
}

json make_header() { return json{{"format", kLogFormat}, {"version", kLogVersion}}; }

void check_header(const json& header, const std::filesystem::path& path) {
  if (!header.is_object() || header.value("format", "") != kLogFormat)
    throw Error(Errc::corrupt_record, path.string() + " is not a session log", {{"seq", 0}});
  if (header.value("version", 0) > kLogVersion)
    throw Error(Errc::corrupt_record, path.string() + " was written by a newer version",
                {{"seq", 0}, {"version", header.value("version", 0)}});
}

}  // namespace

const std::vector<std::string>& known_record_types() {
  static const std::vector<std::string> types = [] {
    std::vector<std::string> t;
    for (const auto& [name, _] : record_specs()) t.push_back(name);
    return t;
  }();
  return types;
}

void validate_record(const std::string& type, const json& data) {
  const auto it = record_specs().find(type);
  if (it == record_specs().end()) throw Error(Errc::schema_violation, "unknown record type: " + type);
  if (!data.is_object()) throw Error(Errc::schema_violation, type + " data must be an object");
  for (const auto& field : it->second) {
    if (!data.contains(field.name) || !has_kind(data.at(field.name), field.kind))
      throw Error(Errc::schema_violation, type + " record has a missing or mistyped field: " + field.name,
                  {{"type", type}, {"field", field.name}});
  }
}

json LogRecord::to_json() const {
  json j = extra.is_object() ? extra : json::object();
  j["seq"] = seq;
  j["schema"] = schema;
  j["type"] = type;
  j["ts"] = format_rfc3339(ts);
  j["data"] = data;
  return j;
}

LogRecord LogRecord::from_json(const json& j) {
  LogRecord r;
  r.seq = j.at("seq").get<std::uint64_t>();
  r.schema = j.at("schema").get<int>();
  r.type = j.at("type").get<std::string>();
  r.ts = parse_rfc3339(j.at("ts").get<std::string>());
  r.data = j.at("data");
  for (const auto& [key, value] : j.items())
    if (key != "seq" && key != "schema" && key != "type" && key != "ts" && key != "data") r.extra[key] = value;
  return r;
}

LogContents read_log(const std::filesystem::path& path) {
  LogContents out;
  out.header = make_header();
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string content = buffer.str();
  if (content.empty()) return out;

  std::size_t pos = 0;
  std::size_t line_no = 0;
  std::uint64_t last_seq = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const auto end = terminated ? nl : content.size();
    const std::string line = content.substr(pos, end - pos);
    const bool last_line = !terminated || end + 1 >= content.size();
    ++line_no;

    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      if (last_line) {
        spdlog::warn("{}: dropping partial trailing record after seq {}", path.string(), last_seq);
        out.dropped_partial_tail = true;
        break;
      }
      throw Error(Errc::corrupt_record, path.string() + ": unreadable record after seq " + std::to_string(last_seq),
                  {{"seq", last_seq + 1}, {"line", line_no}});
    }

    if (line_no == 1) {
      check_header(j, path);
      out.header = j;
    } else {
      LogRecord r;
      try {
        r = LogRecord::from_json(j);
      } catch (const std::exception& e) {
        throw Error(Errc::corrupt_record, path.string() + ": malformed record: " + e.what(),
                    {{"seq", last_seq + 1}, {"line", line_no}});
      }
      if (r.seq <= last_seq)
        throw Error(Errc::corrupt_record, path.string() + ": sequence numbers not increasing",
                    {{"seq", r.seq}, {"line", line_no}});
      last_seq = r.seq;
      out.records.push_back(std::move(r));
    }
    out.intact_bytes = terminated ? end + 1 : end;
    if (!terminated) break;
    pos = end + 1;
  }
  return out;
}

SessionLog::SessionLog(std::filesystem::path path) : SessionLog(std::move(path), Options{}) {}

SessionLog::SessionLog(std::filesystem::path path, Options options)
    : path_(std::move(path)), options_(std::move(options)) {
  if (!options_.clock) options_.clock = system_clock();
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(Errc::io_error, "cannot open " + path_.string() + ": " + std::strerror(errno));
  if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw Error(Errc::log_locked, path_.string() + " is locked by another writer");
  }
  try {
    initial_ = read_log(path_);
    struct stat st {};
    ::fstat(fd_, &st);
    size_ = static_cast<std::uintmax_t>(st.st_size);
    if (size_ == 0) {
      write_all(make_header().dump() + "\n");
      initial_.intact_bytes = size_;
    } else if (initial_.intact_bytes < size_) {
      if (::ftruncate(fd_, static_cast<off_t>(initial_.intact_bytes)) != 0)
        throw Error(Errc::io_error, "cannot truncate partial record in " + path_.string());
      size_ = initial_.intact_bytes;
    }
    if (!initial_.records.empty()) last_seq_ = initial_.records.back().seq;
  } catch (...) {
    ::close(fd_);
    fd_ = -1;
    throw;
  }
}

SessionLog::~SessionLog() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

std::uint64_t SessionLog::last_seq() const {
  std::lock_guard lock(mutex_);
  return last_seq_;
}

void SessionLog::write_all(const std::string& bytes) {
  if (options_.max_bytes && size_ + bytes.size() > *options_.max_bytes)
    throw Error(Errc::storage_full, "session log would exceed its size limit",
                {{"limit", *options_.max_bytes}, {"size", size_}});
  const auto written = ::write(fd_, bytes.data(), bytes.size());
  if (written != static_cast<ssize_t>(bytes.size())) {
    const int err = errno;
    if (written > 0 && ::ftruncate(fd_, static_cast<off_t>(size_)) != 0)
      spdlog::error("{}: could not roll back a short write", path_.string());
    if (written >= 0 || err == ENOSPC || err == EDQUOT || err == EFBIG)
      throw Error(Errc::storage_full, "no space left writing " + path_.string());
    throw Error(Errc::io_error, "write to " + path_.string() + " failed: " + std::strerror(err));
  }
  if (options_.fsync && ::fsync(fd_) != 0) throw Error(Errc::io_error, "fsync failed on " + path_.string());
  size_ += bytes.size();
}

std::uint64_t SessionLog::append(const std::string& type, json data) {
  validate_record(type, data);
  std::lock_guard lock(mutex_);
  LogRecord r;
  r.seq = last_seq_ + 1;
  r.type = type;
  r.ts = options_.clock();
  r.data = std::move(data);
  write_all(r.to_json().dump() + "\n");
  last_seq_ = r.seq;
  return r.seq;
}

void rewrite_log(const std::filesystem::path& path, const json& header, std::span<const LogRecord> records) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
    out << header.dump() << "\n";
    for (const auto& r : records) out << r.to_json().dump() << "\n";
    if (!out) throw Error(Errc::io_error, "failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace coeval
