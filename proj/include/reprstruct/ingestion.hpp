#pragma once

// File formats.
//
// HREP (binary, little-endian, no padding):
//   bytes 0-5   magic "HREP1\n"
//   bytes 6-9   uint32 D
//   bytes 10-17 uint64 M
//   then M*D binary32 values, row-major.
//
// Tokens: UTF-8 JSONL, one object per sentence
//   {"sentence_id": int, "tokens": [str...], "pos": [str...]?, "labels": {name: [str...]}?}
//
// Manifest: {"run_id", "seed", "tokens_path", "pos_path"?, "checkpoints": [{"step", "reps_path", "loss", "gen_acc"?}]}
// Relative paths in a manifest resolve against the manifest's directory.

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "reprstruct/batch.hpp"
#include "reprstruct/error.hpp"
#include "reprstruct/labelsets.hpp"

namespace reprstruct {

namespace fs = std::filesystem;

inline constexpr std::string_view kHrepMagic{"HREP1\n", 6};
inline constexpr std::size_t kHrepHeaderSize = 18;

static_assert(std::endian::native == std::endian::little, "HREP I/O assumes a little-endian host");

namespace detail {

inline std::string read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) fail(ErrorCode::io_error, "read failed: " + path.string());
  return std::move(buf).str();
}

inline void write_file_bytes(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io_error, "cannot open for writing " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::io_error, "write failed: " + path.string());
}

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void store_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

inline RepresentationBatch batch_from_floats(const std::string& where, std::size_t rows, std::size_t dims,
                                             const char* payload) {
  if (rows == 0 || dims == 0) {
    fail(ErrorCode::invalid_data, where + ": empty matrix (rows=" + std::to_string(rows) +
                                      " dims=" + std::to_string(dims) + ")");
  }
  std::vector<double> values(rows * dims);
  for (std::size_t i = 0; i < values.size(); ++i) {
    float f = load_le<float>(payload + 4 * i);
    if (!std::isfinite(f)) {
      fail(ErrorCode::invalid_data,
           where + ": non-finite value at row " + std::to_string(i / dims) + ", dim " + std::to_string(i % dims));
    }
    values[i] = static_cast<double>(f);
  }
  return RepresentationBatch(rows, dims, std::move(values));
}

}  // namespace detail

inline RepresentationBatch parse_reps(std::string_view bytes, const std::string& where = "<memory>") {
  if (bytes.size() < kHrepMagic.size() || bytes.substr(0, kHrepMagic.size()) != kHrepMagic) {
    fail(ErrorCode::format_error, where + ": bad magic, expected \"HREP1\\n\"");
  }
  if (bytes.size() < kHrepHeaderSize) {
    fail(ErrorCode::format_error, where + ": truncated header, expected " + std::to_string(kHrepHeaderSize) +
                                      " bytes, got " + std::to_string(bytes.size()));
  }
  auto dims = detail::load_le<std::uint32_t>(bytes.data() + 6);
  auto rows = detail::load_le<std::uint64_t>(bytes.data() + 10);
  if (dims != 0 && rows > std::numeric_limits<std::uint64_t>::max() / 4 / dims) {
    fail(ErrorCode::format_error, where + ": header sizes overflow");
  }
  std::uint64_t expected = rows * dims * 4;
  std::uint64_t actual = bytes.size() - kHrepHeaderSize;
  if (actual < expected) {
    fail(ErrorCode::format_error, where + ": truncated payload, expected " + std::to_string(expected) +
                                      " bytes, got " + std::to_string(actual));
  }
  if (actual > expected) {
    fail(ErrorCode::format_error, where + ": " + std::to_string(actual - expected) +
                                      " trailing bytes after payload of " + std::to_string(expected));
  }
  return detail::batch_from_floats(where, rows, dims, bytes.data() + kHrepHeaderSize);
}

inline RepresentationBatch read_reps(const fs::path& path) {
  return parse_reps(detail::read_file_bytes(path), path.string());
}

/// Encodes as HREP. Values are narrowed to binary32, so a batch round-trips
/// bit-exactly when its values are float-representable (always true for
/// batches that were read from HREP or produced by the synth generators).
inline std::string encode_reps(const RepresentationBatch& batch) {
  if (batch.empty()) fail(ErrorCode::invalid_data, "refusing to encode a batch with zero rows");
  if (batch.dims() > std::numeric_limits<std::uint32_t>::max()) fail(ErrorCode::invalid_data, "too many dims for HREP");
  std::string out;
  out.reserve(kHrepHeaderSize + batch.values().size() * 4);
  out.append(kHrepMagic);
  detail::store_le<std::uint32_t>(out, static_cast<std::uint32_t>(batch.dims()));
  detail::store_le<std::uint64_t>(out, batch.rows());
  for (std::size_t i = 0; i < batch.values().size(); ++i) {
    float f = static_cast<float>(batch.values()[i]);
    if (!std::isfinite(f)) {
      fail(ErrorCode::invalid_data, "value at row " + std::to_string(i / batch.dims()) + ", dim " +
                                        std::to_string(i % batch.dims()) + " does not fit binary32");
    }
    detail::store_le<float>(out, f);
  }
  return out;
}

inline void write_reps(const RepresentationBatch& batch, const fs::path& path) {
  detail::write_file_bytes(path, encode_reps(batch));
}

/// Imports a NumPy .npy v1.0 file holding a 2-D little-endian float32 C-order
/// array. Anything else is rejected.
inline RepresentationBatch read_npy(const fs::path& path) {
  const std::string where = path.string();
  std::string bytes = detail::read_file_bytes(path);
  static constexpr std::string_view magic{"\x93NUMPY", 6};
  if (bytes.size() < 10 || std::string_view(bytes).substr(0, 6) != magic) {
    fail(ErrorCode::format_error, where + ": not an .npy file");
  }
  if (bytes[6] != 1 || bytes[7] != 0) fail(ErrorCode::format_error, where + ": only .npy version 1.0 is supported");
  std::size_t header_len = detail::load_le<std::uint16_t>(bytes.data() + 8);
  if (bytes.size() < 10 + header_len) fail(ErrorCode::format_error, where + ": truncated .npy header");
  std::string header = bytes.substr(10, header_len);
  auto compact = [](std::string s) {
    std::string out;
    for (char c : s) {
      if (c != ' ') out.push_back(c == '"' ? '\'' : c);
    }
    return out;
  };
  header = compact(header);
  if (header.find("'descr':'<f4'") == std::string::npos) {
    fail(ErrorCode::format_error, where + ": .npy dtype must be '<f4'");
  }
  if (header.find("'fortran_order':False") == std::string::npos) {
    fail(ErrorCode::format_error, where + ": .npy array must be C-order");
  }
  auto pos = header.find("'shape':(");
  if (pos == std::string::npos) fail(ErrorCode::format_error, where + ": .npy header has no shape");
  auto close = header.find(')', pos);
  std::string shape = header.substr(pos + 9, close - pos - 9);
  std::vector<std::uint64_t> extents;
  std::size_t start = 0;
  while (start < shape.size()) {
    auto comma = shape.find(',', start);
    std::string part = shape.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!part.empty()) {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc{}) fail(ErrorCode::format_error, where + ": bad .npy shape");
      extents.push_back(v);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (extents.size() != 2) fail(ErrorCode::format_error, where + ": .npy array must be 2-D");
  std::uint64_t expected = extents[0] * extents[1] * 4;
  std::uint64_t actual = bytes.size() - 10 - header_len;
  if (actual != expected) {
    fail(ErrorCode::format_error, where + ": .npy payload has " + std::to_string(actual) + " bytes, expected " +
                                      std::to_string(expected));
  }
  return detail::batch_from_floats(where, extents[0], extents[1], bytes.data() + 10 + header_len);
}

/// Header-less comma-separated floats, one row per line.
inline RepresentationBatch read_csv_matrix(const fs::path& path) {
  const std::string where = path.string();
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + where);
  std::vector<double> values;
  std::size_t dims = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t fields = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      while (p < end && *p == ' ') ++p;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) fail(ErrorCode::format_error, where + ":" + std::to_string(lineno) + ": bad number");
      if (!std::isfinite(v)) {
        fail(ErrorCode::invalid_data, where + ": non-finite value at row " + std::to_string(rows) + ", dim " +
                                          std::to_string(fields));
      }
      values.push_back(v);
      ++fields;
      p = next;
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      if (*p != ',') fail(ErrorCode::format_error, where + ":" + std::to_string(lineno) + ": expected ','");
      ++p;
    }
    if (rows == 0) dims = fields;
    if (fields != dims) {
      fail(ErrorCode::format_error, where + ":" + std::to_string(lineno) + ": " + std::to_string(fields) +
                                        " columns, expected " + std::to_string(dims));
    }
    ++rows;
  }
  if (rows == 0) fail(ErrorCode::invalid_data, where + ": empty matrix");
  return RepresentationBatch(rows, dims, std::move(values));
}

/// Reads a batch by extension: .npy, .csv, anything else as HREP.
inline RepresentationBatch load_batch(const fs::path& path) {
  auto ext = path.extension().string();
  if (ext == ".npy") return read_npy(path);
  if (ext == ".csv") return read_csv_matrix(path);
  return read_reps(path);
}

namespace detail {

inline std::vector<std::string> string_array(const nlohmann::json& j, const std::string& field, const std::string& where) {
  if (!j.is_array()) fail(ErrorCode::format_error, where + ": '" + field + "' must be an array of strings");
  std::vector<std::string> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_string()) fail(ErrorCode::format_error, where + ": '" + field + "' must be an array of strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

inline SentenceRecord parse_record(const std::string& line, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::format_error, where + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) fail(ErrorCode::format_error, where + ": expected a JSON object");
  SentenceRecord rec;
  if (!j.contains("sentence_id") || !j["sentence_id"].is_number_integer()) {
    fail(ErrorCode::format_error, where + ": missing integer 'sentence_id'");
  }
  rec.sentence_id = j["sentence_id"].get<std::int64_t>();
  if (!j.contains("tokens")) fail(ErrorCode::format_error, where + ": missing 'tokens'");
  rec.tokens = string_array(j["tokens"], "tokens", where);
  if (rec.tokens.empty()) fail(ErrorCode::format_error, where + ": sentence has no tokens");
  if (j.contains("pos") && !j["pos"].is_null()) {
    rec.pos = string_array(j["pos"], "pos", where);
    if (rec.pos->size() != rec.tokens.size()) {
      fail(ErrorCode::alignment_error, where + ": pos has " + std::to_string(rec.pos->size()) + " tags for " +
                                           std::to_string(rec.tokens.size()) + " tokens");
    }
  }
  if (j.contains("labels")) {
    if (!j["labels"].is_object()) fail(ErrorCode::format_error, where + ": 'labels' must be an object");
    for (const auto& [name, arr] : j["labels"].items()) {
      auto values = string_array(arr, "labels." + name, where);
      if (values.size() != rec.tokens.size()) {
        fail(ErrorCode::alignment_error, where + ": labels." + name + " has " + std::to_string(values.size()) +
                                             " entries for " + std::to_string(rec.tokens.size()) + " tokens");
      }
      rec.labels.emplace(name, std::move(values));
    }
  }
  return rec;
}

}  // namespace detail

inline std::vector<SentenceRecord> parse_tokens(std::istream& in, const std::string& name) {
  std::vector<SentenceRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    records.push_back(detail::parse_record(line, name + ":" + std::to_string(lineno)));
  }
  return records;
}

inline std::vector<SentenceRecord> read_tokens(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path.string());
  return parse_tokens(in, path.string());
}

inline std::string encode_record(const SentenceRecord& rec) {
  nlohmann::ordered_json j;
  j["sentence_id"] = rec.sentence_id;
  j["tokens"] = rec.tokens;
  if (rec.pos) j["pos"] = *rec.pos;
  if (!rec.labels.empty()) {
    nlohmann::ordered_json labels = nlohmann::ordered_json::object();
    for (const auto& [name, values] : rec.labels) labels[name] = values;
    j["labels"] = labels;
  }
  return j.dump();
}

inline void write_tokens(const std::vector<SentenceRecord>& records, const fs::path& path) {
  std::string out;
  for (const auto& r : records) {
    out += encode_record(r);
    out += '\n';
  }
  detail::write_file_bytes(path, out);
}

/// Row-order contract: the records' tokens, concatenated, are the batch rows.
inline void validate_alignment(std::size_t rows, const std::vector<SentenceRecord>& records) {
  std::size_t tokens = total_tokens(records);
  if (records.empty() || tokens != rows) {
    fail(ErrorCode::alignment_error, "tokens=" + std::to_string(tokens) + " rows=" + std::to_string(rows));
  }
}

inline void validate_alignment(const RepresentationBatch& batch, const std::vector<SentenceRecord>& records) {
  validate_alignment(batch.rows(), records);
}

struct Checkpoint {
  std::int64_t step = 0;
  fs::path reps_path;
  double loss = 0.0;
  std::optional<double> gen_acc;
};

struct RunManifest {
  std::string run_id;
  std::int64_t seed = 0;
  fs::path tokens_path;
  std::optional<fs::path> pos_path;
  std::vector<Checkpoint> checkpoints;
};

/// Parses and eagerly validates a manifest: fields present, steps strictly
/// increasing, losses finite, every referenced file present. Payloads are
/// parsed later, when used.
inline RunManifest parse_manifest(const std::string& text, const fs::path& base_dir, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::format_error, where + ": malformed JSON (" + e.what() + ")");
  }
  auto require = [&](const nlohmann::json& obj, const char* field, const std::string& ctx) -> const nlohmann::json& {
    if (!obj.is_object() || !obj.contains(field)) {
      fail(ErrorCode::invalid_data, where + ": " + ctx + "missing field '" + field + "'");
    }
    return obj[field];
  };
  auto resolve = [&](const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  RunManifest m;
  const auto& run_id = require(j, "run_id", "");
  const auto& seed = require(j, "seed", "");
  const auto& tokens = require(j, "tokens_path", "");
  const auto& checkpoints = require(j, "checkpoints", "");
  if (!run_id.is_string()) fail(ErrorCode::invalid_data, where + ": 'run_id' must be a string");
  if (!seed.is_number_integer()) fail(ErrorCode::invalid_data, where + ": 'seed' must be an integer");
  if (!tokens.is_string()) fail(ErrorCode::invalid_data, where + ": 'tokens_path' must be a string");
  if (!checkpoints.is_array() || checkpoints.empty()) {
    fail(ErrorCode::invalid_data, where + ": 'checkpoints' must be a non-empty array");
  }
  m.run_id = run_id.get<std::string>();
  m.seed = seed.get<std::int64_t>();
  m.tokens_path = resolve(tokens.get<std::string>());
  if (!fs::exists(m.tokens_path)) fail(ErrorCode::invalid_data, where + ": tokens file not found: " + m.tokens_path.string());
  if (j.contains("pos_path") && !j["pos_path"].is_null()) {
    if (!j["pos_path"].is_string()) fail(ErrorCode::invalid_data, where + ": 'pos_path' must be a string");
    m.pos_path = resolve(j["pos_path"].get<std::string>());
    if (!fs::exists(*m.pos_path)) fail(ErrorCode::invalid_data, where + ": pos file not found: " + m.pos_path->string());
  }

  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    const auto& c = checkpoints[i];
    std::string ctx = "checkpoint " + std::to_string(i) + ": ";
    const auto& step = require(c, "step", ctx);
    const auto& reps = require(c, "reps_path", ctx);
    const auto& loss = require(c, "loss", ctx);
    if (!step.is_number_integer()) fail(ErrorCode::invalid_data, where + ": " + ctx + "'step' must be an integer");
    Checkpoint cp;
    cp.step = step.get<std::int64_t>();
    ctx = "step " + std::to_string(cp.step) + ": ";
    if (!reps.is_string()) fail(ErrorCode::invalid_data, where + ": " + ctx + "'reps_path' must be a string");
    if (!loss.is_number()) fail(ErrorCode::invalid_data, where + ": " + ctx + "'loss' must be a number");
    cp.reps_path = resolve(reps.get<std::string>());
    cp.loss = loss.get<double>();
    if (!std::isfinite(cp.loss)) fail(ErrorCode::invalid_data, where + ": " + ctx + "loss is not finite");
    if (c.contains("gen_acc") && !c["gen_acc"].is_null()) {
      if (!c["gen_acc"].is_number()) fail(ErrorCode::invalid_data, where + ": " + ctx + "'gen_acc' must be a number");
      cp.gen_acc = c["gen_acc"].get<double>();
    }
    if (!m.checkpoints.empty() && cp.step <= m.checkpoints.back().step) {
      fail(ErrorCode::invalid_data, where + ": steps must be strictly increasing (" +
                                        std::to_string(m.checkpoints.back().step) + " then " + std::to_string(cp.step) + ")");
    }
    if (!fs::exists(cp.reps_path)) {
      fail(ErrorCode::invalid_data, where + ": " + ctx + "reps file not found: " + cp.reps_path.string());
    }
    m.checkpoints.push_back(std::move(cp));
  }
  return m;
}

inline RunManifest read_manifest(const fs::path& path) {
  std::string text = detail::read_file_bytes(path);
  return parse_manifest(text, path.parent_path(), path.string());
}

inline void write_manifest(const RunManifest& m, const fs::path& path) {
  nlohmann::ordered_json j;
  j["run_id"] = m.run_id;
  j["seed"] = m.seed;
  j["tokens_path"] = m.tokens_path.string();
  if (m.pos_path) j["pos_path"] = m.pos_path->string();
  j["checkpoints"] = nlohmann::ordered_json::array();
  for (const auto& c : m.checkpoints) {
    nlohmann::ordered_json cj;
    cj["step"] = c.step;
    cj["reps_path"] = c.reps_path.string();
    cj["loss"] = c.loss;
    if (c.gen_acc) cj["gen_acc"] = *c.gen_acc;
    j["checkpoints"].push_back(cj);
  }
  detail::write_file_bytes(path, j.dump(2) + "\n");
}

/// Loads the sentence records a manifest points at, merging pos tags from a
/// separate pos file when one is given (matched by position and sentence_id).
inline std::vector<SentenceRecord> load_manifest_records(const RunManifest& m) {
  auto records = read_tokens(m.tokens_path);
  if (m.pos_path) {
    auto pos = read_tokens(*m.pos_path);
    if (pos.size() != records.size()) {
      fail(ErrorCode::alignment_error, "pos file has " + std::to_string(pos.size()) + " sentences, tokens file has " +
                                           std::to_string(records.size()));
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (pos[i].sentence_id != records[i].sentence_id || !pos[i].pos) {
        fail(ErrorCode::missing_labels, "pos file lacks tags for sentence_id " + std::to_string(records[i].sentence_id));
      }
      if (pos[i].pos->size() != records[i].tokens.size()) {
        fail(ErrorCode::alignment_error, "pos file tag count differs for sentence_id " +
                                             std::to_string(records[i].sentence_id));
      }
      records[i].pos = pos[i].pos;
    }
  }
  return records;
}

}  // namespace reprstruct
