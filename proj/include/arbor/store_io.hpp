#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "arbor/types.hpp"
#include "json.hpp"

namespace arbor {

// Trajectory store on disk: `data.bin` holds (n*T) x D little-endian float64
// values in row-major order; `manifest.json` carries T, D_s, D_a, dimension
// names and per-trajectory provenance.
void save_store(const TrajectoryStore& store, const std::filesystem::path& dir);
TrajectoryStore load_store(const std::filesystem::path& dir);

// One line of the append-only preference log: `k i j y timestamp source`.
// Trajectory indices are zero-based; y is written with round-trip precision.
struct LabelRecord {
  std::size_t k = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  double y = 0.5;
  std::int64_t timestamp_ms = 0;
  std::string source = "oracle";
};

std::string format_label_record(const LabelRecord& record);
LabelRecord parse_label_record(const std::string& line);
std::vector<LabelRecord> read_label_log(const std::filesystem::path& path);
void append_label_record(const std::filesystem::path& path, const LabelRecord& record);

// RunConfig <-> JSON. Keys mirror the struct fields; missing keys keep their
// defaults, unknown keys are rejected.
nlohmann::json config_to_json(const RunConfig& config);
RunConfig config_from_json(const nlohmann::json& doc, RunConfig base = {});

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace arbor
