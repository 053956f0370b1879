#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "phylonbe/sim.hpp"

namespace phylonbe {

// One SimRecord as a single JSON line. Floats carry 12 significant digits so
// that reruns with the same seed are byte-identical.
std::string record_to_json_line(const SimRecord& record);

void write_jsonl(const std::filesystem::path& path, const std::vector<SimRecord>& records);

std::vector<SimRecord> read_jsonl(const std::filesystem::path& path);

}  // namespace phylonbe
