#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "voxl/lifelong.hpp"

namespace voxl {

// Columns: round,environment,task,case_id,error. No timing fields, so two
// runs with the same config and seed give identical bytes.
std::string report_csv(const LifelongReport& report);

// Full report including per-epoch timings and the config echo.
std::string report_json(const LifelongReport& report);

// Writes `text` to `path`, creating parent directories. Throws kUnwritable.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace voxl
