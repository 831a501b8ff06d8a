#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "locker/core.hpp"

namespace locker {

// Event-log text format: one record per line,
//   locker_id,order_id,kind,ship_option,day,seq
// An optional header line starting with "locker_id" and lines starting with
// '#' are ignored.
inline constexpr std::string_view kEventHeader = "locker_id,order_id,kind,ship_option,day,seq";

// Parse errors are reported with 1-based line numbers in Diagnostic::index.
// When `errors` is null the first malformed line throws Data. `lines`
// receives the line number of each returned event.
std::vector<PackageEvent> parse_events(std::istream& in, std::string_view source,
                                       std::vector<Diagnostic>* errors = nullptr,
                                       std::vector<std::size_t>* lines = nullptr);
std::vector<PackageEvent> read_event_file(const std::filesystem::path& path,
                                          std::vector<Diagnostic>* errors = nullptr,
                                          std::vector<std::size_t>* lines = nullptr);

void write_events(std::ostream& out, std::span<const PackageEvent> events);
void write_event_file(const std::filesystem::path& path, std::span<const PackageEvent> events);

std::vector<std::string_view> split_fields(std::string_view line, char delimiter = ',');
std::string_view trim(std::string_view text);

// Opens for writing, creating parent directories; throws Io on failure.
std::ofstream open_output(const std::filesystem::path& path);
std::ifstream open_input(const std::filesystem::path& path);

}  // namespace locker
