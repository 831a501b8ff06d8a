#include "locker/event_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

namespace locker {

namespace {

template <typename Int>
bool parse_integer(std::string_view text, Int& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc{} && ptr == text.data() + text.size();
}

}  // namespace

std::string_view trim(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  return text;
}

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return fields;
}

std::vector<PackageEvent> parse_events(std::istream& in, std::string_view source,
                                       std::vector<Diagnostic>* errors, std::vector<std::size_t>* lines) {
  std::vector<PackageEvent> events;
  std::string line;
  std::size_t line_no = 0;
  auto report = [&](std::string message) {
    if (errors == nullptr) {
      fail(ErrorKind::Data, fmt::format("{}:{}: {}", source, line_no, message));
    }
    errors->push_back(Diagnostic{line_no, {}, std::move(message)});
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#' || text.starts_with("locker_id")) continue;
    const auto fields = split_fields(text);
    if (fields.size() != 6) {
      report(fmt::format("expected 6 fields, found {}", fields.size()));
      continue;
    }
    PackageEvent ev;
    ev.locker_id = std::string(fields[0]);
    ev.order_id = std::string(fields[1]);
    if (ev.locker_id.empty() || ev.order_id.empty()) {
      report("empty locker_id or order_id");
      continue;
    }
    try {
      ev.kind = parse_event_kind(fields[2]);
    } catch (const Error& e) {
      report(fmt::format("unknown event kind '{}'", fields[2]));
      continue;
    }
    if (!parse_integer(fields[3], ev.ship_option) || !parse_integer(fields[4], ev.day) ||
        !parse_integer(fields[5], ev.seq)) {
      report("non-integer ship_option, day or seq");
      continue;
    }
    events.push_back(std::move(ev));
    if (lines != nullptr) lines->push_back(line_no);
  }
  return events;
}

std::vector<PackageEvent> read_event_file(const std::filesystem::path& path,
                                          std::vector<Diagnostic>* errors, std::vector<std::size_t>* lines) {
  auto in = open_input(path);
  return parse_events(in, path.string(), errors, lines);
}

void write_events(std::ostream& out, std::span<const PackageEvent> events) {
  out << kEventHeader << '\n';
  for (const auto& ev : events) {
    out << fmt::format("{},{},{},{},{},{}\n", ev.locker_id, ev.order_id, to_string(ev.kind),
                       ev.ship_option, ev.day, ev.seq);
  }
}

void write_event_file(const std::filesystem::path& path, std::span<const PackageEvent> events) {
  auto out = open_output(path);
  write_events(out, events);
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot open '{}' for writing", path.string()));
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open '{}'", path.string()));
  return in;
}

}  // namespace locker
