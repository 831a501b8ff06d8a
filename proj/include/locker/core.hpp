#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace locker {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  InvalidEvent,
  Ordering,
  InvalidConfig,
  Data,
  Training,
  Solver,
  Replay,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

// Mixes a base seed with a stream id (splitmix64 finalizer) so that each
// stage, locker and model gets an independent, reproducible seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

inline constexpr int kMaxDwell = 6;
inline constexpr int kDwellClasses = kMaxDwell + 1;
inline constexpr int kCarryoverDays = kMaxDwell + 1;  // v in -6..0
inline constexpr std::int64_t kSecondsPerDay = 86400;

template <typename T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

struct ShipOption {
  int id = 0;
  std::string label;
  int speed_rank = 0;  // lower = faster
  // Assumed request-to-delivery lag for requests whose delivery was never
  // recorded (rejected in the source log).
  int lead_days = 0;
};

struct LockerConfig {
  std::string locker_id;
  int capacity = 0;
  std::vector<ShipOption> ship_options;
  int horizon_days = 7;
  std::string zip;

  void validate() const;
  int option_count() const { return static_cast<int>(ship_options.size()); }
  // 0-based index of a ship option id; throws InvalidEvent for unknown ids.
  int option_index(int option_id) const;
  // Option indices ordered fastest first (by speed_rank, then id).
  std::vector<int> speed_order() const;
};

enum class EventKind : std::uint8_t { Request, Delivery, Pickup, Return };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

struct PackageEvent {
  std::string locker_id;
  std::string order_id;
  EventKind kind = EventKind::Request;
  int ship_option = 0;
  int day = 0;
  std::int64_t seq = 0;  // seconds into the locker's operational day

  bool operator==(const PackageEvent&) const = default;
};

// Sort key used for every event stream: (day, seq) with order id and kind
// breaking ties so that sorting is total.
bool event_before(const PackageEvent& a, const PackageEvent& b);
void sort_events(std::vector<PackageEvent>& events);
// Throws Ordering if the stream is not non-decreasing in (day, seq).
void check_sorted(std::span<const PackageEvent> events);

// Packages delivered on day v in {-6..0} (relative to the as-of day) that are
// still in the locker at the end of day 0.
class Carryover {
 public:
  Carryover() = default;
  explicit Carryover(int option_count) : counts_(option_count, kCarryoverDays, 0) {}

  int option_count() const { return static_cast<int>(counts_.rows()); }
  int& at(int option_index, int v) { return counts_(option_index, v + kMaxDwell); }
  int at(int option_index, int v) const { return counts_(option_index, v + kMaxDwell); }
  int total() const;

  bool operator==(const Carryover&) const = default;

 private:
  Matrix<int> counts_;
};

struct OccupancySnapshot {
  int day = 0;
  std::vector<int> per_option_counts;
  int total = 0;
};

int dwell_days(int delivery_day, int terminal_day);

double capacity_normalized_error(double actual, double predicted, int capacity);

// Unweighted mean of capacity_normalized_error over paired cells.
double mean_capacity_normalized_error(std::span<const double> actual,
                                      std::span<const double> predicted, int capacity);

Carryover extract_carryover(std::span<const PackageEvent> events, int as_of_day,
                            const LockerConfig& config);

struct EventRef {
  std::size_t index = 0;
  int day = 0;
  std::int64_t seq = 0;
  EventKind kind = EventKind::Request;
};

// All events of one order, keyed by kind.
struct OrderRecord {
  std::string locker_id;
  std::string order_id;
  int ship_option = 0;
  std::optional<EventRef> request;
  std::optional<EventRef> delivery;
  std::optional<EventRef> terminal;  // Pickup or Return

  std::optional<int> dwell() const;
};

struct Diagnostic {
  std::size_t index = 0;  // position in the stream (0-based)
  std::string order_id;
  std::string message;
};

// Groups events by (locker, order) preserving first-seen order. Invariant
// violations are appended to `diagnostics` when given, otherwise thrown.
std::vector<OrderRecord> collate_orders(std::span<const PackageEvent> events,
                                        std::vector<Diagnostic>* diagnostics = nullptr);

std::vector<Diagnostic> validate_events(std::span<const PackageEvent> events);

}  // namespace locker
