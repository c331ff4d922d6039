#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace hoqmc::util {

// FFTW's planner is a process-wide singleton and is not thread-safe; every
// translation unit that creates or destroys FFTW plans must hold this mutex.
std::mutex& fftw_planner_mutex();

// Deterministic pairwise (cascade) summation; result depends only on the
// order of `v`, never on thread schedule.
double pairwise_sum(std::span<const double> v);

double pairwise_mean(std::span<const double> v);

// Runs fn(i) for i in [0, n) on up to `threads` worker threads in disjoint
// index ranges. fn must only write to slots owned by its index. threads <= 1
// (or n small) degrades to a plain loop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

int default_thread_count();

// FNV-1a 64-bit, used for weight-spec fingerprints in cache keys.
std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed = 14695981039346656037ull);
std::uint64_t fnv1a64(const std::string& s, std::uint64_t seed = 14695981039346656037ull);

// Shortest round-trip-safe decimal for CSV/JSON output (17 significant digits).
std::string g17(double x);

// Least-squares slope of y against x.
double lsq_slope(std::span<const double> x, std::span<const double> y);

std::string trim(const std::string& s);

// Flat key=value config text: '#' comments, blank lines ignored.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text);

} // namespace hoqmc::util
