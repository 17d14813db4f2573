#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace jmorph {

// Thread cap from JMAP_THREADS (falls back to hardware concurrency).
int max_threads();

// Runs fn(i) for i in [0, n). Work is split into contiguous chunks so the
// partitioning is stable; any exception is rethrown on the calling thread.
void parallel_for(int64_t n, const std::function<void(int64_t)> &fn);

// Fixed-order pairwise summation; deterministic and more accurate than a
// running sum for long arrays.
double pairwise_sum(const double *v, size_t n);

std::string sha256_hex(const void *data, size_t n);
std::string sha256_file(const std::string &path);

std::string read_text_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &content);

// printf-style %.17g, round-trippable for doubles.
std::string full_precision(double v);
std::string format_fixed(double v, int decimals);

} // namespace jmorph
