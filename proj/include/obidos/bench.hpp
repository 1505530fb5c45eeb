#pragma once

// Benchmark driver: synthetic corpora, hybrid / eager / lazy runs on fresh
// repositories, and CSV rows built from the exact traffic meters.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "obidos/etl.hpp"
#include "obidos/source.hpp"

namespace obidos {

inline constexpr std::string_view kBenchHeader =
    "experiment,mode,param,metadata_bytes,blob_bytes,requests,elapsed_ms,run";

struct BenchRow {
  std::string experiment;
  /// hybrid, eager or lazy; share-volume uses id and full (envelope kinds).
  std::string mode;
  std::uint64_t param = 0;
  std::uint64_t metadata_bytes = 0;
  std::uint64_t blob_bytes = 0;
  std::uint64_t requests = 0;
  double elapsed_ms = 0;
  std::size_t run = 0;

  /// Not part of the CSV; kept for assertions on the breakdown.
  TransferStats stats;
  bool served_from_repository = false;

  std::string csv() const;
  /// Throws DeserializeError on a malformed line.
  static BenchRow parse(std::string_view line);
};

struct BenchConfig {
  /// Scratch directory for generated corpora (created if absent).
  std::filesystem::path work_dir;
  std::size_t runs = 1;
  std::size_t image_size_bytes = 16 * 1024;
  /// Experiment parameters; empty selects the experiment's defaults.
  std::vector<std::size_t> params;
  RemoteProfile remote;
  std::uint64_t seed = 1;
};

std::vector<std::string> bench_experiments();

/// Runs one experiment, calling `on_row` as each row completes. Throws
/// ConfigError for an unknown experiment.
std::vector<BenchRow> run_bench(std::string_view experiment, const BenchConfig& config,
                                const std::function<void(const BenchRow&)>& on_row = {});

/// Medical-profile corpus shape with `studies` studies spread over
/// collections of 16 studies each (4 patients x 4 studies, 2 series x 2
/// images per study).
GeneratorParams volume_corpus(std::size_t studies, std::size_t image_size_bytes, std::uint64_t seed = 1);

/// 128 studies over 4 collections (4 patients x 8 studies each, 2 series x
/// 2 images per study).
GeneratorParams interest_corpus(std::size_t image_size_bytes, std::uint64_t seed = 1);

}  // namespace obidos
