#include "obidos/bench.hpp"

#include <charconv>
#include <cstdio>
#include <optional>

#include "obidos/codec.hpp"
#include "obidos/error.hpp"
#include "obidos/hash.hpp"
#include "obidos/sharing.hpp"

namespace fs = std::filesystem;

namespace obidos {

// --- CSV -----------------------------------------------------------------------

std::string BenchRow::csv() const {
  char elapsed[32];
  std::snprintf(elapsed, sizeof elapsed, "%.3f", elapsed_ms);
  return experiment + "," + mode + "," + std::to_string(param) + "," + std::to_string(metadata_bytes) + "," +
         std::to_string(blob_bytes) + "," + std::to_string(requests) + "," + elapsed + "," + std::to_string(run);
}

namespace {

std::uint64_t parse_u64(std::string_view field, std::size_t offset) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || end != field.data() + field.size()) {
    throw DeserializeError(offset, "expected an unsigned integer, got '" + std::string(field) + "'");
  }
  return v;
}

}  // namespace

BenchRow BenchRow::parse(std::string_view line) {
  std::vector<std::string_view> fields;
  std::vector<std::size_t> offsets;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    offsets.push_back(start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (fields.size() != 8) throw DeserializeError(0, "expected 8 fields, got " + std::to_string(fields.size()));
  BenchRow row;
  row.experiment = fields[0];
  row.mode = fields[1];
  row.param = parse_u64(fields[2], offsets[2]);
  row.metadata_bytes = parse_u64(fields[3], offsets[3]);
  row.blob_bytes = parse_u64(fields[4], offsets[4]);
  row.requests = parse_u64(fields[5], offsets[5]);
  try {
    std::size_t used = 0;
    row.elapsed_ms = std::stod(std::string(fields[6]), &used);
    if (used != fields[6].size()) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw DeserializeError(offsets[6], "expected a number, got '" + std::string(fields[6]) + "'");
  }
  row.run = parse_u64(fields[7], offsets[7]);
  return row;
}

// --- corpora -------------------------------------------------------------------

GeneratorParams volume_corpus(std::size_t studies, std::size_t image_size_bytes, std::uint64_t seed) {
  if (studies == 0 || studies % 16 != 0) {
    throw Error(ErrorCode::ConfigError, "study count must be a positive multiple of 16");
  }
  GeneratorParams p;
  p.counts = {studies / 16, 4, 4, 2, 2};
  p.image_size_bytes = image_size_bytes;
  p.seed = seed;
  return p;
}

GeneratorParams interest_corpus(std::size_t image_size_bytes, std::uint64_t seed) {
  GeneratorParams p;
  p.counts = {4, 4, 8, 2, 2};
  p.image_size_bytes = image_size_bytes;
  p.seed = seed;
  return p;
}

namespace {

using Clock = std::chrono::steady_clock;

constexpr const char* kUser = "bench";

/// Generates into a scratch name first so an interrupted run is never reused.
fs::path corpus(const BenchConfig& config, const std::string& name, const GeneratorParams& params) {
  const fs::path dir = config.work_dir / name;
  if (fs::exists(dir / "source.json")) return dir;
  const fs::path tmp = config.work_dir / (name + ".partial");
  fs::remove_all(tmp);
  fs::create_directories(config.work_dir);
  generate_synthetic_source(tmp, params);
  fs::rename(tmp, dir);
  return dir;
}

std::string corpus_name(const std::string& shape, const GeneratorParams& p) {
  std::string name = shape;
  for (auto c : p.counts) name += "-" + std::to_string(c);
  name += "-b" + std::to_string(p.image_size_bytes) + "-s" + std::to_string(p.seed);
  if (!p.write_blobs) name += "-meta";
  return name;
}

/// A fresh, volatile engine over one source; each run starts from zero.
struct Fixture {
  Repository repo;
  ReplicaSetHolder holder{repo};
  SourceRegistry sources;
  Engine engine{sources, repo, holder};

  Fixture(const fs::path& root, const std::optional<RemoteProfile>& remote) {
    std::shared_ptr<Source> source = std::make_shared<FilesystemSource>(root);
    if (remote) source = std::make_shared<RemoteSource>(std::move(source), *remote);
    repo.set_schema(source->id(), source->schema());
    sources.add(std::move(source));
  }
};

BenchRow row_of(std::string experiment, std::string mode, std::uint64_t param, std::size_t run,
                const TransferStats& stats, std::chrono::nanoseconds elapsed) {
  BenchRow row;
  row.experiment = std::move(experiment);
  row.mode = std::move(mode);
  row.param = param;
  row.run = run;
  row.stats = stats;
  row.metadata_bytes = stats.metadata_bytes;
  row.blob_bytes = stats.blob_bytes;
  row.requests = stats.requests();
  row.elapsed_ms = std::chrono::duration<double, std::milli>(elapsed).count();
  return row;
}

UserQuery ct_series_with_images() {
  return UserQuery{"series", {Predicate{"modality", CompareOp::Eq, std::string("CT")}}, true};
}

ReplicaSet collections(const std::string& source_id, std::size_t k) {
  std::vector<VirtualReplica> replicas;
  for (std::size_t i = 1; i <= k; ++i) replicas.push_back({source_id, EntryPath::parse("C" + std::to_string(i))});
  return ReplicaSet::create(kUser, std::move(replicas));
}

class Runner {
 public:
  Runner(const BenchConfig& config, const std::function<void(const BenchRow&)>& on_row)
      : config_(config), on_row_(on_row) {}

  std::vector<BenchRow> take() { return std::move(rows_); }

  void emit(BenchRow row) {
    if (on_row_) on_row_(row);
    rows_.push_back(std::move(row));
  }

  std::vector<std::size_t> params(std::vector<std::size_t> defaults) const {
    return config_.params.empty() ? defaults : config_.params;
  }

  /// Hybrid, eager and lazy loads of one replicaset and query.
  void three_modes(const std::string& experiment, std::uint64_t param, const fs::path& root, const ReplicaSet& rs,
                   const UserQuery& q, const std::optional<RemoteProfile>& remote) {
    for (std::size_t run = 0; run < config_.runs; ++run) {
      {
        Fixture f(root, remote);
        f.holder.register_replicaset(kUser, rs);
        LoadResult r = f.engine.selective_load(rs, q);
        BenchRow row = row_of(experiment, "hybrid", param, run, r.report.total(), r.report.elapsed);
        row.served_from_repository = r.report.served_from_repository;
        emit(std::move(row));
      }
      {
        Fixture f(root, remote);
        LoadReport load = eager_etl(f.sources, f.repo);
        const auto start = Clock::now();
        (void)f.repo.query(q, rs);
        emit(row_of(experiment, "eager", param, run, load.total(), load.elapsed + (Clock::now() - start)));
      }
      {
        Fixture f(root, remote);
        LazyEtl lazy(f.sources, f.repo);
        LoadReport boot = lazy.bootstrap();
        LoadResult r = lazy.query(q, rs.replicas);
        emit(row_of(experiment, "lazy", param, run, boot.total() + r.report.total(), boot.elapsed + r.report.elapsed));
      }
    }
  }

  void vary_total_volume(const std::string& experiment, std::vector<std::size_t> defaults,
                         const std::optional<RemoteProfile>& remote) {
    for (std::size_t studies : params(std::move(defaults))) {
      GeneratorParams p = volume_corpus(studies, config_.image_size_bytes, config_.seed);
      const fs::path root = corpus(config_, corpus_name("volume", p), p);
      // The replicaset is always the first collection: 16 studies.
      three_modes(experiment, studies, root, collections(p.source_id, 1), ct_series_with_images(), remote);
    }
  }

  void vary_interest() {
    GeneratorParams p = interest_corpus(config_.image_size_bytes, config_.seed);
    const fs::path root = corpus(config_, corpus_name("interest", p), p);
    const UserQuery every_image{"image", {}, false};
    for (std::size_t pct : params({25, 50, 75, 100})) {
      if (pct == 0 || pct > 100 || pct % 25 != 0) {
        throw Error(ErrorCode::ConfigError, "vary-interest coverage must be 25, 50, 75 or 100");
      }
      three_modes("vary-interest", pct, root, collections(p.source_id, pct / 25), every_image, std::nullopt);
    }
  }

  void repeat_query() {
    GeneratorParams p = volume_corpus(128, config_.image_size_bytes, config_.seed);
    const fs::path root = corpus(config_, corpus_name("volume", p), p);
    const ReplicaSet rs = collections(p.source_id, 2);
    const UserQuery q = ct_series_with_images();
    const std::size_t repeats = params({2}).front();
    for (std::size_t run = 0; run < config_.runs; ++run) {
      {
        Fixture f(root, std::nullopt);
        f.holder.register_replicaset(kUser, rs);
        for (std::size_t i = 1; i <= repeats; ++i) {
          LoadResult r = f.engine.selective_load(rs, q);
          BenchRow row = row_of("repeat-query", "hybrid", i, run, r.report.total(), r.report.elapsed);
          row.served_from_repository = r.report.served_from_repository;
          emit(std::move(row));
        }
      }
      {
        Fixture f(root, std::nullopt);
        LoadReport load = eager_etl(f.sources, f.repo);
        for (std::size_t i = 1; i <= repeats; ++i) {
          const auto start = Clock::now();
          (void)f.repo.query(q, rs);
          auto elapsed = Clock::now() - start;
          BenchRow row = row_of("repeat-query", "eager", i, run, i == 1 ? load.total() : TransferStats{},
                                i == 1 ? load.elapsed + elapsed : elapsed);
          row.served_from_repository = i > 1;
          emit(std::move(row));
        }
      }
      {
        Fixture f(root, std::nullopt);
        LazyEtl lazy(f.sources, f.repo);
        LoadReport boot = lazy.bootstrap();
        for (std::size_t i = 1; i <= repeats; ++i) {
          LoadResult r = lazy.query(q, rs.replicas);
          TransferStats stats = r.report.total();
          auto elapsed = r.report.elapsed;
          if (i == 1) {
            stats += boot.total();
            elapsed += boot.elapsed;
          }
          BenchRow row = row_of("repeat-query", "lazy", i, run, stats, elapsed);
          row.served_from_repository = r.report.served_from_repository;
          emit(std::move(row));
        }
      }
    }
  }

  void share_volume() {
    GeneratorParams p;
    p.counts = {1, 10, 2, 5, 3};
    p.image_size_bytes = 512 * 1024;
    p.seed = config_.seed;
    p.write_blobs = false;
    const fs::path root = corpus(config_, corpus_name("share", p), p);
    FilesystemSource source(root);
    const std::size_t leaf = source.schema().leaf_depth();

    std::vector<EntryPath> series;
    for (const auto& path : source.enumerate(EntryPath{})) {
      if (path.depth() == leaf - 1) series.push_back(path);
    }

    for (std::size_t k : params({10, 20, 30, 40, 50, 60, 70, 80, 90, 100})) {
      if (k == 0 || k > series.size()) {
        throw Error(ErrorCode::ConfigError, "share-volume series count must be 1.." + std::to_string(series.size()));
      }
      std::vector<VirtualReplica> replicas;
      std::uint64_t referenced = 0;
      for (std::size_t i = 0; i < k; ++i) {
        replicas.push_back({source.id(), series[i]});
        for (const auto& image : source.list_children(series[i])) {
          const auto attrs = source.fetch_metadata(series[i].child(image)).attributes;
          referenced += static_cast<std::uint64_t>(std::get<std::int64_t>(attrs.at("file_size")));
        }
      }
      ReplicaSet rs = ReplicaSet::create("sender-user", std::move(replicas), Timestamp{1'600'000'000'000});

      for (std::size_t run = 0; run < config_.runs; ++run) {
        for (bool by_id : {true, false}) {
          ShareEnvelope envelope;
          envelope.sender_instance = "sender";
          envelope.receiver_user = "receiver";
          if (by_id) {
            envelope.body = ShareEnvelope::IdOnly{rs.id, "http://sender.example:8080", random_token()};
          } else {
            envelope.body = rs;
          }
          const auto start = Clock::now();
          const std::size_t size = measure_share_size(envelope);
          BenchRow row = row_of("share-volume", by_id ? "id" : "full", k, run, TransferStats{}, Clock::now() - start);
          row.metadata_bytes = size;
          row.blob_bytes = referenced;
          emit(std::move(row));
        }
      }
    }
  }

 private:
  const BenchConfig& config_;
  const std::function<void(const BenchRow&)>& on_row_;
  std::vector<BenchRow> rows_;
};

}  // namespace

std::vector<std::string> bench_experiments() {
  return {"vary-total-volume", "vary-interest", "remote-load", "repeat-query", "share-volume"};
}

std::vector<BenchRow> run_bench(std::string_view experiment, const BenchConfig& config,
                                const std::function<void(const BenchRow&)>& on_row) {
  if (config.work_dir.empty()) throw Error(ErrorCode::ConfigError, "bench needs a work directory");
  Runner runner(config, on_row);
  if (experiment == "vary-total-volume") {
    runner.vary_total_volume("vary-total-volume", {64, 128, 256, 512}, std::nullopt);
  } else if (experiment == "remote-load") {
    runner.vary_total_volume("remote-load", {16, 32, 64, 128}, config.remote);
  } else if (experiment == "vary-interest") {
    runner.vary_interest();
  } else if (experiment == "repeat-query") {
    runner.repeat_query();
  } else if (experiment == "share-volume") {
    runner.share_volume();
  } else {
    throw Error(ErrorCode::ConfigError, "unknown experiment '" + std::string(experiment) + "'");
  }
  return runner.take();
}

}  // namespace obidos
