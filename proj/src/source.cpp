#include "obidos/source.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <fstream>
#include <iterator>
#include <thread>

#include "obidos/codec.hpp"
#include "obidos/error.hpp"
#include "obidos/hash.hpp"

namespace fs = std::filesystem;

namespace obidos {

TransferStats& TransferStats::operator+=(const TransferStats& o) noexcept {
  metadata_requests += o.metadata_requests;
  metadata_bytes += o.metadata_bytes;
  blob_requests += o.blob_requests;
  blob_bytes += o.blob_bytes;
  listing_requests += o.listing_requests;
  return *this;
}

TransferStats operator-(const TransferStats& a, const TransferStats& b) noexcept {
  return {a.metadata_requests - b.metadata_requests, a.metadata_bytes - b.metadata_bytes,
          a.blob_requests - b.blob_requests, a.blob_bytes - b.blob_bytes,
          a.listing_requests - b.listing_requests};
}

TransferStats TransferMeter::snapshot() const noexcept {
  return {metadata_requests_.load(std::memory_order_relaxed), metadata_bytes_.load(std::memory_order_relaxed),
          blob_requests_.load(std::memory_order_relaxed), blob_bytes_.load(std::memory_order_relaxed),
          listing_.load(std::memory_order_relaxed)};
}

// --- Source composites ---------------------------------------------------------

std::vector<EntryPath> Source::enumerate(const EntryPath& root) {
  const std::size_t leaf = schema().leaf_depth();
  std::vector<EntryPath> out;
  std::deque<EntryPath> queue{root};
  while (!queue.empty()) {
    EntryPath node = std::move(queue.front());
    queue.pop_front();
    if (node.depth() >= leaf) continue;
    for (auto& id : list_children(node)) {
      EntryPath child = node.child(std::move(id));
      out.push_back(child);
      queue.push_back(std::move(child));
    }
  }
  return out;
}

std::vector<MetadataRecord> Source::examine(const VirtualReplica& scope, const UserQuery& q) {
  if (scope.source_id != id()) {
    throw Error(ErrorCode::UnknownSource, "scope " + scope.source_id + " queried on " + id());
  }
  const std::size_t target = q.target_depth(schema());
  scope.path.validate_against(schema());
  if (scope.path.depth() > target) return {};

  std::vector<EntryPath> frontier{scope.path};
  for (std::size_t depth = scope.path.depth(); depth < target; ++depth) {
    std::vector<EntryPath> next;
    for (const auto& node : frontier) {
      for (auto& child : list_children(node)) next.push_back(node.child(std::move(child)));
    }
    frontier = std::move(next);
  }

  std::vector<MetadataRecord> examined;
  examined.reserve(frontier.size());
  for (const auto& candidate : frontier) examined.push_back(fetch_metadata(candidate));
  return examined;
}

std::vector<MetadataRecord> Source::query_records(const VirtualReplica& scope, const UserQuery& q) {
  std::vector<MetadataRecord> hits = examine(scope, q);
  std::erase_if(hits, [&](const MetadataRecord& r) { return !q.matches(r); });
  return hits;
}

std::vector<EntryPath> Source::source_query(const VirtualReplica& scope, const UserQuery& q) {
  std::vector<EntryPath> out;
  for (auto& r : query_records(scope, q)) out.push_back(std::move(r.path));
  return out;
}

// --- FilesystemSource ----------------------------------------------------------

namespace {

constexpr const char* kDescriptorFile = "source.json";
constexpr const char* kDirSidecar = "meta.json";
constexpr const char* kBlobExt = ".blob";
constexpr const char* kMetaExt = ".meta";

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::PathNotFound, p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, std::string_view data) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorCode::GeneratorRefused, "cannot write " + p.string());
}

}  // namespace

FilesystemSource::FilesystemSource(fs::path root) : root_(std::move(root)) {
  const fs::path desc = root_ / kDescriptorFile;
  if (!fs::exists(desc)) throw Error(ErrorCode::SourceUnavailable, "no descriptor at " + desc.string());
  Json j = parse_json(read_file(desc));
  descriptor_.source_id = j.at("source_id").get<std::string>();
  descriptor_.schema = schema_from_json(j.at("levels"));
  descriptor_.root_uri = "file://" + fs::absolute(root_).string();
}

void FilesystemSource::check_reachable() const {
  if (!fs::is_directory(root_)) throw Error(ErrorCode::SourceUnavailable, root_.string());
}

fs::path FilesystemSource::dir_of(const EntryPath& path) const {
  fs::path dir = root_;
  for (const auto& seg : path.segments()) dir /= seg;
  return dir;
}

fs::path FilesystemSource::sidecar_path(const EntryPath& path) const {
  if (path.empty() || path.depth() > schema().leaf_depth()) {
    throw Error(ErrorCode::PathNotFound, "no metadata at '" + path.str() + "'");
  }
  if (path.depth() == schema().leaf_depth()) return dir_of(path.parent()) / (path.leaf() + kMetaExt);
  return dir_of(path) / kDirSidecar;
}

fs::path FilesystemSource::blob_path(const EntryPath& path) const {
  if (path.depth() != schema().leaf_depth()) {
    throw Error(ErrorCode::PathNotFound, "'" + path.str() + "' is not a leaf");
  }
  return dir_of(path.parent()) / (path.leaf() + kBlobExt);
}

std::vector<std::string> FilesystemSource::list_children(const EntryPath& path) {
  check_reachable();
  const std::size_t n = schema().size();
  if (path.depth() > n) throw Error(ErrorCode::PathNotFound, "'" + path.str() + "' has no children");
  const fs::path dir = dir_of(path);
  if (!fs::is_directory(dir)) throw Error(ErrorCode::PathNotFound, "'" + path.str() + "'");

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (path.depth() < n) {
      if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    } else if (entry.is_regular_file() && entry.path().extension() == kMetaExt) {
      ids.push_back(entry.path().stem().string());
    }
  }
  std::sort(ids.begin(), ids.end());
  meter_.charge_listing();
  return ids;
}

MetadataRecord FilesystemSource::fetch_metadata(const EntryPath& path) {
  check_reachable();
  const fs::path file = sidecar_path(path);
  if (!fs::is_regular_file(file)) throw Error(ErrorCode::PathNotFound, "'" + path.str() + "'");
  std::string text = read_file(file);
  Json j = parse_json(text);
  MetadataRecord record;
  record.path = path;
  for (const auto& [name, value] : j.at("attributes").items()) {
    record.attributes.emplace(name, attribute_from_json(value));
  }
  record.last_modified = Timestamp{j.at("last_modified").get<std::int64_t>()};
  record.size_bytes = static_cast<std::int64_t>(text.size());
  record.validate();
  meter_.charge_metadata(text.size());
  return record;
}

Blob FilesystemSource::fetch_blob(const EntryPath& path) {
  check_reachable();
  const fs::path file = blob_path(path);
  if (!fs::is_regular_file(file)) throw Error(ErrorCode::PathNotFound, "'" + path.str() + "'");
  std::string data = read_file(file);
  Blob blob;
  blob.bytes.resize(data.size());
  std::memcpy(blob.bytes.data(), data.data(), data.size());
  blob.hash = sha256_hex(data);
  meter_.charge_blob(data.size());
  return blob;
}

// --- RemoteSource --------------------------------------------------------------

RemoteSource::RemoteSource(std::shared_ptr<Source> inner, RemoteProfile profile)
    : inner_(std::move(inner)), profile_(profile) {
  if (profile_.per_request_latency.count() < 0 || profile_.per_byte_latency.count() < 0) {
    throw Error(ErrorCode::ConfigError, "remote latencies must be non-negative");
  }
}

void RemoteSource::delay(std::uint64_t bytes) const {
  auto d = profile_.per_request_latency + profile_.per_byte_latency * static_cast<std::int64_t>(bytes);
  if (d.count() > 0) std::this_thread::sleep_for(d);
}

std::vector<std::string> RemoteSource::list_children(const EntryPath& path) {
  auto ids = inner_->list_children(path);
  std::uint64_t bytes = 0;
  for (const auto& id : ids) bytes += id.size();
  delay(bytes);
  return ids;
}

MetadataRecord RemoteSource::fetch_metadata(const EntryPath& path) {
  auto record = inner_->fetch_metadata(path);
  delay(static_cast<std::uint64_t>(record.size_bytes));
  return record;
}

Blob RemoteSource::fetch_blob(const EntryPath& path) {
  auto blob = inner_->fetch_blob(path);
  delay(blob.bytes.size());
  return blob;
}

// --- Generator -----------------------------------------------------------------

std::uint64_t GeneratedCorpus::total_entries() const noexcept {
  std::uint64_t total = 0;
  for (auto n : entries_per_depth) total += n;
  return total;
}

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Generator {
 public:
  Generator(fs::path root, const GeneratorParams& params) : root_(std::move(root)), p_(params) {
    const std::size_t n = p_.schema.size();
    prefixes_ = p_.id_prefixes;
    if (prefixes_.empty()) {
      if (p_.schema == GranularitySchema::medical()) {
        prefixes_ = {"C", "P", "S", "SE", "I"};
      } else {
        for (std::size_t i = 1; i <= n; ++i) prefixes_.push_back("L" + std::to_string(i) + "_");
        prefixes_.push_back("I");
      }
    }
    ordinals_.assign(n + 1, 0);
    out_.source_id = p_.source_id;
    out_.entries_per_depth.assign(n + 1, 0);
  }

  GeneratedCorpus run() {
    Json desc{{"levels", to_json(p_.schema)}, {"source_id", p_.source_id}};
    write_file(root_ / kDescriptorFile, canonical(desc));
    descend(EntryPath{}, root_);
    return out_;
  }

 private:
  void descend(const EntryPath& parent, const fs::path& dir) {
    const std::size_t depth = parent.depth() + 1;
    const bool leaf = depth == p_.schema.leaf_depth();
    for (std::size_t i = 1; i <= p_.counts[depth - 1]; ++i) {
      EntryPath path = parent.child(prefixes_[depth - 1] + std::to_string(i));
      const std::uint64_t ordinal = ordinals_[depth - 1]++;
      out_.entries_per_depth[depth - 1] += 1;
      Json sidecar{{"attributes", attributes(path, depth, i, ordinal)}, {"last_modified", p_.base_time.ms}};
      std::string text = canonical(sidecar);
      out_.metadata_bytes += text.size();
      if (leaf) {
        write_file(dir / (path.leaf() + kMetaExt), text);
        if (p_.write_blobs) write_blob(dir / (path.leaf() + kBlobExt), path);
      } else {
        fs::path sub = dir / path.leaf();
        fs::create_directory(sub);
        write_file(sub / kDirSidecar, text);
        descend(path, sub);
      }
    }
  }

  Json attributes(const EntryPath& path, std::size_t depth, std::size_t index, std::uint64_t ordinal) const {
    std::uint64_t rng = p_.seed ^ fnv1a64(path.str());
    Json a{{"id", path.leaf()},
           {"level", p_.schema.level_at(depth)},
           {"number", static_cast<std::int64_t>(fnv1a64(path.str()) % 1000)}};
    if (depth == p_.schema.leaf_depth()) {
      a["instance_number"] = static_cast<std::int64_t>(index);
      a["file_size"] = static_cast<std::int64_t>(p_.image_size_bytes);
    } else if (p_.schema == GranularitySchema::medical()) {
      switch (depth) {
        case 1: a["name"] = "Collection " + path.leaf(); break;
        case 2:
          a["sex"] = ordinal % 2 == 0 ? "F" : "M";
          a["age"] = static_cast<std::int64_t>(20 + splitmix64(rng) % 60);
          break;
        case 3:
          a["study_date"] = to_json(Timestamp{p_.base_time.ms + static_cast<std::int64_t>(ordinal) * 86'400'000});
          a["description"] = "study of patient " + path.segments()[1];
          break;
        case 4:
          a["modality"] = ordinal % 2 == 0 ? "CT" : "MR";
          a["slice_thickness"] = 0.5 * static_cast<double>(1 + splitmix64(rng) % 6);
          break;
        default: break;
      }
    }
    if (p_.metadata.padding_bytes > 0) a["notes"] = std::string(p_.metadata.padding_bytes, 'x');
    return a;
  }

  void write_blob(const fs::path& file, const EntryPath& path) {
    std::uint64_t state = p_.seed * 0x2545F4914F6CDD1DULL ^ fnv1a64(path.str());
    std::string data(p_.image_size_bytes, '\0');
    for (std::size_t i = 0; i < data.size(); i += 8) {
      std::uint64_t word = splitmix64(state);
      std::memcpy(data.data() + i, &word, std::min<std::size_t>(8, data.size() - i));
    }
    write_file(file, data);
    out_.blob_bytes += data.size();
  }

  fs::path root_;
  const GeneratorParams& p_;
  std::vector<std::string> prefixes_;
  std::vector<std::uint64_t> ordinals_;
  GeneratedCorpus out_;
};

}  // namespace

GeneratedCorpus generate_synthetic_source(const fs::path& dir, const GeneratorParams& params) {
  params.schema.validate();
  if (params.counts.size() != params.schema.leaf_depth()) {
    throw Error(ErrorCode::GeneratorRefused, "counts must have one value per level plus images");
  }
  if (std::any_of(params.counts.begin(), params.counts.end(), [](std::size_t c) { return c < 1; })) {
    throw Error(ErrorCode::GeneratorRefused, "counts must be >= 1");
  }
  if (params.image_size_bytes == 0) throw Error(ErrorCode::GeneratorRefused, "images must be non-empty");
  if (!params.id_prefixes.empty() && params.id_prefixes.size() != params.schema.leaf_depth()) {
    throw Error(ErrorCode::GeneratorRefused, "id_prefixes must have n+1 values");
  }
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir) || !fs::is_empty(dir)) {
      throw Error(ErrorCode::GeneratorRefused, dir.string() + " is not an empty directory");
    }
  } else {
    fs::create_directories(dir);
  }
  return Generator(dir, params).run();
}

}  // namespace obidos
