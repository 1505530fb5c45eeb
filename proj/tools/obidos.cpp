// Command-line front end: corpus generation, the HTTP server, a thin API
// client, envelope import, and the benchmark driver.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>

#include "obidos/bench.hpp"
#include "obidos/client.hpp"
#include "obidos/codec.hpp"
#include "obidos/instance.hpp"
#include "obidos/service.hpp"
#include "obidos/wire.hpp"

using namespace obidos;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

std::string read_text(const std::string& file) {
  if (file == "-") return std::string(std::istreambuf_iterator<char>(std::cin), {});
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot read " + file);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void print(const Json& j) {
  if (!j.is_null()) std::cout << j.dump(2) << "\n";
}

struct ClientOptions {
  std::string server = env_or("OBIDOS_SERVER", "http://127.0.0.1:8080");
  std::string key = env_or("OBIDOS_API_KEY", "");

  ApiClient client() const {
    if (key.empty()) throw Error(ErrorCode::AccessDenied, "no API key (use --key or OBIDOS_API_KEY)");
    return ApiClient(server, key);
  }
};

void add_client_options(CLI::App* cmd, ClientOptions& opts) {
  cmd->add_option("--server", opts.server, "Service URI")->capture_default_str();
  cmd->add_option("--key", opts.key, "API key");
}

struct QueryOptions {
  std::string level;
  std::vector<std::string> where;
  bool binary = false;
  bool force_load = false;

  UserQuery query() const {
    UserQuery q;
    q.target_level = level;
    q.include_binary = binary;
    for (const auto& w : where) q.predicates.push_back(parse_predicate(w));
    return q;
  }
};

void add_query_options(CLI::App* cmd, QueryOptions& opts, bool required) {
  auto* level = cmd->add_option("--level", opts.level, "Target granularity level");
  if (required) level->required();
  cmd->add_option("--where", opts.where, "Predicate such as 'modality = CT' (repeatable)");
  cmd->add_flag("--binary", opts.binary, "Also load the images under each hit");
  cmd->add_flag("--force-load", opts.force_load, "Reload when the repository still cannot answer");
}

Json replicas_json(const std::vector<std::string>& specs) {
  std::vector<VirtualReplica> replicas;
  for (const auto& s : specs) replicas.push_back(parse_replica(s));
  return replicas_to_json(replicas);
}

std::vector<std::size_t> parse_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(std::stoull(item));
  }
  return out;
}

HttpService* running_service = nullptr;

void on_signal(int) {
  if (running_service) running_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Replicaset-driven selective data loading and sharing"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "Write a deterministic synthetic source");
  std::string gen_out;
  std::string gen_counts = "2,2,2,2,2";
  GeneratorParams gen;
  std::string gen_levels;
  generate->add_option("--out", gen_out, "Target directory (must be empty or absent)")->required();
  generate->add_option("--counts", gen_counts, "Children per level, images last")->capture_default_str();
  generate->add_option("--levels", gen_levels, "Comma-separated level names (default: medical)");
  generate->add_option("--source-id", gen.source_id)->capture_default_str();
  generate->add_option("--image-size", gen.image_size_bytes, "Bytes per image")->capture_default_str();
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--padding", gen.metadata.padding_bytes, "Extra metadata characters per record");
  bool gen_no_blobs = false;
  generate->add_flag("--metadata-only", gen_no_blobs, "Skip image payloads");

  // serve
  auto* serve = app.add_subcommand("serve", "Run an instance over HTTP");
  std::string config_file;
  serve->add_option("--config", config_file, "Instance configuration")->required();

  // replicaset CRUD
  auto* rs_cmd = app.add_subcommand("replicaset", "Create, read, update or delete replicasets");
  rs_cmd->require_subcommand(1);
  ClientOptions client_opts;
  QueryOptions query_opts;
  std::vector<std::string> replica_specs;
  std::string rs_id;

  auto* rs_create = rs_cmd->add_subcommand("create", "Create a replicaset and start loading");
  add_client_options(rs_create, client_opts);
  rs_create->add_option("--replica", replica_specs, "source:path (repeatable)")->required();
  rs_create->add_option("--id", rs_id, "Caller-chosen id (32 hex digits)");
  add_query_options(rs_create, query_opts, false);

  auto* rs_get = rs_cmd->add_subcommand("get", "Show a replicaset and its loaded data");
  add_client_options(rs_get, client_opts);
  rs_get->add_option("id", rs_id)->required();

  auto* rs_update = rs_cmd->add_subcommand("update", "Replace the replica list");
  add_client_options(rs_update, client_opts);
  rs_update->add_option("id", rs_id)->required();
  rs_update->add_option("--replica", replica_specs, "source:path (repeatable)")->required();

  auto* rs_delete = rs_cmd->add_subcommand("delete", "Unregister a replicaset");
  add_client_options(rs_delete, client_opts);
  rs_delete->add_option("id", rs_id)->required();

  // query
  auto* query = app.add_subcommand("query", "Query a replicaset, loading what is missing");
  add_client_options(query, client_opts);
  query->add_option("id", rs_id)->required();
  add_query_options(query, query_opts, true);

  // sharing
  auto* share = app.add_subcommand("share", "Write a share envelope for a replicaset");
  add_client_options(share, client_opts);
  std::string receiver;
  std::string kind = "id";
  bool with_access = false;
  std::string envelope_out = "-";
  share->add_option("id", rs_id)->required();
  share->add_option("--receiver", receiver, "Receiving user")->required();
  share->add_option("--kind", kind, "id or full")->check(CLI::IsMember({"id", "full"}))->capture_default_str();
  share->add_flag("--access", with_access, "Grant query access to this repository");
  share->add_option("--out", envelope_out, "Envelope file ('-' for stdout)")->capture_default_str();

  auto* import = app.add_subcommand("import-envelope", "Receive a replicaset from an envelope file");
  add_client_options(import, client_opts);
  std::string envelope_in;
  import->add_option("file", envelope_in, "Envelope file ('-' for stdin)")->required();

  auto* materialize = app.add_subcommand("materialize", "Load a remotely bound replicaset from the sources");
  add_client_options(materialize, client_opts);
  materialize->add_option("id", rs_id)->required();

  auto* grant = app.add_subcommand("grant", "Issue an access key scoped to one replicaset");
  add_client_options(grant, client_opts);
  grant->add_option("id", rs_id)->required();

  auto* gc = app.add_subcommand("gc", "Remove data no replicaset points at");
  add_client_options(gc, client_opts);

  // bench
  auto* bench = app.add_subcommand("bench", "Run a benchmark experiment and print CSV");
  std::string experiment;
  BenchConfig bench_config;
  std::string bench_params;
  std::string bench_out = "-";
  std::string bench_config_file;
  double latency_ms = -1;
  double byte_latency_ns = -1;
  bench->add_option("experiment", experiment)->required()->check(CLI::IsMember(bench_experiments()));
  bench->add_option("--work-dir", bench_config.work_dir, "Corpus cache directory")->required();
  bench->add_option("--runs", bench_config.runs)->capture_default_str();
  bench->add_option("--params", bench_params, "Comma-separated experiment parameters");
  bench->add_option("--image-size", bench_config.image_size_bytes)->capture_default_str();
  bench->add_option("--seed", bench_config.seed)->capture_default_str();
  bench->add_option("--config", bench_config_file, "Instance configuration supplying remote defaults");
  bench->add_option("--request-latency-ms", latency_ms, "Simulated per-request latency");
  bench->add_option("--byte-latency-ns", byte_latency_ns, "Simulated per-byte latency");
  bench->add_option("--out", bench_out, "CSV file ('-' for stdout)")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) {
      gen.counts = parse_list(gen_counts);
      if (!gen_levels.empty()) {
        GranularitySchema schema;
        std::stringstream in(gen_levels);
        for (std::string level; std::getline(in, level, ',');) schema.levels.push_back(level);
        gen.schema = schema;
      }
      gen.write_blobs = !gen_no_blobs;
      GeneratedCorpus corpus = generate_synthetic_source(gen_out, gen);
      Json per_depth = corpus.entries_per_depth;
      print(Json{{"blob_bytes", corpus.blob_bytes},
                 {"entries_per_depth", per_depth},
                 {"metadata_bytes", corpus.metadata_bytes},
                 {"source_id", corpus.source_id}});
    } else if (serve->parsed()) {
      InstanceConfig config = InstanceConfig::load(config_file);
      Instance instance(config, http_connector());
      HttpService service(instance);
      const int port = service.bind(config.host, config.port);
      if (config.public_uri.empty()) instance.set_public_uri("http://" + config.host + ":" + std::to_string(port));
      running_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << config.instance_id << " listening on " << instance.uri() << "\n";
      service.serve();
      running_service = nullptr;
    } else if (rs_create->parsed()) {
      Json body{{"replicas", replicas_json(replica_specs)}, {"force_load", query_opts.force_load}};
      if (!query_opts.level.empty()) body["query"] = to_json(query_opts.query());
      if (!rs_id.empty()) body["id"] = rs_id;
      print(client_opts.client().post("/replicasets", body));
    } else if (rs_get->parsed()) {
      print(client_opts.client().get("/replicasets/" + rs_id));
    } else if (rs_update->parsed()) {
      print(client_opts.client().put("/replicasets/" + rs_id, Json{{"replicas", replicas_json(replica_specs)}}));
    } else if (rs_delete->parsed()) {
      client_opts.client().del("/replicasets/" + rs_id);
    } else if (query->parsed()) {
      print(client_opts.client().post("/query", Json{{"force_load", query_opts.force_load},
                                                     {"query", to_json(query_opts.query())},
                                                     {"replicaset_id", rs_id}}));
    } else if (share->parsed()) {
      Json envelope = client_opts.client().post("/replicasets/" + rs_id + "/envelope",
                                                Json{{"access", with_access}, {"kind", kind}, {"receiver_user", receiver}});
      const std::string text = canonical(envelope);
      if (envelope_out == "-") {
        std::cout << text << "\n";
      } else {
        std::ofstream(envelope_out, std::ios::binary) << text;
      }
    } else if (import->parsed()) {
      std::string text = read_text(envelope_in);
      while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.pop_back();
      print(client_opts.client().post_raw("/share", text));
    } else if (materialize->parsed()) {
      print(client_opts.client().post("/replicasets/" + rs_id + "/materialize", Json::object()));
    } else if (grant->parsed()) {
      print(client_opts.client().post("/grants", Json{{"replicaset_id", rs_id}}));
    } else if (gc->parsed()) {
      print(client_opts.client().post("/gc", Json::object()));
    } else if (bench->parsed()) {
      if (!bench_config_file.empty()) bench_config.remote = InstanceConfig::load(bench_config_file).remote_defaults;
      if (latency_ms >= 0) {
        bench_config.remote.per_request_latency =
            std::chrono::nanoseconds(static_cast<std::int64_t>(latency_ms * 1e6));
      }
      if (byte_latency_ns >= 0) {
        bench_config.remote.per_byte_latency = std::chrono::nanoseconds(static_cast<std::int64_t>(byte_latency_ns));
      }
      bench_config.params = parse_list(bench_params);
      std::ofstream file;
      std::ostream* out = &std::cout;
      if (bench_out != "-") {
        file.open(bench_out);
        if (!file) throw Error(ErrorCode::ConfigError, "cannot write " + bench_out);
        out = &file;
      }
      *out << kBenchHeader << "\n" << std::flush;
      run_bench(experiment, bench_config, [&](const BenchRow& row) { *out << row.csv() << "\n" << std::flush; });
    }
  } catch (const Error& e) {
    std::cerr << "obidos: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "obidos: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
