#include "obidos/journal.hpp"

#include <zlib.h>

#include <iterator>

#include "obidos/error.hpp"

namespace fs = std::filesystem;

namespace obidos {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

std::uint32_t checksum(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

}  // namespace

Journal::Journal(fs::path file) : file_(std::move(file)) {
  if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
  out_.open(file_, std::ios::binary | std::ios::app);
  if (!out_) throw Error(ErrorCode::JournalCorrupt, "cannot open " + file_.string());
}

std::string Journal::encode(RecordTag tag, const Json& body) {
  std::string payload;
  payload.push_back(static_cast<char>(tag));
  payload += canonical(body);
  std::string out;
  out.reserve(payload.size() + 8);
  put_u32(out, static_cast<std::uint32_t>(payload.size()));
  put_u32(out, checksum(payload));
  out += payload;
  return out;
}

void Journal::append(RecordTag tag, const Json& body) {
  std::string bytes = encode(tag, body);
  std::lock_guard lock(mutex_);
  out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out_.flush();
  if (!out_) throw Error(ErrorCode::JournalCorrupt, "write failed on " + file_.string());
}

std::size_t Journal::replay(const std::function<void(const JournalRecord&)>& fn) {
  std::lock_guard lock(mutex_);
  out_.flush();
  std::string data;
  {
    std::ifstream in(file_, std::ios::binary);
    data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  std::size_t at = 0;
  std::size_t count = 0;
  while (at < data.size()) {
    if (data.size() - at < 8) break;
    const std::uint32_t len = get_u32(data, at);
    const std::uint32_t crc = get_u32(data, at + 4);
    if (len == 0 || data.size() - at - 8 < len) break;
    std::string_view payload(data.data() + at + 8, len);
    if (checksum(payload) != crc) {
      if (at + 8 + len == data.size()) break;
      throw Error(ErrorCode::JournalCorrupt, "checksum mismatch at byte " + std::to_string(at));
    }
    JournalRecord rec{static_cast<RecordTag>(payload[0]), parse_json(payload.substr(1))};
    fn(rec);
    ++count;
    at += 8 + len;
  }

  if (at < data.size()) {
    // Torn tail from an interrupted append.
    out_.close();
    fs::resize_file(file_, at);
    out_.open(file_, std::ios::binary | std::ios::app);
  }
  return count;
}

}  // namespace obidos
