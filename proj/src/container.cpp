#include "kgmode/container.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "kgmode/error.hpp"
#include "kgmode/hash.hpp"

namespace kgmode {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'K', 'G', 'M', 'O', 'D', 'E', '0', '1'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + 8);
}

void put_bytes(std::vector<unsigned char>& out, const std::string& s) {
  put_u64(out, s.size());
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : bytes_(b) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + pos_, 8);
    pos_ += 8;
    return v;
  }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::vector<double> reals() {
    const auto n = u64();
    if (n > (bytes_.size() - pos_) / 8) fail("array length exceeds buffer");
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * 8);
    pos_ += n * 8;
    return v;
  }
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) fail("truncated container");
  }
  std::size_t pos() const { return pos_; }
  [[noreturn]] static void fail(const std::string& why) {
    throw Error(ErrorKind::CheckpointCorrupt, "container: " + why);
  }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const std::vector<double>& Container::array(const std::string& key) const {
  const auto it = arrays.find(key);
  if (it == arrays.end()) {
    throw Error(ErrorKind::CheckpointCorrupt, "container: missing array '" + key + "'");
  }
  return it->second;
}

const std::string& Container::text(const std::string& key) const {
  const auto it = meta.find(key);
  if (it == meta.end()) {
    throw Error(ErrorKind::CheckpointCorrupt, "container: missing field '" + key + "'");
  }
  return it->second;
}

double Container::number(const std::string& key) const {
  const auto& v = array(key);
  if (v.size() != 1) {
    throw Error(ErrorKind::CheckpointCorrupt, "container: '" + key + "' is not a scalar");
  }
  return v[0];
}

void Container::set_number(const std::string& key, double value) { arrays[key] = {value}; }

std::vector<unsigned char> encode(const Container& c) {
  std::vector<unsigned char> out(kMagic, kMagic + 8);
  put_u64(out, c.meta.size());
  for (const auto& [k, v] : c.meta) {
    put_bytes(out, k);
    put_bytes(out, v);
  }
  put_u64(out, c.arrays.size());
  for (const auto& [k, v] : c.arrays) {
    put_bytes(out, k);
    put_u64(out, v.size());
    const auto* p = reinterpret_cast<const unsigned char*>(v.data());
    out.insert(out.end(), p, p + v.size() * 8);
  }
  Fnv1a h;
  h.update(out.data(), out.size());
  put_u64(out, h.digest());
  return out;
}

Container decode(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    Reader::fail("bad magic");
  }
  Fnv1a h;
  h.update(bytes.data(), bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != h.digest()) Reader::fail("digest mismatch");

  const std::vector<unsigned char> body(bytes.begin(), bytes.end() - 8);
  Reader in(body);
  in.need(8);
  (void)in.u64();  // magic, already checked
  Container c;
  for (auto n = in.u64(); n > 0; --n) {
    auto key = in.str();
    c.meta[key] = in.str();
  }
  for (auto n = in.u64(); n > 0; --n) {
    auto key = in.str();
    c.arrays[key] = in.reals();
  }
  if (in.pos() != body.size()) Reader::fail("trailing bytes");
  return c;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::Io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename onto " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_container(const std::filesystem::path& path, const Container& c) {
  const auto bytes = encode(c);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Container read_container(const std::filesystem::path& path) {
  const auto s = read_file(path);
  return decode(std::vector<unsigned char>(s.begin(), s.end()));
}

}  // namespace kgmode
