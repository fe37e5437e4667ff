#include "dialnav/nn/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "dialnav/errors.hpp"

namespace dialnav::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "archive format assumes little-endian hosts");

constexpr char kMagic[4] = {'D', 'N', 'C', 'K'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_str(std::ostream& os, const std::string& s) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& is, std::string path) : is_(is), path_(std::move(path)) {}

  template <typename T>
  T get() {
    T v{};
    read(&v, sizeof(T));
    return v;
  }

  std::string get_str() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 30)) fail("string length out of range");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

  void read(void* dst, std::size_t n) {
    is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!is_) fail("truncated archive");
  }

  [[noreturn]] void fail(const std::string& what) const { throw DataError(path_ + ": " + what); }

 private:
  std::istream& is_;
  std::string path_;
};

}  // namespace

void Archive::add_store(const std::string& prefix, const ParameterStore& store) {
  for (const auto& p : store) arrays.emplace_back(prefix + "/" + p.name, p.value);
}

void Archive::load_store(const std::string& prefix, ParameterStore& store) const {
  std::size_t matched = 0;
  for (const auto& [name, m] : arrays) {
    if (name.rfind(prefix + "/", 0) != 0) continue;
    const std::string local = name.substr(prefix.size() + 1);
    Parameter* p = store.find(local);
    if (p == nullptr) throw DataError("checkpoint array " + name + " has no matching parameter");
    if (!p->value.same_shape(m)) throw DataError("checkpoint array " + name + " has the wrong shape");
    p->value = m;
    ++matched;
  }
  if (matched != store.size())
    throw DataError("checkpoint section '" + prefix + "' is missing parameters");
}

bool Archive::has_prefix(const std::string& prefix) const {
  for (const auto& entry : arrays)
    if (entry.first.rfind(prefix + "/", 0) == 0) return true;
  return false;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kArchiveVersion);
  put_str(os, archive.kind);
  put_str(os, archive.config_json);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(archive.arrays.size()));
  for (const auto& [name, m] : archive.arrays) {
    put_str(os, name);
    put<std::int32_t>(os, m.rows());
    put<std::int32_t>(os, m.cols());
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw DataError("failed writing " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("missing checkpoint: expected " + path.string());
  Reader r(is, path.string());
  char magic[4];
  r.read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("not a checkpoint archive");
  const auto version = r.get<std::uint32_t>();
  if (version != kArchiveVersion) r.fail("unsupported archive version " + std::to_string(version));
  Archive a;
  a.kind = r.get_str();
  a.config_json = r.get_str();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_str();
    const auto rows = r.get<std::int32_t>();
    const auto cols = r.get<std::int32_t>();
    if (rows < 0 || cols < 0 || static_cast<std::int64_t>(rows) * cols > (1LL << 28))
      r.fail("array " + name + " has an invalid shape");
    Matrix m(rows, cols);
    r.read(m.data(), m.size() * sizeof(double));
    a.arrays.emplace_back(std::move(name), std::move(m));
  }
  return a;
}

}  // namespace dialnav::nn
