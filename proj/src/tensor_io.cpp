#include "xmrc/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace xmrc {

static_assert(std::endian::native == std::endian::little, "archive payload is little-endian");

namespace {

constexpr const char* kMagic = "XMRC-ARCHIVE 1";

std::size_t element_size(DType t) { return t == DType::F32 ? 4 : 8; }

bool valid_token(const std::string& s) {
  return !s.empty() && s.find_first_of(" \t\r\n") == std::string::npos;
}

}  // namespace

Index StoredTensor::rows() const {
  return std::visit([](const auto& m) { return m.rows(); }, data);
}

Index StoredTensor::cols() const {
  return std::visit([](const auto& m) { return m.cols(); }, data);
}

const StoredTensor* TensorArchive::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void save_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  std::ostringstream header;
  header << kMagic << '\n';
  for (const auto& [key, value] : archive.meta) {
    if (!valid_token(key)) throw Error("archive: invalid meta key '" + key + "'");
    if (value.find('\n') != std::string::npos) throw Error("archive: meta value for '" + key + "' spans lines");
    header << "meta " << key << ' ' << value << '\n';
  }
  std::size_t offset = 0;
  for (const auto& t : archive.tensors) {
    if (!valid_token(t.name)) throw Error("archive: invalid tensor name '" + t.name + "'");
    header << "tensor " << t.name << ' ' << (t.dtype() == DType::F32 ? "f32" : "f64") << ' ' << t.rows() << ' '
           << t.cols() << ' ' << offset << '\n';
    offset += static_cast<std::size_t>(t.rows() * t.cols()) * element_size(t.dtype());
  }
  header << "end " << offset << '\n';

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("archive: cannot open '" + path.string() + "' for writing");
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& t : archive.tensors) {
    std::visit(
        [&](const auto& m) {
          out.write(reinterpret_cast<const char*>(m.data()),
                    static_cast<std::streamsize>(m.size() * sizeof(typename std::decay_t<decltype(m)>::Scalar)));
        },
        t.data);
  }
  if (!out) throw Error("archive: write failed for '" + path.string() + "'");
}

TensorArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("archive: cannot open '" + path.string() + "'");
  auto fail = [&](const std::string& why) { return Error("archive '" + path.string() + "': " + why); };

  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw fail("bad magic line");

  struct Entry {
    std::string name;
    DType dtype;
    Index rows, cols;
    std::size_t offset;
  };
  TensorArchive archive;
  std::vector<Entry> entries;
  std::size_t payload = 0;
  bool ended = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "meta") {
      std::string key;
      ls >> key;
      std::string value;
      std::getline(ls, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      archive.meta[key] = value;
    } else if (kind == "tensor") {
      Entry e;
      std::string dt;
      if (!(ls >> e.name >> dt >> e.rows >> e.cols >> e.offset)) throw fail("malformed tensor line: " + line);
      if (dt != "f32" && dt != "f64") throw fail("unknown dtype '" + dt + "'");
      if (e.rows < 0 || e.cols < 0) throw fail("negative shape for " + e.name);
      e.dtype = dt == "f32" ? DType::F32 : DType::F64;
      entries.push_back(e);
    } else if (kind == "end") {
      if (!(ls >> payload)) throw fail("malformed end line");
      ended = true;
      break;
    } else {
      throw fail("unexpected header line: " + line);
    }
  }
  if (!ended) throw fail("missing end line");

  std::string blob(payload, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(payload));
  if (static_cast<std::size_t>(in.gcount()) != payload) throw fail("truncated payload");

  for (const auto& e : entries) {
    const std::size_t bytes = static_cast<std::size_t>(e.rows * e.cols) * element_size(e.dtype);
    if (e.offset + bytes > payload) throw fail("tensor " + e.name + " exceeds payload");
    StoredTensor t;
    t.name = e.name;
    if (e.dtype == DType::F32) {
      Matrix<float> m(e.rows, e.cols);
      std::memcpy(m.data(), blob.data() + e.offset, bytes);
      t.data = std::move(m);
    } else {
      Matrix<double> m(e.rows, e.cols);
      std::memcpy(m.data(), blob.data() + e.offset, bytes);
      t.data = std::move(m);
    }
    archive.tensors.push_back(std::move(t));
  }
  return archive;
}

}  // namespace xmrc
