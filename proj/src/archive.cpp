// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "modalprompt/archive.hpp"

#include "modalprompt/errors.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace modalprompt {

static_assert(std::endian::native == std::endian::little, "archive format assumes little endian");

namespace {

constexpr char kMagic[4] = {'M', 'P', 'A', 'R'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const std::string& field) {
    T v;
    std::memcpy(&v, take(sizeof(T), field).data(), sizeof(T));
    return v;
  }

  std::string_view take(size_t n, const std::string& field) {
    if (bytes_.size() - pos_ < n) {
      throw IntegrityError("archive truncated while reading " + field);
    }
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string matrix_bytes(const Matrix& m) {
  return std::string(reinterpret_cast<const char*>(m.data()),
                     static_cast<size_t>(m.size()) * sizeof(double));
}

void Archive::add(std::string name, Matrix value) {
  tensors.emplace_back(std::move(name), std::move(value));
}

bool Archive::contains(std::string_view name) const {
  for (const auto& [n, _] : tensors) {
    if (n == name) return true;
  }
  return false;
}

const Matrix& Archive::tensor(std::string_view name) const {
  for (const auto& [n, m] : tensors) {
    if (n == name) return m;
  }
  throw IntegrityError("archive is missing tensor '" + std::string(name) + "'");
}

const Matrix& Archive::tensor(std::string_view name, Eigen::Index rows, Eigen::Index cols) const {
  const Matrix& m = tensor(name);
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream msg;
    msg << "tensor '" << name << "' has shape " << m.rows() << "x" << m.cols() << ", expected "
        << rows << "x" << cols;
    throw ShapeError(msg.str());
  }
  return m;
}

std::string serialize(const Archive& archive) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string meta = archive.metadata.dump();
  put<std::uint64_t>(out, meta.size());
  out += meta;
  put<std::uint64_t>(out, fnv1a(meta));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& [name, m] : archive.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    const std::string data = matrix_bytes(m);
    out += data;
    put<std::uint64_t>(out, fnv1a(data));
  }
  return out;
}

Archive deserialize(std::string_view bytes) {
  Reader in(bytes);
  if (in.take(4, "magic") != std::string_view(kMagic, 4)) {
    throw IntegrityError("not an archive: bad magic");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) throw IntegrityError("unsupported archive version " + std::to_string(version));

  Archive archive;
  const auto meta_len = in.get<std::uint64_t>("metadata length");
  const auto meta = in.take(meta_len, "metadata");
  if (in.get<std::uint64_t>("metadata checksum") != fnv1a(meta)) {
    throw IntegrityError("checksum mismatch in metadata");
  }
  try {
    archive.metadata = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("metadata is not valid json: ") + e.what());
  }

  const auto count = in.get<std::uint32_t>("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string where = "tensor #" + std::to_string(i);
    const auto name_len = in.get<std::uint32_t>(where + " name length");
    std::string name(in.take(name_len, where + " name"));
    const std::string field = "tensor '" + name + "'";
    const auto rows = in.get<std::uint64_t>(field + " rows");
    const auto cols = in.get<std::uint64_t>(field + " cols");
    if (rows > (1ULL << 32) || cols > (1ULL << 32)) throw IntegrityError(field + " has an absurd shape");
    const auto data = in.take(rows * cols * sizeof(double), field + " data");
    if (in.get<std::uint64_t>(field + " checksum") != fnv1a(data)) {
      throw IntegrityError("checksum mismatch in " + field);
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!data.empty()) std::memcpy(m.data(), data.data(), data.size());
    archive.add(std::move(name), std::move(m));
  }
  if (!in.done()) throw IntegrityError("trailing bytes after last tensor");
  return archive;
}

void save_archive(const Archive& archive, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  const std::string bytes = serialize(archive);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing " + path.string());
}

Archive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace modalprompt
