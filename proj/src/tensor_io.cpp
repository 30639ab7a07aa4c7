#include "dacal/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "dacal/error.hpp"

namespace dacal {
namespace {

constexpr char kMagic[4] = {'D', 'A', 'C', 'T'};

template <typename T>
T byteswap_if_needed(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
}

template <typename T>
void append(std::string& buf, T v) {
  v = byteswap_if_needed(v);
  const auto* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

class Reader {
 public:
  Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <typename T>
  T read(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) {
      throw IoError(source_ + ": truncated while reading " + what);
    }
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return byteswap_if_needed(v);
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string& source() const { return source_; }

 private:
  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::string encode(const DenseMatrix& m, std::uint32_t ndim) {
  std::string buf;
  buf.reserve(16 + 16 + m.size() * sizeof(float));
  buf.append(kMagic, 4);
  append<std::uint32_t>(buf, kTensorFormatVersion);
  append<std::uint32_t>(buf, kDtypeF32);
  append<std::uint32_t>(buf, ndim);
  if (ndim >= 1) append<std::uint64_t>(buf, m.rows());
  if (ndim == 2) append<std::uint64_t>(buf, m.cols());
  for (float v : m.data()) append<float>(buf, v);
  return buf;
}

}  // namespace

DenseMatrix load_tensor(const std::filesystem::path& path) {
  Reader r(read_file(path), path.string());
  if (r.remaining() < 4) throw IoError(r.source() + ": truncated header");
  char magic[4];
  for (char& c : magic) c = r.read<char>("magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError(r.source() + ": bad magic");
  const auto version = r.read<std::uint32_t>("version");
  if (version != kTensorFormatVersion) {
    throw FormatError(r.source() + ": unsupported format version " + std::to_string(version));
  }
  const auto dtype = r.read<std::uint32_t>("dtype");
  if (dtype != kDtypeF32) {
    throw FormatError(r.source() + ": unsupported dtype code " + std::to_string(dtype));
  }
  const auto ndim = r.read<std::uint32_t>("ndim");
  if (ndim > 16) throw FormatError(r.source() + ": implausible ndim " + std::to_string(ndim));

  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  if (ndim >= 1) {
    rows = r.read<std::uint64_t>("dims");
    cols = 1;
    for (std::uint32_t d = 1; d < ndim; ++d) {
      const auto dim = r.read<std::uint64_t>("dims");
      if (dim != 0 && cols > std::numeric_limits<std::uint64_t>::max() / dim) {
        throw FormatError(r.source() + ": dimension overflow");
      }
      cols *= dim;
    }
  }
  if (cols != 0 && rows > std::numeric_limits<std::uint64_t>::max() / cols / sizeof(float)) {
    throw FormatError(r.source() + ": dimension overflow");
  }
  const std::uint64_t count = rows * cols;
  const std::uint64_t payload = count * sizeof(float);
  if (r.remaining() < payload) throw IoError(r.source() + ": truncated payload");
  if (r.remaining() > payload) throw FormatError(r.source() + ": trailing bytes after payload");

  std::vector<float> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = r.read<float>("payload");
    if (!std::isfinite(data[i])) {
      throw DataError(r.source() + ": non-finite entry at flat index " + std::to_string(i));
    }
  }
  return DenseMatrix(rows, cols, std::move(data));
}

void save_tensor(const DenseMatrix& matrix, const std::filesystem::path& path) {
  const std::uint32_t ndim = (matrix.rows() == 0 && matrix.cols() == 0) ? 0 : 2;
  write_file(path, encode(matrix, ndim));
}

LabelVector load_labels(const std::filesystem::path& path, int num_classes) {
  const DenseMatrix m = load_tensor(path);
  if (m.cols() != 1 && m.rows() != 0) {
    throw ShapeError(path.string() + ": labels must be a 1-D tensor");
  }
  std::vector<std::int32_t> labels(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const float v = m(i, 0);
    if (v != std::floor(v)) {
      throw DataError(path.string() + ": non-integral label at index " + std::to_string(i));
    }
    labels[i] = static_cast<std::int32_t>(v);
  }
  return LabelVector(std::move(labels), num_classes);
}

void save_labels(const LabelVector& labels, const std::filesystem::path& path) {
  DenseMatrix m(labels.size(), 1);
  for (std::size_t i = 0; i < labels.size(); ++i) m(i, 0) = static_cast<float>(labels[i]);
  write_file(path, encode(m, 1));
}

std::string checksum(const DenseMatrix& matrix) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t shape[2] = {byteswap_if_needed<std::uint64_t>(matrix.rows()),
                                  byteswap_if_needed<std::uint64_t>(matrix.cols())};
  mix(shape, sizeof(shape));
  for (float v : matrix.data()) {
    const float le = byteswap_if_needed(v);
    mix(&le, sizeof(le));
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace dacal
