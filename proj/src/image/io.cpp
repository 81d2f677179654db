#include "texsr/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "texsr/error.hpp"

namespace texsr {

namespace {

constexpr std::array<char, 4> kTensorMagic = {'S', 'T', 'T', 'F'};
constexpr std::uint32_t kMaxTensorRank = 8;

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Cursor over a PGM header: whitespace and '#' comments separate tokens.
struct HeaderReader {
  const std::vector<unsigned char>& bytes;
  std::size_t pos = 0;

  void skip_separators() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  }

  long long number() {
    skip_separators();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw Error(Errc::malformed_header, "expected integer");
    long long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1LL << 31)) throw Error(Errc::malformed_header, "header value out of range");
      ++pos;
    }
    return v;
  }
};

Image decode_pgm(const std::vector<unsigned char>& bytes) {
  HeaderReader hdr{bytes};
  hdr.pos = 2;
  const long long width = hdr.number();
  const long long height = hdr.number();
  const long long maxval = hdr.number();
  if (width <= 0 || height <= 0) throw Error(Errc::malformed_header, "non-positive dims");
  if (hdr.pos >= bytes.size() || !std::isspace(bytes[hdr.pos])) {
    throw Error(Errc::malformed_header, "missing separator after maxval");
  }
  ++hdr.pos;
  if (maxval <= 0 || maxval > 65535) {
    throw Error(Errc::unsupported_bit_depth, "maxval " + std::to_string(maxval));
  }

  const std::size_t bytes_per_sample = maxval < 256 ? 1 : 2;
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - hdr.pos < count * bytes_per_sample) {
    throw Error(Errc::truncated_payload, "expected " + std::to_string(count * bytes_per_sample) + " payload bytes");
  }

  Image img(static_cast<int>(height), static_cast<int>(width));
  const unsigned char* p = bytes.data() + hdr.pos;
  const double scale = static_cast<double>(maxval);
  for (std::size_t i = 0; i < count; ++i) {
    unsigned sample = bytes_per_sample == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    img.data[i] = static_cast<double>(std::min<unsigned>(sample, static_cast<unsigned>(maxval))) / scale;
  }
  return img;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw Error(Errc::truncated_payload, "tensor header cut short");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <typename U>
void put_le(std::ostream& os, U bits) {
  char b[sizeof(U)];
  for (std::size_t k = 0; k < sizeof(U); ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  os.write(b, sizeof(U));
}

template <typename U>
U get_le(const unsigned char* b) {
  U v = 0;
  for (std::size_t k = 0; k < sizeof(U); ++k) v |= static_cast<U>(b[k]) << (8 * k);
  return v;
}

} // namespace

std::size_t Tensor::element_count() const noexcept {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_tensor(std::ostream& os, const Tensor& t, TensorPrecision precision) {
  if (t.values.size() != t.element_count()) throw Error(Errc::shape_mismatch, "tensor dims do not match payload");
  if (t.dims.size() > kMaxTensorRank) throw Error(Errc::invalid_argument, "tensor rank too large");
  os.write(kTensorMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(precision));
  put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(os, d);
  if (precision == TensorPrecision::f32) {
    for (double v : t.values) put_le(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  } else {
    for (double v : t.values) put_le(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw Error(Errc::io_failure, "tensor write failed");
}

Tensor read_tensor(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4) || magic != kTensorMagic) throw Error(Errc::malformed_header, "missing STTF magic");
  const std::uint32_t version = get_u32(is);
  if (version != static_cast<std::uint32_t>(TensorPrecision::f32) &&
      version != static_cast<std::uint32_t>(TensorPrecision::f64)) {
    throw Error(Errc::version_mismatch, "unsupported tensor version " + std::to_string(version));
  }
  const std::uint32_t ndim = get_u32(is);
  if (ndim > kMaxTensorRank) throw Error(Errc::malformed_header, "tensor rank " + std::to_string(ndim));

  Tensor t;
  t.dims.resize(ndim);
  std::size_t count = 1;
  for (auto& d : t.dims) {
    d = get_u32(is);
    if (d != 0 && count > (std::size_t{1} << 34) / d) throw Error(Errc::malformed_header, "tensor too large");
    count *= d;
  }

  const std::size_t width = version == 1 ? 4 : 8;
  std::vector<unsigned char> raw(count * width);
  if (!raw.empty() && !is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw Error(Errc::truncated_payload, "tensor payload cut short");
  }
  t.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (width == 4) {
      t.values[i] = std::bit_cast<float>(get_le<std::uint32_t>(raw.data() + 4 * i));
    } else {
      t.values[i] = std::bit_cast<double>(get_le<std::uint64_t>(raw.data() + 8 * i));
    }
  }
  return t;
}

void save_tensor(const Tensor& t, const std::filesystem::path& path, TensorPrecision precision) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  write_tensor(out, t, precision);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  return read_tensor(in);
}

Tensor to_tensor(const Image& img) {
  return {{static_cast<std::uint32_t>(img.height), static_cast<std::uint32_t>(img.width)}, img.data};
}

Tensor to_tensor(const FeatureMap& fm) {
  return {{static_cast<std::uint32_t>(fm.channels), static_cast<std::uint32_t>(fm.height),
           static_cast<std::uint32_t>(fm.width)},
          fm.data};
}

void save_feature_map(const FeatureMap& fm, const std::filesystem::path& path, TensorPrecision precision) {
  save_tensor(to_tensor(fm), path, precision);
}

FeatureMap load_feature_map(const std::filesystem::path& path) {
  Tensor t = load_tensor(path);
  if (t.dims.size() == 2) t.dims.insert(t.dims.begin(), 1);
  if (t.dims.size() != 3) throw Error(Errc::shape_mismatch, "feature map tensor must be rank 3");
  return FeatureMap(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]), static_cast<int>(t.dims[2]),
                    std::move(t.values));
}

Image load_image(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  if (bytes.size() >= 4 && std::equal(kTensorMagic.begin(), kTensorMagic.end(), bytes.begin())) {
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    Tensor t = read_tensor(in);
    const bool planar = t.dims.size() == 2 || (t.dims.size() == 3 && t.dims[0] == 1);
    if (!planar) throw Error(Errc::shape_mismatch, "image tensor must be HxW or 1xHxW");
    const auto h = static_cast<int>(t.dims[t.dims.size() - 2]);
    const auto w = static_cast<int>(t.dims.back());
    return Image(h, w, std::move(t.values));
  }
  throw Error(Errc::malformed_header, path.string() + " is neither binary PGM nor STTF");
}

void save_image(const Image& img, const std::filesystem::path& path, PgmDepth depth) {
  if (path.extension() == ".sttf") {
    save_tensor(to_tensor(img), path, TensorPrecision::f64);
    return;
  }
  const unsigned maxval = depth == PgmDepth::u8 ? 255 : 65535;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io_failure, "cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << '\n' << maxval << '\n';

  std::vector<char> payload;
  payload.reserve(img.size() * (depth == PgmDepth::u8 ? 1 : 2));
  for (double v : img.data) {
    const double clamped = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::floor(clamped * maxval + 0.5));
    if (depth == PgmDepth::u8) {
      payload.push_back(static_cast<char>(q));
    } else {
      payload.push_back(static_cast<char>(q >> 8));
      payload.push_back(static_cast<char>(q & 0xff));
    }
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(Errc::io_failure, "write failed for " + path.string());
}

} // namespace texsr
