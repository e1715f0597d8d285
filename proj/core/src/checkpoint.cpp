#include "crowdkit/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "crowdkit/errors.hpp"
#include "crowdkit/format.hpp"

namespace crowdkit {

namespace {

static_assert(std::endian::native == std::endian::little,
              "CKWT serialization assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

void put_f64(std::vector<std::uint8_t>& out, const double* v, std::size_t n) {
  const std::uint8_t* p = reinterpret_cast<const std::uint8_t*>(v);
  out.insert(out.end(), p, p + 8 * n);
}

struct Reader {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
  const std::string& path;

  bool done() const { return pos >= bytes.size(); }

  void need(std::size_t n, const char* what) {
    if (pos + n > bytes.size()) {
      throw ParseError(path + ": truncated CKWT file while reading " +
                       std::string(what));
    }
  }

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  }

  std::string str(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }

  std::vector<double> f64(std::size_t n, const char* what) {
    need(8 * n, what);
    std::vector<double> v(n);
    std::memcpy(v.data(), bytes.data() + pos, 8 * n);
    pos += 8 * n;
    return v;
  }
};

}  // namespace

void write_ckwt(const std::string& path,
                const std::map<std::string, Tensor>& named) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'C', 'K', 'W', 'T'});
  put_u32(out, kCkwtVersion);
  for (const auto& [name, tensor] : named) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    const Shape& shape = tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (int d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    put_f64(out, tensor.data().data(), tensor.size());
  }
  write_binary_file(path, out);
}

std::map<std::string, Tensor> read_ckwt(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_binary_file(path);
  Reader r{bytes, 0, path};
  const std::string magic = r.str(4, "magic");
  if (magic != "CKWT") {
    throw ParseError(path + ": bad magic bytes (not a CKWT file)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCkwtVersion) {
    throw ParseError(path + ": unsupported CKWT version " +
                     std::to_string(version));
  }
  std::map<std::string, Tensor> named;
  while (!r.done()) {
    const std::uint32_t name_len = r.u32("name length");
    const std::string name = r.str(name_len, "name");
    const std::uint32_t rank = r.u32("rank");
    if (rank > 8) {
      throw ParseError(path + ": implausible rank " + std::to_string(rank) +
                       " for parameter '" + name + "'");
    }
    Shape shape;
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = r.u32("dims");
      if (d == 0) {
        throw ParseError(path + ": zero extent in parameter '" + name + "'");
      }
      shape.push_back(static_cast<int>(d));
      count *= d;
    }
    std::vector<double> data = r.f64(count, "payload");
    if (!named.emplace(name, Tensor::from_data(shape, std::move(data)))
             .second) {
      throw ParseError(path + ": duplicate parameter '" + name + "'");
    }
  }
  return named;
}

}  // namespace crowdkit
