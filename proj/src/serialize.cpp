#include "fedfreeze/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace fedfreeze {
namespace {

constexpr char kMagic[8] = {'F', 'F', 'P', 'A', 'R', 'A', 'M', '1'};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_ + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == size_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > size_) throw std::runtime_error("parameter stream truncated");
  }

  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

void put_record(std::vector<std::uint8_t>& out, const LayerParams& l, std::uint8_t role,
                const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(l.id.size()));
  out.insert(out.end(), l.id.begin(), l.id.end());
  put<std::uint8_t>(out, role);
  put<std::uint8_t>(out, l.group == Group::encoder ? 0 : 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (Index d : t.shape()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (Index i = 0; i < t.size(); ++i) put<double>(out, t[i]);
}

std::int64_t record_size(const LayerParams& l, const Tensor& t) {
  return 4 + static_cast<std::int64_t>(l.id.size()) + 1 + 1 + 4 + 8 * t.rank() + 8 * t.size();
}

ParamSet parse_records(Reader& r) {
  ParamSet params;
  while (!r.done()) {
    const auto id_len = r.get<std::uint32_t>();
    std::string id = r.string(id_len);
    const auto role = r.get<std::uint8_t>();
    const auto group = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint32_t>();
    if (role > 1 || group > 1 || rank == 0 || rank > 8) {
      throw std::runtime_error("malformed parameter record for '" + id + "'");
    }
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<Index>(r.get<std::uint64_t>()));
    Tensor t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = r.get<double>();

    if (role == 0) {
      params.add({id, group == 0 ? Group::encoder : Group::decoder, std::move(t), Tensor()});
    } else {
      LayerParams* l = params.find(id);
      if (!l || !l->bias.shape().empty()) {
        throw std::runtime_error("bias record for '" + id + "' without preceding weight");
      }
      l->bias = std::move(t);
    }
  }
  for (const auto& l : params.layers()) {
    if (l.bias.shape().empty()) throw std::runtime_error("missing bias record for '" + l.id + "'");
  }
  return params;
}

}  // namespace

std::vector<std::uint8_t> serialize_params(const ParamSet& params, Partition p) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(wire_size(params, p)));
  for (const auto& l : params.layers()) {
    if (!in_partition(l.group, p)) continue;
    put_record(out, l, 0, l.weight);
    put_record(out, l, 1, l.bias);
  }
  return out;
}

ParamSet deserialize_params(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size());
  return parse_records(r);
}

std::int64_t wire_size(const ParamSet& params, Partition p) {
  std::int64_t n = 0;
  for (const auto& l : params.layers()) {
    if (in_partition(l.group, p)) n += record_size(l, l.weight) + record_size(l, l.bias);
  }
  return n;
}

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  const auto payload = serialize_params(params);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os.write(kMagic, sizeof kMagic);
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error(path.string() + " is not a parameter checkpoint");
  }
  Reader r(bytes.data() + sizeof kMagic, bytes.size() - sizeof kMagic);
  return parse_records(r);
}

}  // namespace fedfreeze
