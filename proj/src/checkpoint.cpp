#include "hyperadapters/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

namespace hyperadapters {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'C', 'K', 'P', 'T', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint truncated");
  return v;
}

std::string get_string(std::istream& in, std::uint64_t len) {
  if (len > (1ull << 32)) throw std::runtime_error("checkpoint string length corrupt");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint truncated");
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const std::string& header, const ParameterList& params) {
  std::set<std::string> names;
  for (const auto& p : params) {
    if (!names.insert(p->name()).second) throw std::invalid_argument("duplicate parameter name " + p->name());
  }
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp);
    out.write(kMagic, sizeof kMagic);
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    put<std::uint64_t>(out, params.size());
    for (const auto& p : params) {
      put<std::uint64_t>(out, p->name().size());
      out.write(p->name().data(), static_cast<std::streamsize>(p->name().size()));
      const auto& t = p->value();
      put<std::uint64_t>(out, t.rank());
      for (auto d : t.shape()) put<std::uint64_t>(out, d);
      out.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error("not a checkpoint: " + path.string());
  Checkpoint ckpt;
  ckpt.header = get_string(in, get<std::uint64_t>(in));
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto name = get_string(in, get<std::uint64_t>(in));
    const auto rank = get<std::uint64_t>(in);
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint tensor rank corrupt for " + name);
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in));
    std::vector<double> data(shape_size(shape));
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint truncated in " + name);
    ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

void restore_parameters(const Checkpoint& ckpt, const ParameterList& params) {
  for (const auto& p : params) {
    auto it = ckpt.tensors.find(p->name());
    if (it == ckpt.tensors.end()) throw std::runtime_error("checkpoint lacks parameter " + p->name());
    if (it->second.shape() != p->value().shape()) {
      throw ShapeError("checkpoint parameter " + p->name() + " is " + shape_string(it->second.shape()) + ", expected " +
                       shape_string(p->value().shape()));
    }
    p->value() = it->second;
  }
}

}  // namespace hyperadapters
