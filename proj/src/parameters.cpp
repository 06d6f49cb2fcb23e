#include "empsoa/parameters.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>

#include "empsoa/errors.hpp"

namespace empsoa {

Tensor ParameterStore::add(const std::string& path, Shape shape, Init init, std::mt19937_64& rng) {
  if (contains(path)) throw ContractError("duplicate parameter " + path);
  Tensor t = Tensor::zeros(shape);
  auto data = t.mutable_data();
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(data.begin(), data.end(), 1.0);
      break;
    case Init::kXavier: {
      const std::size_t fan_out = shape.empty() ? 1 : shape.back();
      const std::size_t fan_in = shape.size() < 2 ? 1 : shape[shape.size() - 2];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : data) v = dist(rng);
      break;
    }
    case Init::kNormalSmall: {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (auto& v : data) v = dist(rng);
      break;
    }
  }
  t.set_requires_grad(true);
  params_.emplace(path, t);
  return t;
}

const Tensor& ParameterStore::get(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw LookupError("no parameter named " + path);
  return it->second;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : params_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

namespace {

constexpr std::array<char, 8> kMagic = {'E', 'M', 'P', 'S', 'O', 'A', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename U>
void put_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is, const std::filesystem::path& path) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw FormatError("truncated checkpoint " + path.string());
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint64_t>(os, store.size());
  for (const auto& [name, t] : store.entries()) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(os, d);
    for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

std::map<std::string, Tensor> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw FormatError("not a checkpoint file: " + path.string());
  if (const auto version = get_le<std::uint32_t>(is, path); version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get_le<std::uint64_t>(is, path);
  std::map<std::string, Tensor> out;
  for (std::uint64_t e = 0; e < count; ++e) {
    const auto len = get_le<std::uint32_t>(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated checkpoint " + path.string());
    const auto rank = get_le<std::uint32_t>(is, path);
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint64_t>(is, path);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = std::bit_cast<double>(get_le<std::uint64_t>(is, path));
    if (!out.emplace(name, Tensor::from(shape, std::move(values))).second)
      throw FormatError("duplicate entry " + name + " in " + path.string());
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes in checkpoint " + path.string());
  return out;
}

void load_checkpoint(ParameterStore& store, const std::filesystem::path& path) {
  auto saved = read_checkpoint(path);
  if (saved.size() != store.size())
    throw FormatError("checkpoint has " + std::to_string(saved.size()) + " parameters, model has " +
                      std::to_string(store.size()));
  for (const auto& [name, t] : store.entries()) {
    auto it = saved.find(name);
    if (it == saved.end()) throw FormatError("checkpoint lacks parameter " + name);
    if (it->second.shape() != t.shape())
      throw DimensionError("parameter " + name + " is " + shape_string(t.shape()) +
                           " in the model but " + shape_string(it->second.shape()) +
                           " in the checkpoint");
    Tensor dst = t;
    std::copy(it->second.data().begin(), it->second.data().end(), dst.mutable_data().begin());
  }
}

}  // namespace empsoa
