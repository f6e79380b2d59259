#include "debias/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "debias/error.hpp"

namespace debias {

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'B', 'P', 'F'};
constexpr std::size_t kHeaderBytes = 44;

template <typename T>
void put_le(std::vector<unsigned char>& buf, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const CheckpointHeader& header,
                      const PromptParameters& prompt) {
  if (header.num_layers != prompt.num_layers() || header.hidden_size != prompt.hidden() ||
      header.prefix_length != prompt.prefix_length()) {
    throw CheckpointError("checkpoint header does not match prompt shape");
  }
  std::vector<unsigned char> buf(kMagic.begin(), kMagic.end());
  put_le(buf, header.version);
  put_le(buf, header.num_layers);
  put_le(buf, header.hidden_size);
  put_le(buf, header.prefix_length);
  put_le(buf, header.lambda);
  put_le(buf, header.rho);
  put_le(buf, header.step);
  for (Eigen::Index i = 0; i < prompt.flat().size(); ++i) {
    put_le(buf, static_cast<float>(prompt.flat()[i]));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (buf.size() < kHeaderBytes || std::memcmp(buf.data(), kMagic.data(), 4) != 0) {
    throw CheckpointError("not a prompt checkpoint: " + path.string());
  }
  Checkpoint c;
  const unsigned char* p = buf.data() + 4;
  c.header.version = get_le<std::uint32_t>(p);
  if (c.header.version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(c.header.version));
  }
  c.header.num_layers = get_le<std::uint32_t>(p + 4);
  c.header.hidden_size = get_le<std::uint32_t>(p + 8);
  c.header.prefix_length = get_le<std::uint32_t>(p + 12);
  c.header.lambda = get_le<double>(p + 16);
  c.header.rho = get_le<double>(p + 24);
  c.header.step = get_le<std::uint64_t>(p + 32);

  c.prompt = PromptParameters(c.header.num_layers, c.header.prefix_length, c.header.hidden_size);
  const std::size_t count = c.prompt.parameter_count();
  if (buf.size() != kHeaderBytes + 4 * count) {
    throw CheckpointError("checkpoint payload has " + std::to_string(buf.size() - kHeaderBytes) +
                          " bytes, expected " + std::to_string(4 * count));
  }
  const unsigned char* data = buf.data() + kHeaderBytes;
  for (std::size_t i = 0; i < count; ++i) {
    c.prompt.flat()[static_cast<Eigen::Index>(i)] = get_le<float>(data + 4 * i);
  }
  return c;
}

}  // namespace debias
