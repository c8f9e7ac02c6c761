#include "comic/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "comic/errors.hpp"

namespace comic {

namespace {

template <typename U>
void put_le(std::ofstream& out, U v) {
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <typename U>
U get_le(std::ifstream& in, const std::string& path, const char* what) {
  unsigned char b[sizeof(U)];
  in.read(reinterpret_cast<char*>(b), sizeof(U));
  if (static_cast<std::size_t>(in.gcount()) != sizeof(U))
    throw format_error(path + ": truncated while reading " + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}

}  // namespace

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("cannot open checkpoint for writing: " + path);
  out.write("CKPT", 4);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    if (name.size() > 0xffff) throw format_error("tensor name too long: " + name);
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    if (t.rank() > 0xff) throw format_error("tensor rank too large");
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * 4));
  }
  if (!out) throw format_error("failed writing checkpoint: " + path);

  std::ofstream side(path + ".json", std::ios::binary);
  if (!side) throw format_error("cannot open sidecar for writing: " + path + ".json");
  side << ckpt.sidecar.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "CKPT", 4) != 0)
    throw format_error(path + ": bad magic at byte offset 0 (expected CKPT)");
  Checkpoint ckpt;
  auto count = get_le<std::uint32_t>(in, path, "tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name_len = get_le<std::uint16_t>(in, path, "name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::size_t>(in.gcount()) != name_len)
      throw format_error(path + ": truncated tensor name");
    auto rank = get_le<std::uint8_t>(in, path, "rank");
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint32_t>(in, path, "dimension");
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * 4));
    if (static_cast<std::size_t>(in.gcount()) != t.data.size() * 4)
      throw format_error(path + ": truncated payload for tensor " + name);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  std::ifstream side(path + ".json");
  if (side) {
    try {
      side >> ckpt.sidecar;
    } catch (const nlohmann::json::exception& e) {
      throw format_error(path + ".json: " + e.what());
    }
  }
  return ckpt;
}

Checkpoint checkpoint_from_params(const ParameterSet<float>& params, nlohmann::json sidecar) {
  Checkpoint ckpt;
  ckpt.sidecar = std::move(sidecar);
  for (const auto& p : params.items) ckpt.tensors.emplace_back(p.name, p.value);
  return ckpt;
}

void restore_params(ParameterSet<float>& params, const Checkpoint& ckpt) {
  for (auto& p : params.items) {
    const Tensor<float>* t = ckpt.find(p.name);
    if (!t) throw format_error("checkpoint is missing tensor " + p.name);
    if (t->shape != p.value.shape)
      throw format_error("checkpoint tensor " + p.name + " has shape " + shape_str(t->shape) +
                         ", model expects " + shape_str(p.value.shape));
    p.value = *t;
    p.zero_grad();
  }
}

}  // namespace comic
