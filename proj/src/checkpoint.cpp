#include "skl/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace skl {
namespace checkpoint {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'L', '2'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ofstream& out, T v) {
  write_bytes(out, &v, sizeof(v));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n,
                const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!in) throw IoError("truncated or unreadable checkpoint: " + path);
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v;
  read_bytes(in, &v, sizeof(v), path);
  return v;
}

void write_floats(std::ofstream& out, const float* p, std::size_t n) {
  write_bytes(out, p, n * sizeof(float));
}

void read_floats(std::ifstream& in, float* p, std::size_t n,
                 const std::string& path) {
  read_bytes(in, p, n * sizeof(float), path);
}

}  // namespace

void save(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  write_bytes(out, kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint8_t>(model.spec.mode));
  const int n = model.num_layers();
  write_pod(out, static_cast<std::uint16_t>(n));
  for (int d : model.spec.layer_dims)
    write_pod(out, static_cast<std::uint32_t>(d));
  write_pod(out, static_cast<std::uint32_t>(model.spec.rank));
  for (int k = 0; k < n; ++k) {
    const FcLayer& l = model.fc[k];
    write_floats(out, l.w.data(), l.w.size());
    write_floats(out, l.b.data(), l.b.size());
    if (k < n - 1) {
      const BatchNormLayer& bnl = model.bn[k];
      write_floats(out, bnl.gamma.data(), bnl.gamma.size());
      write_floats(out, bnl.beta.data(), bnl.beta.size());
      write_floats(out, bnl.running_mean.data(), bnl.running_mean.size());
      write_floats(out, bnl.running_var.data(), bnl.running_var.size());
    }
  }
  for (const LoraAdapter& ad : model.adapters) {
    write_floats(out, ad.wa.data(), ad.wa.size());
    write_floats(out, ad.wb.data(), ad.wb.size());
  }
  if (!out) throw IoError("write failed: " + path);
}

Model load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not an SKL2 checkpoint: " + path);
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) +
                  ": " + path);
  const auto mode_id = read_pod<std::uint8_t>(in, path);
  if (mode_id > static_cast<std::uint8_t>(FineTuneMode::Skip2LoRA))
    throw IoError("invalid mode id in checkpoint: " + path);
  const auto n = read_pod<std::uint16_t>(in, path);
  ModelSpec spec;
  spec.mode = static_cast<FineTuneMode>(mode_id);
  spec.layer_dims.resize(n + 1);
  for (auto& d : spec.layer_dims)
    d = static_cast<int>(read_pod<std::uint32_t>(in, path));
  spec.rank = static_cast<int>(read_pod<std::uint32_t>(in, path));

  Model model = build_model(spec);
  for (int k = 0; k < n; ++k) {
    FcLayer& l = model.fc[k];
    read_floats(in, l.w.data(), l.w.size(), path);
    read_floats(in, l.b.data(), l.b.size(), path);
    if (k < n - 1) {
      BatchNormLayer& bnl = model.bn[k];
      read_floats(in, bnl.gamma.data(), bnl.gamma.size(), path);
      read_floats(in, bnl.beta.data(), bnl.beta.size(), path);
      read_floats(in, bnl.running_mean.data(), bnl.running_mean.size(), path);
      read_floats(in, bnl.running_var.data(), bnl.running_var.size(), path);
    }
  }
  for (LoraAdapter& ad : model.adapters) {
    read_floats(in, ad.wa.data(), ad.wa.size(), path);
    read_floats(in, ad.wb.data(), ad.wb.size(), path);
  }
  char extra;
  in.read(&extra, 1);
  if (!in.eof())
    throw IoError("trailing bytes in checkpoint: " + path);
  return model;
}

Model transplant(const Model& loaded, FineTuneMode mode, int rank,
                 std::uint64_t seed) {
  if (loaded.spec.mode == mode) return loaded;
  if (mode_has_adapters(loaded.spec.mode))
    throw ContractError("checkpoint was written by mode '" +
                        mode_name(loaded.spec.mode) +
                        "' with adapters; cannot retarget it to '" +
                        mode_name(mode) + "'");
  ModelSpec spec;
  spec.layer_dims = loaded.spec.layer_dims;
  spec.rank = rank;
  spec.mode = mode;
  spec.seed = seed;
  Model model = build_model(spec);
  for (int k = 0; k < model.num_layers(); ++k) {
    model.fc[k].w = loaded.fc[k].w;
    model.fc[k].b = loaded.fc[k].b;
  }
  for (std::size_t k = 0; k < model.bn.size(); ++k) {
    model.bn[k].gamma = loaded.bn[k].gamma;
    model.bn[k].beta = loaded.bn[k].beta;
    model.bn[k].running_mean = loaded.bn[k].running_mean;
    model.bn[k].running_var = loaded.bn[k].running_var;
  }
  return model;
}

}  // namespace checkpoint
}  // namespace skl
