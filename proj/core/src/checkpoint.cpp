#include "eid/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace eid {
namespace {

constexpr char kMagic[8] = {'E', 'I', 'D', 'C', 'K', 'P', 'T', '1'};

void write_entry(std::ofstream& out, const std::string& name,
                 const std::vector<uint32_t>& dims,
                 const std::vector<float>& payload) {
  const uint16_t name_len = uint16_t(name.size());
  out.write(reinterpret_cast<const char*>(&name_len), 2);
  out.write(name.data(), name_len);
  const uint8_t ndim = uint8_t(dims.size());
  out.put(char(ndim));
  out.write(reinterpret_cast<const char*>(dims.data()),
            std::streamsize(dims.size() * 4));
  out.write(reinterpret_cast<const char*>(payload.data()),
            std::streamsize(payload.size() * 4));
}

template <typename T>
std::vector<float> to_f32(std::span<const T> v) {
  std::vector<float> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = float(v[i]);
  return out;
}

struct RawEntry {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<float> payload;
};

RawEntry read_entry(std::ifstream& in, const std::string& path) {
  RawEntry e;
  uint16_t name_len = 0;
  in.read(reinterpret_cast<char*>(&name_len), 2);
  e.name.resize(name_len);
  in.read(e.name.data(), name_len);
  const int ndim = in.get();
  if (!in || ndim < 0 || ndim > 8)
    fail_io("corrupt checkpoint entry in " + path);
  e.dims.resize(size_t(ndim));
  in.read(reinterpret_cast<char*>(e.dims.data()), std::streamsize(ndim * 4));
  uint64_t count = 1;
  for (uint32_t d : e.dims) count *= d;
  if (count == 0 || count > (uint64_t(1) << 32))
    fail_io("degenerate tensor dims in " + path);
  e.payload.resize(count);
  in.read(reinterpret_cast<char*>(e.payload.data()),
          std::streamsize(count * 4));
  if (!in) fail_io("truncated checkpoint " + path);
  return e;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

template <typename T>
void save_checkpoint(
    const std::string& path, const ParamStore<T>& params,
    const std::vector<std::pair<std::string, float>>& extra_scalars) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot open " + path + " for writing");

  uint32_t count = 0;
  for (const std::string& name : params.names()) {
    ++count;
    const auto* adam = params.adam_state_if(name);
    if (adam && !adam->m.empty()) count += 2;
  }
  count += 1 + uint32_t(extra_scalars.size());  // "step" + extras

  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const std::string& name : params.names()) {
    const Tensor<T>& t = params.at(name);
    const Shape& s = t.shape();
    const std::vector<uint32_t> dims{uint32_t(s.n), uint32_t(s.c),
                                     uint32_t(s.h), uint32_t(s.w)};
    write_entry(out, name, dims, to_f32(t.values()));
    const auto* adam = params.adam_state_if(name);
    if (adam && !adam->m.empty()) {
      write_entry(out, name + ".adam.m", dims,
                  to_f32(std::span<const T>(adam->m)));
      write_entry(out, name + ".adam.v", dims,
                  to_f32(std::span<const T>(adam->v)));
    }
  }
  write_entry(out, "step", {1}, {float(params.step())});
  for (const auto& [name, value] : extra_scalars)
    write_entry(out, name, {1}, {value});
  if (!out) fail_io("failed writing checkpoint " + path);
}

template <typename T>
LoadedCheckpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    fail_io("not an EIDCKPT1 file: " + path);
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in) fail_io("truncated checkpoint " + path);

  LoadedCheckpoint<T> loaded;
  std::vector<RawEntry> adam_entries;
  for (uint32_t i = 0; i < count; ++i) {
    RawEntry e = read_entry(in, path);
    if (e.name == "step") {
      loaded.params.set_step(int64_t(e.payload.at(0)));
      continue;
    }
    if (ends_with(e.name, ".adam.m") || ends_with(e.name, ".adam.v")) {
      adam_entries.push_back(std::move(e));
      continue;
    }
    if (e.dims.size() == 1 && e.dims[0] == 1 && e.payload.size() == 1 &&
        e.name.find('.') == std::string::npos && e.name != "step") {
      // Bare scalar marker (e.g. "frozen").
      loaded.extra_scalars.emplace_back(e.name, e.payload[0]);
      continue;
    }
    std::vector<uint32_t> dims(4, 1);
    check(e.dims.size() <= 4, "parameter tensors are at most rank 4");
    std::copy(e.dims.begin(), e.dims.end(), dims.begin() + (4 - e.dims.size()));
    const Shape s{int64_t(dims[0]), int64_t(dims[1]), int64_t(dims[2]),
                  int64_t(dims[3])};
    std::vector<T> values(e.payload.size());
    for (size_t k = 0; k < values.size(); ++k) values[k] = T(e.payload[k]);
    loaded.params.add(e.name, Tensor<T>::from_vector(s, std::move(values)));
  }
  for (RawEntry& e : adam_entries) {
    const bool is_m = ends_with(e.name, ".adam.m");
    const std::string base = e.name.substr(0, e.name.size() - 7);
    check(loaded.params.contains(base),
          detail::cat("checkpoint has optimizer state for unknown parameter '",
                      base, "'"));
    auto& state = loaded.params.adam_state(base);
    std::vector<T>& dst = is_m ? state.m : state.v;
    dst.resize(e.payload.size());
    for (size_t k = 0; k < dst.size(); ++k) dst[k] = T(e.payload[k]);
  }
  return loaded;
}

bool files_byte_equal(const std::string& a, const std::string& b) {
  return read_file_bytes(a) == read_file_bytes(b);
}

std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

template void save_checkpoint(const std::string&, const ParamStore<float>&,
                              const std::vector<std::pair<std::string, float>>&);
template void save_checkpoint(const std::string&, const ParamStore<double>&,
                              const std::vector<std::pair<std::string, float>>&);
template LoadedCheckpoint<float> load_checkpoint(const std::string&);
template LoadedCheckpoint<double> load_checkpoint(const std::string&);

}  // namespace eid
