#include "eid/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace eid {

static_assert(std::endian::native == std::endian::little,
              "EIDTNSR1/EIDCKPT1 writers assume a little-endian host");

namespace {

constexpr char kMagic[8] = {'E', 'I', 'D', 'T', 'N', 'S', 'R', '1'};

template <typename S, typename T>
void read_payload(std::ifstream& in, Tensor<T>& t, const std::string& path) {
  std::vector<S> raw(t.numel());
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size() * sizeof(S)));
  if (!in) fail_io("truncated tensor payload in " + path);
  auto dst = t.values();
  for (size_t i = 0; i < raw.size(); ++i) dst[i] = static_cast<T>(raw[i]);
}

}  // namespace

template <typename T>
void save_tensor(const std::string& path, const Tensor<T>& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail_io("cannot open " + path + " for writing");
  out.write(kMagic, 8);
  const uint8_t dtype = sizeof(T) == 4 ? 0 : 1;
  const uint8_t ndim = 4;
  out.put(static_cast<char>(dtype));
  out.put(static_cast<char>(ndim));
  const Shape& s = t.shape();
  const uint32_t dims[4] = {uint32_t(s.n), uint32_t(s.c), uint32_t(s.h),
                            uint32_t(s.w)};
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(t.values().data()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!out) fail_io("failed writing tensor to " + path);
}

template <typename T>
Tensor<T> load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_io("cannot open tensor file " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    fail_io("not an EIDTNSR1 file: " + path);
  const int dtype = in.get();
  const int ndim = in.get();
  if (dtype != 0 && dtype != 1)
    fail_io(detail::cat("unknown dtype ", dtype, " in ", path));
  if (ndim < 1 || ndim > 4)
    fail_io(detail::cat("unsupported ndim ", ndim, " in ", path));
  uint32_t dims[4] = {1, 1, 1, 1};
  in.read(reinterpret_cast<char*>(dims + (4 - ndim)),
          static_cast<std::streamsize>(ndim * sizeof(uint32_t)));
  if (!in) fail_io("truncated tensor header in " + path);
  const Shape s{int64_t(dims[0]), int64_t(dims[1]), int64_t(dims[2]),
                int64_t(dims[3])};
  if (s.numel() <= 0) fail_io("degenerate tensor dims in " + path);
  Tensor<T> t = Tensor<T>::zeros(s);
  if (dtype == 0)
    read_payload<float>(in, t, path);
  else
    read_payload<double>(in, t, path);
  return t;
}

template void save_tensor(const std::string&, const Tensor<float>&);
template void save_tensor(const std::string&, const Tensor<double>&);
template Tensor<float> load_tensor(const std::string&);
template Tensor<double> load_tensor(const std::string&);

}  // namespace eid
