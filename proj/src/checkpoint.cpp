#include "bslip/checkpoint.hpp"

#include <zlib.h>

#include "binio.hpp"

namespace bslip {

namespace {

using Code = CheckpointError::Code;

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(std::string_view magic,
                                            const std::vector<std::uint32_t>& fields,
                                            const nn::ParamStore& params,
                                            const NormStats& norm) {
  binio::Writer w;
  w.bytes(magic);
  w.u16(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(fields.size()));
  for (auto f : fields) w.u32(f);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const nn::Tensor& t = params.value(i);
    w.u32(static_cast<std::uint32_t>(t.size()));
    for (double v : t.values) w.f32(static_cast<float>(v));
  }
  for (double m : norm.mean) w.f64(m);
  for (double s : norm.stddev) w.f64(s);
  const auto& bytes = w.data();
  w.u32(crc_of(bytes.data() + magic.size(), bytes.size() - magic.size()));
  return std::move(w.data());
}

CheckpointData decode_checkpoint(std::string_view magic,
                                 const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < magic.size()) {
    throw CheckpointError(Code::Truncated, "checkpoint shorter than its magic");
  }
  binio::Reader r(bytes.data(), bytes.size());
  const std::string got = r.bytes(magic.size());
  if (got != magic) {
    throw CheckpointError(Code::BadMagic, "checkpoint magic '" + got +
                                              "' does not match '" +
                                              std::string(magic) + "'");
  }
  const std::uint16_t version = r.u16();
  if (r.truncated()) throw CheckpointError(Code::Truncated, "checkpoint truncated in header");
  if (version != kCheckpointVersion) {
    throw CheckpointError(Code::BadVersion,
                          "unsupported checkpoint version " + std::to_string(version));
  }

  auto truncated = [&](const char* where) {
    return CheckpointError(Code::Truncated,
                           std::string("checkpoint truncated in ") + where);
  };

  CheckpointData d;
  const std::uint32_t n_fields = r.u32();
  if (r.truncated() || n_fields > r.remaining() / 4) throw truncated("config");
  d.fields.resize(n_fields);
  for (auto& f : d.fields) f = r.u32();
  const std::uint32_t n_tensors = r.u32();
  if (r.truncated() || n_tensors > r.remaining() / 4) throw truncated("tensor table");
  d.tensors.resize(n_tensors);
  for (auto& t : d.tensors) {
    const std::uint32_t count = r.u32();
    if (r.truncated() || count > r.remaining() / 4) throw truncated("tensor data");
    t.resize(count);
    for (auto& v : t) v = r.f32();
  }
  for (double& m : d.norm.mean) m = r.f64();
  for (double& s : d.norm.stddev) s = r.f64();
  if (r.truncated() || r.remaining() < 4) throw truncated("trailer");
  const std::size_t payload_end = r.position();
  const std::uint32_t stored = r.u32();
  if (r.remaining() != 0) {
    throw CheckpointError(Code::Corrupt, "trailing bytes after checkpoint CRC");
  }
  const std::uint32_t actual =
      crc_of(bytes.data() + magic.size(), payload_end - magic.size());
  if (stored != actual) {
    throw CheckpointError(Code::Corrupt, "checkpoint CRC mismatch");
  }
  return d;
}

void write_checkpoint(const std::filesystem::path& path, std::string_view magic,
                      const std::vector<std::uint32_t>& fields,
                      const nn::ParamStore& params, const NormStats& norm) {
  try {
    binio::write_file(path.string(), encode_checkpoint(magic, fields, params, norm));
  } catch (const DataError& e) {
    throw CheckpointError(Code::Io, e.what());
  }
}

CheckpointData read_checkpoint(const std::filesystem::path& path,
                               std::string_view magic) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = binio::read_file(path.string());
  } catch (const DataError& e) {
    throw CheckpointError(Code::Io, e.what());
  }
  return decode_checkpoint(magic, bytes);
}

void assign_tensors(nn::ParamStore& params, const CheckpointData& data) {
  if (data.tensors.size() != params.size()) {
    throw CheckpointError(Code::ShapeMismatch,
                          "checkpoint holds " + std::to_string(data.tensors.size()) +
                              " tensors, model has " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Tensor& t = params.value(i);
    if (data.tensors[i].size() != t.size()) {
      throw CheckpointError(Code::ShapeMismatch,
                            "tensor " + params.name(i) + " expects " +
                                std::to_string(t.size()) + " values, checkpoint has " +
                                std::to_string(data.tensors[i].size()));
    }
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = data.tensors[i][k];
  }
}

}  // namespace bslip
