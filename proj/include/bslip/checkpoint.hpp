#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "bslip/data.hpp"
#include "bslip/error.hpp"
#include "bslip/tensor.hpp"

namespace bslip {

/// Binary model container shared by every classifier:
///
///   magic[4] | u16 version | u32 n_fields | u32 field[n_fields]
///   | u32 n_tensors | { u32 count | f32 value[count] } * n_tensors
///   | f64 mean[6] | f64 stddev[6] | u32 crc32
///
/// All integers and floats little-endian. The CRC covers every byte between
/// the magic and the CRC itself.
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public Error {
 public:
  enum class Code { Io, BadMagic, BadVersion, Truncated, Corrupt, ShapeMismatch };
  CheckpointError(Code code, const std::string& msg) : Error(msg), code_(code) {}
  Code code() const { return code_; }

 private:
  Code code_;
};

struct CheckpointData {
  std::vector<std::uint32_t> fields;
  std::vector<std::vector<float>> tensors;
  NormStats norm;
};

std::vector<std::uint8_t> encode_checkpoint(std::string_view magic,
                                            const std::vector<std::uint32_t>& fields,
                                            const nn::ParamStore& params,
                                            const NormStats& norm);
CheckpointData decode_checkpoint(std::string_view magic,
                                 const std::vector<std::uint8_t>& bytes);

void write_checkpoint(const std::filesystem::path& path, std::string_view magic,
                      const std::vector<std::uint32_t>& fields,
                      const nn::ParamStore& params, const NormStats& norm);
CheckpointData read_checkpoint(const std::filesystem::path& path,
                               std::string_view magic);

/// Copies decoded tensors into `params`, checking counts element-wise.
void assign_tensors(nn::ParamStore& params, const CheckpointData& data);

}  // namespace bslip
