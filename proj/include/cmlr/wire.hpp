#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cmlr/matrix.hpp"

namespace cmlr::wire {

// Wire records are length-prefixed:
//   u32 length (bytes after this field) | u8 kind | u16 from | u16 to | payload
// All integers little-endian. Matrix payloads are
//   u32 rows | u32 cols | rows*cols f64 (little-endian, row-major).
// Participant ids: 0 is the cloud server, agencies are 1..K.

enum class Kind : std::uint8_t {
  share_x = 1,
  share_z = 2,
  bstar = 3,
  pseudo = 4,
  beta_star = 5,
  decrypt_step = 6,
  verify_req = 7,
  verify_data = 8,
};

const char* kind_name(Kind kind);

struct Message {
  Kind kind;
  std::uint16_t from = 0;
  std::uint16_t to = 0;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_matrix(const Matrix& m);
Matrix decode_matrix(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_message(const Message& msg);
// Decodes one record from the front of `bytes`; *consumed reports its size.
Message decode_message(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

std::vector<std::uint8_t> encode_stream(std::span<const Message> messages);
std::vector<Message> decode_stream(std::span<const std::uint8_t> bytes);

// FNV-1a over a record's encoded bytes; the transcript digest primitive.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);

}  // namespace cmlr::wire
