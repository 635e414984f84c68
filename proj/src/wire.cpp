#include "cmlr/wire.hpp"

#include <bit>
#include <cstring>

namespace cmlr::wire {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (static_cast<std::uint16_t>(b[off + 1]) << 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[off + i]) << (8 * i);
  return v;
}

double get_f64(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[off + i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

const char* kind_name(Kind kind) {
  switch (kind) {
    case Kind::share_x: return "SHARE_X";
    case Kind::share_z: return "SHARE_Z";
    case Kind::bstar: return "BSTAR";
    case Kind::pseudo: return "PSEUDO";
    case Kind::beta_star: return "BETA_STAR";
    case Kind::decrypt_step: return "DECRYPT_STEP";
    case Kind::verify_req: return "VERIFY_REQ";
    case Kind::verify_data: return "VERIFY_DATA";
  }
  return "UNKNOWN";
}

std::vector<std::uint8_t> encode_matrix(const Matrix& m) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 8 * m.size());
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) put_f64(out, v);
  return out;
}

Matrix decode_matrix(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw DataError("decode_matrix: truncated header");
  const std::uint32_t rows = get_u32(bytes, 0);
  const std::uint32_t cols = get_u32(bytes, 4);
  const std::size_t need = 8 + 8ull * rows * cols;
  if (bytes.size() != need) throw DataError("decode_matrix: payload size mismatch");
  std::vector<double> data(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = get_f64(bytes, 8 + 8 * i);
  return Matrix(rows, cols, std::move(data));
}

std::vector<std::uint8_t> encode_message(const Message& msg) {
  std::vector<std::uint8_t> out;
  const std::size_t body = 1 + 2 + 2 + msg.payload.size();
  out.reserve(4 + body);
  put_u32(out, static_cast<std::uint32_t>(body));
  out.push_back(static_cast<std::uint8_t>(msg.kind));
  put_u16(out, msg.from);
  put_u16(out, msg.to);
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  return out;
}

Message decode_message(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
  if (bytes.size() < 4) throw DataError("decode_message: truncated length");
  const std::uint32_t body = get_u32(bytes, 0);
  if (body < 5 || bytes.size() < 4ull + body) throw DataError("decode_message: truncated record");
  Message msg;
  msg.kind = static_cast<Kind>(bytes[4]);
  msg.from = get_u16(bytes, 5);
  msg.to = get_u16(bytes, 7);
  msg.payload.assign(bytes.begin() + 9, bytes.begin() + 4 + body);
  if (consumed) *consumed = 4ull + body;
  return msg;
}

std::vector<std::uint8_t> encode_stream(std::span<const Message> messages) {
  std::vector<std::uint8_t> out;
  for (const Message& msg : messages) {
    const auto rec = encode_message(msg);
    out.insert(out.end(), rec.begin(), rec.end());
  }
  return out;
}

std::vector<Message> decode_stream(std::span<const std::uint8_t> bytes) {
  std::vector<Message> out;
  std::size_t off = 0;
  while (off < bytes.size()) {
    std::size_t used = 0;
    out.push_back(decode_message(bytes.subspan(off), &used));
    off += used;
  }
  return out;
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    hash ^= b;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

}  // namespace cmlr::wire
