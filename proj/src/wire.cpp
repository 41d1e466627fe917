#include "dsilt/wire.hpp"

#include <bit>
#include <cstring>
#include <string>

#include <nlohmann/json.hpp>

#include "dsilt/errors.hpp"

namespace dsilt {

namespace {

using nlohmann::json;

constexpr std::uint8_t kMagic[4] = {'D', 'S', 'L', 'T'};

struct Block {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;  // 1 for vectors
};

void put_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
  return v;
}

void put_vector(Bytes& out, const VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(v[i]));
}

void put_matrix(Bytes& out, const MatrixXd& A) {
  for (Eigen::Index r = 0; r < A.rows(); ++r)
    for (Eigen::Index c = 0; c < A.cols(); ++c)
      put_u64(out, std::bit_cast<std::uint64_t>(A(r, c)));
}

// Sequential reader over a payload whose length has already been checked.
class PayloadReader {
 public:
  explicit PayloadReader(std::span<const std::uint8_t> data) : data_(data) {}

  double next() {
    if (pos_ + 8 > data_.size()) throw FrameError("payload shorter than header blocks");
    const double v = std::bit_cast<double>(get_le(data_, pos_, 8));
    pos_ += 8;
    return v;
  }
  VectorXd vector(Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = next();
    return v;
  }
  MatrixXd matrix(Eigen::Index rows, Eigen::Index cols) {
    MatrixXd A(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) A(r, c) = next();
    return A;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

json block_json(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  return json{{"name", name}, {"rows", rows}, {"cols", cols}};
}

// Header fields and payload bytes for each payload kind.
struct Encoded {
  json header;
  Bytes payload;
};

Encoded encode(const Payload& payload) {
  Encoded e;
  e.header["blocks"] = json::array();
  auto& blocks = e.header["blocks"];
  std::visit(
      [&](const auto& msg) {
        using T = std::decay_t<decltype(msg)>;
        if constexpr (std::is_same_v<T, Round1Summary>) {
          e.header["study_id"] = msg.study_id;
          e.header["fold_id"] = msg.fold_id;
          e.header["n_used"] = msg.n_used;
          blocks.push_back(block_json("xi_hat", msg.xi_hat.size(), 1));
          blocks.push_back(block_json("H_hat", msg.H_hat.rows(), msg.H_hat.cols()));
          put_vector(e.payload, msg.xi_hat);
          put_matrix(e.payload, msg.H_hat);
        } else if constexpr (std::is_same_v<T, Round2Summary>) {
          e.header["study_id"] = msg.study_id;
          e.header["fold_id"] = msg.fold_id;
          e.header["n_used"] = msg.n_used;
          blocks.push_back(block_json("xi_tilde", msg.xi_tilde.size(), 1));
          blocks.push_back(block_json("H_tilde", msg.H_tilde.rows(), msg.H_tilde.cols()));
          blocks.push_back(block_json("J_tilde", msg.J_tilde.rows(), msg.J_tilde.cols()));
          put_vector(e.payload, msg.xi_tilde);
          put_matrix(e.payload, msg.H_tilde);
          put_matrix(e.payload, msg.J_tilde);
        } else if constexpr (std::is_same_v<T, BroadcastCoefficients>) {
          e.header["fold_id"] = msg.fold_id;
          for (std::size_t m = 0; m < msg.beta_blocks.size(); ++m) {
            blocks.push_back(block_json("beta_" + std::to_string(m), msg.beta_blocks[m].size(), 1));
            put_vector(e.payload, msg.beta_blocks[m]);
          }
        } else if constexpr (std::is_same_v<T, OneShotSummary>) {
          e.header["study_id"] = msg.study_id;
          e.header["n_used"] = msg.n_used;
          blocks.push_back(block_json("beta_breve", msg.beta_breve.size(), 1));
          blocks.push_back(block_json("sigma_sq", msg.sigma_sq.size(), 1));
          put_vector(e.payload, msg.beta_breve);
          put_vector(e.payload, msg.sigma_sq);
        }
      },
      payload);
  return e;
}

template <typename T>
T field(const json& header, const char* key) {
  if (!header.contains(key)) throw FrameError(std::string("header lacks field '") + key + "'");
  try {
    return header.at(key).get<T>();
  } catch (const json::exception&) {
    throw FrameError(std::string("header field '") + key + "' has the wrong type");
  }
}

std::vector<Block> read_blocks(const json& header) {
  if (!header.contains("blocks") || !header["blocks"].is_array())
    throw FrameError("header lacks a block list");
  std::vector<Block> blocks;
  for (const json& b : header["blocks"]) {
    Block blk{field<std::string>(b, "name"), field<Eigen::Index>(b, "rows"),
              field<Eigen::Index>(b, "cols")};
    if (blk.rows < 0 || blk.cols < 0) throw FrameError("negative block dimension");
    blocks.push_back(std::move(blk));
  }
  return blocks;
}

void expect_blocks(const std::vector<Block>& blocks, std::initializer_list<const char*> names) {
  if (blocks.size() != names.size()) throw FrameError("unexpected number of payload blocks");
  std::size_t i = 0;
  for (const char* name : names) {
    if (blocks[i].name != name) throw FrameError("unexpected payload block " + blocks[i].name);
    ++i;
  }
}

Payload decode(Round round, const json& header, std::span<const std::uint8_t> payload) {
  const std::vector<Block> blocks = read_blocks(header);
  std::uint64_t expected = 0;
  for (const Block& b : blocks) {
    // Guard the product against overflow before trusting it.
    if (b.rows > (1 << 24) || b.cols > (1 << 24)) throw FrameError("block dimension too large");
    expected += static_cast<std::uint64_t>(b.rows) * static_cast<std::uint64_t>(b.cols) * 8;
  }
  if (expected != payload.size()) throw FrameError("payload length disagrees with header blocks");

  PayloadReader in(payload);
  switch (round) {
    case Round::kProbe:
      expect_blocks(blocks, {});
      return Probe{};
    case Round::kR1: {
      expect_blocks(blocks, {"xi_hat", "H_hat"});
      Round1Summary s;
      s.study_id = field<int>(header, "study_id");
      s.fold_id = field<int>(header, "fold_id");
      s.n_used = field<std::int64_t>(header, "n_used");
      s.xi_hat = in.vector(blocks[0].rows);
      s.H_hat = in.matrix(blocks[1].rows, blocks[1].cols);
      return s;
    }
    case Round::kR2: {
      expect_blocks(blocks, {"xi_tilde", "H_tilde", "J_tilde"});
      Round2Summary s;
      s.study_id = field<int>(header, "study_id");
      s.fold_id = field<int>(header, "fold_id");
      s.n_used = field<std::int64_t>(header, "n_used");
      s.xi_tilde = in.vector(blocks[0].rows);
      s.H_tilde = in.matrix(blocks[1].rows, blocks[1].cols);
      s.J_tilde = in.matrix(blocks[2].rows, blocks[2].cols);
      return s;
    }
    case Round::kBroadcast: {
      BroadcastCoefficients b;
      b.fold_id = field<int>(header, "fold_id");
      for (std::size_t m = 0; m < blocks.size(); ++m) {
        if (blocks[m].name != "beta_" + std::to_string(m) || blocks[m].cols != 1)
          throw FrameError("unexpected payload block " + blocks[m].name);
        b.beta_blocks.push_back(in.vector(blocks[m].rows));
      }
      return b;
    }
    case Round::kOneShot: {
      expect_blocks(blocks, {"beta_breve", "sigma_sq"});
      OneShotSummary s;
      s.study_id = field<int>(header, "study_id");
      s.n_used = field<std::int64_t>(header, "n_used");
      s.beta_breve = in.vector(blocks[0].rows);
      s.sigma_sq = in.vector(blocks[1].rows);
      return s;
    }
  }
  throw FrameError("unknown round");
}

Round round_of(const Payload& p) {
  switch (p.index()) {
    case 0: return Round::kProbe;
    case 1: return Round::kR1;
    case 2: return Round::kBroadcast;
    case 3: return Round::kR2;
    default: return Round::kOneShot;
  }
}

bool same_bits(const VectorXd& a, const VectorXd& b) {
  return a.size() == b.size() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

bool same_bits(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

}  // namespace

const char* to_string(Round r) {
  switch (r) {
    case Round::kProbe: return "PROBE";
    case Round::kR1: return "R1";
    case Round::kBroadcast: return "BROADCAST";
    case Round::kR2: return "R2";
    case Round::kOneShot: return "ONESHOT";
  }
  return "?";
}

Round round_from_string(const char* name) {
  const std::string s(name);
  for (Round r : {Round::kProbe, Round::kR1, Round::kBroadcast, Round::kR2, Round::kOneShot})
    if (s == to_string(r)) return r;
  throw FrameError("unknown round '" + s + "'");
}

bool bitwise_equal(const MessageEnvelope& a, const MessageEnvelope& b) {
  if (a.protocol_version != b.protocol_version || a.round != b.round ||
      a.payload.index() != b.payload.index())
    return false;
  return std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        const T& y = std::get<T>(b.payload);
        if constexpr (std::is_same_v<T, Probe>) {
          return true;
        } else if constexpr (std::is_same_v<T, Round1Summary>) {
          return x.study_id == y.study_id && x.fold_id == y.fold_id && x.n_used == y.n_used &&
                 same_bits(x.xi_hat, y.xi_hat) && same_bits(x.H_hat, y.H_hat);
        } else if constexpr (std::is_same_v<T, Round2Summary>) {
          return x.study_id == y.study_id && x.fold_id == y.fold_id && x.n_used == y.n_used &&
                 same_bits(x.xi_tilde, y.xi_tilde) && same_bits(x.H_tilde, y.H_tilde) &&
                 same_bits(x.J_tilde, y.J_tilde);
        } else if constexpr (std::is_same_v<T, BroadcastCoefficients>) {
          if (x.fold_id != y.fold_id || x.beta_blocks.size() != y.beta_blocks.size()) return false;
          for (std::size_t m = 0; m < x.beta_blocks.size(); ++m)
            if (!same_bits(x.beta_blocks[m], y.beta_blocks[m])) return false;
          return true;
        } else {
          return x.study_id == y.study_id && x.n_used == y.n_used &&
                 same_bits(x.beta_breve, y.beta_breve) && same_bits(x.sigma_sq, y.sigma_sq);
        }
      },
      a.payload);
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> data, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::uint8_t byte : data) {
    h ^= byte;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Bytes serialize(const MessageEnvelope& msg) {
  if (round_of(msg.payload) != msg.round)
    throw InputError(std::string("serialize: payload does not belong to round ") +
                     to_string(msg.round));
  Encoded e = encode(msg.payload);
  e.header["version"] = msg.protocol_version;
  e.header["round"] = to_string(msg.round);
  const std::string header = e.header.dump();

  Bytes out(kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  put_u64(out, e.payload.size());
  out.insert(out.end(), e.payload.begin(), e.payload.end());

  const auto* hbytes = reinterpret_cast<const std::uint8_t*>(header.data());
  std::uint64_t h = fnv1a64({hbytes, header.size()});
  h = fnv1a64(e.payload, h);
  put_u64(out, h);
  return out;
}

MessageEnvelope deserialize(std::span<const std::uint8_t> frame) {
  if (frame.size() < 8) throw TruncatedFrameError("frame shorter than its fixed prefix");
  if (std::memcmp(frame.data(), kMagic, 4) != 0) throw FrameError("bad frame magic");
  const std::uint64_t header_len = get_le(frame, 4, 4);
  // magic + u32 + header + u64 + payload + u64
  if (header_len > frame.size() - 8 || frame.size() - 8 - header_len < 16)
    throw TruncatedFrameError("frame ends inside the header");
  const std::size_t payload_len_at = 8 + header_len;
  const std::uint64_t payload_len = get_le(frame, payload_len_at, 8);
  const std::size_t rest = frame.size() - payload_len_at - 8;
  if (payload_len > rest - 8) throw TruncatedFrameError("frame ends inside the payload");
  if (payload_len != rest - 8) throw FrameError("trailing bytes after the checksum");

  const auto header = frame.subspan(8, header_len);
  const auto payload = frame.subspan(payload_len_at + 8, payload_len);
  const std::uint64_t stored = get_le(frame, payload_len_at + 8 + payload_len, 8);
  if (fnv1a64(payload, fnv1a64(header)) != stored) throw ChecksumError("frame checksum mismatch");

  json h;
  try {
    h = json::parse(header.begin(), header.end());
  } catch (const json::exception&) {
    throw FrameError("frame header is not valid JSON");
  }
  if (!h.is_object()) throw FrameError("frame header is not a JSON object");
  const int version = field<int>(h, "version");
  if (version != kProtocolVersion)
    throw VersionError("frame version " + std::to_string(version) + " != supported " +
                       std::to_string(kProtocolVersion));
  MessageEnvelope msg;
  msg.protocol_version = version;
  msg.round = round_from_string(field<std::string>(h, "round").c_str());
  msg.payload = decode(msg.round, h, payload);
  return msg;
}

}  // namespace dsilt
