#include "dsilt/transport.hpp"

#include <fstream>
#include <iterator>

#include "dsilt/errors.hpp"

namespace dsilt {

namespace fs = std::filesystem;

std::string slot_path(const Slot& slot) {
  const std::string tail = "dc" + std::to_string(slot.study) + "_k" + std::to_string(slot.fold) + ".bin";
  switch (slot.round) {
    case Round::kProbe: return "probe/" + tail;
    case Round::kR1: return "round1/" + tail;
    case Round::kBroadcast: return "broadcast/" + tail;
    case Round::kR2: return "round2/" + tail;
    case Round::kOneShot: return "oneshot/" + tail;
  }
  return tail;
}

void Transport::send(const Slot& slot, const MessageEnvelope& msg) {
  if (msg.round != slot.round)
    throw ProtocolError(std::string("message for round ") + to_string(msg.round) +
                            " sent on a " + to_string(slot.round) + " slot",
                        slot.study, slot.fold);
  put(slot, serialize(msg));
}

MessageEnvelope Transport::receive(const Slot& slot) {
  const Bytes frame = take(slot);
  try {
    MessageEnvelope msg = deserialize(frame);
    if (msg.round != slot.round)
      throw FrameError(std::string("frame for round ") + to_string(msg.round) + " in a " +
                       to_string(slot.round) + " slot");
    return msg;
  } catch (const FrameError& e) {
    throw ProtocolError(std::string(to_string(slot.round)) + " frame rejected: " + e.what(),
                        slot.study, slot.fold);
  }
}

void MemoryTransport::put(const Slot& slot, const Bytes& frame) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!slots_.emplace(slot, frame).second)
    throw ProtocolError("slot " + slot_path(slot) + " written twice", slot.study, slot.fold);
}

Bytes MemoryTransport::take(const Slot& slot) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = slots_.find(slot);
  if (it == slots_.end())
    throw ProtocolError("slot " + slot_path(slot) + " is empty", slot.study, slot.fold);
  return it->second;
}

std::map<Slot, Bytes> MemoryTransport::frames() const {
  std::lock_guard<std::mutex> lock(mu_);
  return slots_;
}

FileTransport::FileTransport(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw ConfigError("cannot create transport directory " + root_.string());
}

void FileTransport::put(const Slot& slot, const Bytes& frame) {
  const fs::path target = root_ / slot_path(slot);
  std::error_code ec;
  fs::create_directories(target.parent_path(), ec);
  if (ec) throw ProtocolError("cannot create " + target.parent_path().string(), slot.study, slot.fold);
  if (fs::exists(target))
    throw ProtocolError("slot " + slot_path(slot) + " written twice", slot.study, slot.fold);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(frame.data()), static_cast<std::streamsize>(frame.size()));
    if (!out) throw ProtocolError("cannot write " + tmp.string(), slot.study, slot.fold);
  }
  fs::rename(tmp, target, ec);
  if (ec) throw ProtocolError("cannot publish " + target.string(), slot.study, slot.fold);
}

Bytes FileTransport::take(const Slot& slot) {
  const fs::path target = root_ / slot_path(slot);
  std::ifstream in(target, std::ios::binary);
  if (!in) throw ProtocolError("slot " + slot_path(slot) + " is empty", slot.study, slot.fold);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

FaultInjectingTransport::FaultInjectingTransport(Transport& inner, Slot target,
                                                 std::size_t byte_offset, std::uint8_t xor_mask)
    : inner_(inner), target_(target), offset_(byte_offset), mask_(xor_mask) {}

void FaultInjectingTransport::put(const Slot& slot, const Bytes& frame) {
  if (slot.round == target_.round && slot.study == target_.study && slot.fold == target_.fold &&
      offset_ < frame.size()) {
    Bytes damaged = frame;
    damaged[offset_] ^= mask_;
    inner_.put(slot, damaged);
    return;
  }
  inner_.put(slot, frame);
}

}  // namespace dsilt
