#pragma once

// Point-to-point channels between the analysis computer and the data
// computers. A slot (round, study, fold) holds exactly one frame; writing
// a slot twice or reading an empty slot is a protocol error. Transports
// carry serialized frames only, so nothing but payload types can cross.

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "dsilt/wire.hpp"

namespace dsilt {

struct Slot {
  Round round = Round::kProbe;
  int study = 0;
  int fold = 0;

  friend bool operator<(const Slot& a, const Slot& b) {
    return std::tie(a.round, a.study, a.fold) < std::tie(b.round, b.study, b.fold);
  }
};

// Relative path of a slot under a file-transport root, e.g.
// "round1/dc0_k1.bin". Studies and folds are numbered from 0.
std::string slot_path(const Slot& slot);

class Transport {
 public:
  virtual ~Transport() = default;
  virtual void put(const Slot& slot, const Bytes& frame) = 0;
  virtual Bytes take(const Slot& slot) = 0;
  virtual const char* name() const = 0;

  // Frame send and receive with envelope checks. Decode failures become
  // ProtocolError naming the slot's study and fold.
  void send(const Slot& slot, const MessageEnvelope& msg);
  MessageEnvelope receive(const Slot& slot);
};

class MemoryTransport : public Transport {
 public:
  void put(const Slot& slot, const Bytes& frame) override;
  Bytes take(const Slot& slot) override;
  const char* name() const override { return "memory"; }

  // Everything written so far, keyed by slot.
  std::map<Slot, Bytes> frames() const;

 private:
  mutable std::mutex mu_;
  std::map<Slot, Bytes> slots_;
};

// Each slot is a file under `root`. Writes go to a temporary name and are
// renamed into place, so a reader never sees a partial frame.
class FileTransport : public Transport {
 public:
  explicit FileTransport(std::filesystem::path root);
  void put(const Slot& slot, const Bytes& frame) override;
  Bytes take(const Slot& slot) override;
  const char* name() const override { return "files"; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

// Test double: flips one byte of the frame written to `target`.
class FaultInjectingTransport : public Transport {
 public:
  FaultInjectingTransport(Transport& inner, Slot target, std::size_t byte_offset,
                          std::uint8_t xor_mask = 0x01);
  void put(const Slot& slot, const Bytes& frame) override;
  Bytes take(const Slot& slot) override { return inner_.take(slot); }
  const char* name() const override { return inner_.name(); }

 private:
  Transport& inner_;
  Slot target_;
  std::size_t offset_;
  std::uint8_t mask_;
};

}  // namespace dsilt
