#pragma once

// The only objects allowed to cross a node boundary. None of them is sized
// by the number of observations: a Round1/Round2 summary is O(p^2) and a
// broadcast is O(Mp) whatever n_m is.

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace dsilt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Cross-fitted moments of D_{-k} at study m.
struct Round1Summary {
  int study_id = 0;
  int fold_id = 0;
  std::int64_t n_used = 0;  // |I_{-k}|
  VectorXd xi_hat;
  MatrixXd H_hat;
};

// Moments of fold I_k evaluated at the broadcast estimate.
struct Round2Summary {
  int study_id = 0;
  int fold_id = 0;
  std::int64_t n_used = 0;  // |I_k|
  VectorXd xi_tilde;
  MatrixXd H_tilde;
  MatrixXd J_tilde;
};

// Integrative estimate for fold k, one block per study.
struct BroadcastCoefficients {
  int fold_id = 0;
  std::vector<VectorXd> beta_blocks;
};

// One-shot upload: debiased estimates and variances, vectors only.
struct OneShotSummary {
  int study_id = 0;
  std::int64_t n_used = 0;
  VectorXd beta_breve;
  VectorXd sigma_sq;
};

// Empty payload used to probe a channel.
struct Probe {};

enum class Round : std::uint8_t { kProbe = 0, kR1 = 1, kBroadcast = 2, kR2 = 3, kOneShot = 4 };

const char* to_string(Round r);
Round round_from_string(const char* name);

using Payload = std::variant<Probe, Round1Summary, BroadcastCoefficients, Round2Summary, OneShotSummary>;

inline constexpr int kProtocolVersion = 1;

struct MessageEnvelope {
  int protocol_version = kProtocolVersion;
  Round round = Round::kProbe;
  Payload payload;
};

// Bit-exact equality of every field, NaN payloads included.
bool bitwise_equal(const MessageEnvelope& a, const MessageEnvelope& b);

}  // namespace dsilt
