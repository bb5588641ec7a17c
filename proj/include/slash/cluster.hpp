#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "slash/bytes.hpp"
#include "slash/sketch.hpp"

namespace slash {

enum class FrameType : std::uint32_t {
  kAllgather = 1,
  kReduce = 2,
  kHandshake = 3,
};

/// Every collective message carries the batch and round it belongs to so a
/// receiver can detect ranks that fell out of step.
struct Frame {
  FrameType type = FrameType::kAllgather;
  std::uint64_t batch_id = 0;
  std::uint32_t round = 0;
  Bytes payload;
};

inline constexpr std::uint32_t kFrameMagic = 0x534c4153;  // "SLAS"
inline constexpr std::size_t kFrameHeaderBytes = 4 + 4 + 8 + 4 + 8;

/// [u32 magic, u32 frame_type, u64 batch_id, u32 round, u64 payload_len, payload]
Bytes encode_frame(const Frame& frame);
/// Parses the fixed header; returns the payload length that follows.
std::uint64_t decode_frame_header(std::span<const std::byte> header, Frame& frame);

/// Point-to-point channel between the ranks of one deployment. Messages from a
/// fixed sender to a fixed receiver arrive in send order. Handles are not
/// shared across concurrent collectives.
class Transport {
 public:
  virtual ~Transport() = default;

  virtual int rank() const = 0;
  virtual int world_size() const = 0;

  virtual void send(int dest, const Frame& frame) = 0;
  /// Blocks until a frame from `src` arrives; throws TransportError naming
  /// `src` on timeout or peer failure.
  virtual Frame recv(int src) = 0;
};

// ---------------------------------------------------------------------------
// Simulated backend: ranks are threads of one process sharing in-memory queues.

class SimulatedHub {
 public:
  explicit SimulatedHub(int world_size, std::chrono::milliseconds timeout = std::chrono::seconds(60));

  int world_size() const noexcept { return world_size_; }

  void push(int src, int dst, Frame frame);
  Frame pop(int src, int dst);

  /// Wake every blocked receiver with a TransportError blaming `failed_rank`.
  void abort(int failed_rank, const std::string& reason);

 private:
  struct Channel {
    std::deque<Frame> queue;
  };

  int world_size_;
  std::chrono::milliseconds timeout_;
  std::mutex mutex_;
  std::condition_variable ready_;
  std::vector<Channel> channels_;  // src * world + dst
  bool aborted_ = false;
  int failed_rank_ = -1;
  std::string abort_reason_;
};

class SimulatedTransport final : public Transport {
 public:
  SimulatedTransport(std::shared_ptr<SimulatedHub> hub, int rank);

  int rank() const override { return rank_; }
  int world_size() const override { return hub_->world_size(); }
  void send(int dest, const Frame& frame) override;
  Frame recv(int src) override;

 private:
  std::shared_ptr<SimulatedHub> hub_;
  int rank_;
};

/// Run `body` once per rank on its own thread against a fresh simulated hub.
/// If any rank throws, the hub is aborted and the first failure is rethrown
/// after all threads finish.
void run_simulated(int world_size, const std::function<void(Transport&)>& body,
                   std::chrono::milliseconds timeout = std::chrono::seconds(60));

// ---------------------------------------------------------------------------
// Collectives. All ranks call them in the same order.

/// Every rank receives the payloads of all ranks, indexed by rank.
std::vector<Bytes> allgather(Transport& transport, std::uint64_t batch_id, const Bytes& local);

/// Rank-ordered concatenation of allgather's output.
Bytes concat(const std::vector<Bytes>& parts);

struct ReductionRound {
  struct Pair {
    int receiver;
    int sender;
  };
  std::vector<Pair> pairs;
};

/// Pairwise tree schedule over m ranks. Each round the active ranks, sorted
/// ascending, pair up as (a, b); b sends to a and drops out. With an odd
/// count the last active rank idles that round. Rank 0 survives.
struct ReductionSchedule {
  std::vector<ReductionRound> rounds;

  static ReductionSchedule tree(int world_size);
  /// Single "round" per sender: rank 0 receives from 1..m-1 in order.
  static ReductionSchedule linear(int world_size);

  friend bool operator==(const ReductionSchedule&, const ReductionSchedule&) = default;
};

inline bool operator==(const ReductionRound::Pair& a, const ReductionRound::Pair& b) {
  return a.receiver == b.receiver && a.sender == b.sender;
}
inline bool operator==(const ReductionRound& a, const ReductionRound& b) { return a.pairs == b.pairs; }

struct ReduceStats {
  std::size_t merge_rounds = 0;  // messages received and merged by this rank
  std::size_t sends = 0;
  std::size_t bytes_sent = 0;
  std::size_t item_merges = 0;  // individual sketch/map merges
};

/// Drive `schedule` on this rank. `encode` serializes the local state;
/// `absorb` merges one received payload into it (local first, received second).
void reduce_with_schedule(Transport& transport, const ReductionSchedule& schedule, std::uint64_t batch_id,
                          const std::function<Bytes()>& encode,
                          const std::function<void(std::span<const std::byte>)>& absorb, ReduceStats* stats);

Bytes encode_sketches(std::span<const TopkapiSketch> sketches);
std::vector<TopkapiSketch> decode_sketches(std::span<const std::byte> bytes, const RowSeeds& shared_seeds = nullptr);

/// Tree reduction of per-query sketches. On return rank 0's `sketches` hold
/// the merge over all ranks; other ranks' contents are unspecified.
void tree_reduce_sketches(Transport& transport, std::uint64_t batch_id, std::vector<TopkapiSketch>& sketches,
                          ReduceStats* stats = nullptr);

/// Baseline: rank 0 receives from ranks 1..m-1 in order and merges serially.
void linear_reduce_sketches(Transport& transport, std::uint64_t batch_id, std::vector<TopkapiSketch>& sketches,
                            ReduceStats* stats = nullptr);

/// Tree reduction of exact per-query frequency maps (counts add).
void tree_reduce_frequencies(Transport& transport, std::uint64_t batch_id, std::vector<FrequencyMap>& maps,
                             ReduceStats* stats = nullptr);

// ---------------------------------------------------------------------------
// TCP backend.

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;

  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

/// Full mesh of TCP connections, one per peer. Each connection has a reader
/// thread that drains frames into a per-peer queue, so sends never wait on
/// the peer's receive order.
class TcpTransport final : public Transport {
 public:
  TcpTransport(int rank, std::vector<Endpoint> members,
               std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~TcpTransport() override;

  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  int rank() const override { return rank_; }
  int world_size() const override { return static_cast<int>(members_.size()); }
  void send(int dest, const Frame& frame) override;
  Frame recv(int src) override;

 private:
  struct Peer;

  void connect_mesh();
  void reader_loop(int src);

  int rank_;
  std::vector<Endpoint> members_;
  std::chrono::milliseconds timeout_;
  std::vector<std::unique_ptr<Peer>> peers_;
};

/// Ask the kernel for `count` currently free loopback ports.
std::vector<std::uint16_t> free_local_ports(std::size_t count);

}  // namespace slash
