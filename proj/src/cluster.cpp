#include "slash/cluster.hpp"

#include <algorithm>
#include <exception>
#include <thread>

namespace slash {

Bytes encode_frame(const Frame& frame) {
  Bytes out;
  out.reserve(kFrameHeaderBytes + frame.payload.size());
  ByteWriter w(out);
  w.put_u32(kFrameMagic);
  w.put_u32(static_cast<std::uint32_t>(frame.type));
  w.put_u64(frame.batch_id);
  w.put_u32(frame.round);
  w.put_u64(frame.payload.size());
  w.put_bytes(frame.payload);
  return out;
}

std::uint64_t decode_frame_header(std::span<const std::byte> header, Frame& frame) {
  ByteReader r(header);
  if (r.get_u32() != kFrameMagic) throw FormatError("bad frame magic");
  frame.type = static_cast<FrameType>(r.get_u32());
  frame.batch_id = r.get_u64();
  frame.round = r.get_u32();
  return r.get_u64();
}

// ---------------------------------------------------------------------------

SimulatedHub::SimulatedHub(int world_size, std::chrono::milliseconds timeout)
    : world_size_(world_size), timeout_(timeout), channels_(static_cast<std::size_t>(world_size) * world_size) {
  if (world_size < 1) throw ConfigError("world size must be >= 1");
}

void SimulatedHub::push(int src, int dst, Frame frame) {
  {
    std::lock_guard lock(mutex_);
    if (aborted_) throw TransportError("cluster aborted: " + abort_reason_, failed_rank_);
    channels_[static_cast<std::size_t>(src) * world_size_ + dst].queue.push_back(std::move(frame));
  }
  ready_.notify_all();
}

Frame SimulatedHub::pop(int src, int dst) {
  std::unique_lock lock(mutex_);
  auto& q = channels_[static_cast<std::size_t>(src) * world_size_ + dst].queue;
  const bool ok = ready_.wait_for(lock, timeout_, [&] { return aborted_ || !q.empty(); });
  if (!q.empty()) {
    Frame f = std::move(q.front());
    q.pop_front();
    return f;
  }
  if (aborted_) throw TransportError("cluster aborted: " + abort_reason_, failed_rank_);
  (void)ok;
  throw TransportError("rank " + std::to_string(dst) + " timed out waiting for rank " + std::to_string(src), src);
}

void SimulatedHub::abort(int failed_rank, const std::string& reason) {
  {
    std::lock_guard lock(mutex_);
    if (aborted_) return;
    aborted_ = true;
    failed_rank_ = failed_rank;
    abort_reason_ = "rank " + std::to_string(failed_rank) + " failed: " + reason;
  }
  ready_.notify_all();
}

SimulatedTransport::SimulatedTransport(std::shared_ptr<SimulatedHub> hub, int rank)
    : hub_(std::move(hub)), rank_(rank) {
  if (rank_ < 0 || rank_ >= hub_->world_size()) throw ConfigError("rank out of range");
}

void SimulatedTransport::send(int dest, const Frame& frame) {
  if (dest < 0 || dest >= world_size()) throw TransportError("send to invalid rank", dest);
  hub_->push(rank_, dest, frame);
}

Frame SimulatedTransport::recv(int src) {
  if (src < 0 || src >= world_size()) throw TransportError("receive from invalid rank", src);
  return hub_->pop(src, rank_);
}

void run_simulated(int world_size, const std::function<void(Transport&)>& body, std::chrono::milliseconds timeout) {
  auto hub = std::make_shared<SimulatedHub>(world_size, timeout);
  std::vector<std::exception_ptr> failures(world_size);
  {
    std::vector<std::jthread> threads;
    threads.reserve(world_size);
    for (int r = 0; r < world_size; ++r) {
      threads.emplace_back([&, r] {
        try {
          SimulatedTransport transport(hub, r);
          body(transport);
        } catch (const std::exception& e) {
          failures[r] = std::current_exception();
          hub->abort(r, e.what());
        } catch (...) {
          failures[r] = std::current_exception();
          hub->abort(r, "unknown error");
        }
      });
    }
  }
  // Prefer the root cause over secondary "cluster aborted" errors.
  for (const auto& f : failures) {
    if (!f) continue;
    try {
      std::rethrow_exception(f);
    } catch (const TransportError& e) {
      if (std::string(e.what()).rfind("cluster aborted", 0) == 0) continue;
      throw;
    }
  }
  for (const auto& f : failures) {
    if (f) std::rethrow_exception(f);
  }
}

// ---------------------------------------------------------------------------

namespace {

void expect_frame(const Frame& f, FrameType type, std::uint64_t batch_id, std::uint32_t round, int src) {
  if (f.type != type || f.batch_id != batch_id || f.round != round) {
    throw TransportError("schedule desynchronized: from rank " + std::to_string(src) + " expected (type " +
                             std::to_string(static_cast<std::uint32_t>(type)) + ", batch " +
                             std::to_string(batch_id) + ", round " + std::to_string(round) + ") got (type " +
                             std::to_string(static_cast<std::uint32_t>(f.type)) + ", batch " +
                             std::to_string(f.batch_id) + ", round " + std::to_string(f.round) + ")",
                         src);
  }
}

}  // namespace

std::vector<Bytes> allgather(Transport& transport, std::uint64_t batch_id, const Bytes& local) {
  const int m = transport.world_size();
  const int me = transport.rank();
  Frame out{FrameType::kAllgather, batch_id, 0, local};
  for (int r = 0; r < m; ++r) {
    if (r != me) transport.send(r, out);
  }
  std::vector<Bytes> parts(m);
  for (int r = 0; r < m; ++r) {
    if (r == me) {
      parts[r] = local;
      continue;
    }
    Frame f = transport.recv(r);
    expect_frame(f, FrameType::kAllgather, batch_id, 0, r);
    parts[r] = std::move(f.payload);
  }
  return parts;
}

Bytes concat(const std::vector<Bytes>& parts) {
  Bytes out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

ReductionSchedule ReductionSchedule::tree(int world_size) {
  if (world_size < 1) throw ConfigError("world size must be >= 1");
  ReductionSchedule s;
  std::vector<int> active(world_size);
  for (int r = 0; r < world_size; ++r) active[r] = r;
  while (active.size() > 1) {
    ReductionRound round;
    std::vector<int> next;
    for (std::size_t i = 0; i < active.size(); i += 2) {
      next.push_back(active[i]);
      if (i + 1 < active.size()) round.pairs.push_back({active[i], active[i + 1]});
    }
    s.rounds.push_back(std::move(round));
    active = std::move(next);
  }
  return s;
}

ReductionSchedule ReductionSchedule::linear(int world_size) {
  if (world_size < 1) throw ConfigError("world size must be >= 1");
  ReductionSchedule s;
  for (int r = 1; r < world_size; ++r) s.rounds.push_back(ReductionRound{{{0, r}}});
  return s;
}

void reduce_with_schedule(Transport& transport, const ReductionSchedule& schedule, std::uint64_t batch_id,
                          const std::function<Bytes()>& encode,
                          const std::function<void(std::span<const std::byte>)>& absorb, ReduceStats* stats) {
  const int me = transport.rank();
  ReduceStats local;
  for (std::uint32_t round = 0; round < schedule.rounds.size(); ++round) {
    for (const auto& pair : schedule.rounds[round].pairs) {
      if (pair.sender == me) {
        Frame f{FrameType::kReduce, batch_id, round, encode()};
        local.bytes_sent += f.payload.size();
        ++local.sends;
        transport.send(pair.receiver, f);
        if (stats) *stats = local;
        return;  // inactive from here on
      }
      if (pair.receiver == me) {
        Frame f = transport.recv(pair.sender);
        expect_frame(f, FrameType::kReduce, batch_id, round, pair.sender);
        absorb(f.payload);
        ++local.merge_rounds;
      }
    }
  }
  if (stats) *stats = local;
}

Bytes encode_sketches(std::span<const TopkapiSketch> sketches) {
  Bytes out;
  ByteWriter w(out);
  w.put_u64(sketches.size());
  for (const auto& s : sketches) s.serialize(w);
  return out;
}

std::vector<TopkapiSketch> decode_sketches(std::span<const std::byte> bytes, const RowSeeds& shared_seeds) {
  ByteReader r(bytes);
  const std::uint64_t n = r.get_u64();
  std::vector<TopkapiSketch> out;
  out.reserve(std::min<std::uint64_t>(n, r.remaining() / 24));
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(TopkapiSketch::deserialize(r, shared_seeds));
  if (!r.at_end()) throw FormatError("trailing bytes after sketch batch");
  return out;
}

namespace {

void reduce_sketches(Transport& transport, const ReductionSchedule& schedule, std::uint64_t batch_id,
                     std::vector<TopkapiSketch>& sketches, ReduceStats* stats) {
  std::size_t item_merges = 0;
  const RowSeeds shared = sketches.empty() ? nullptr : sketches.front().row_seeds();
  reduce_with_schedule(
      transport, schedule, batch_id, [&] { return encode_sketches(sketches); },
      [&](std::span<const std::byte> payload) {
        auto incoming = decode_sketches(payload, shared);
        if (incoming.size() != sketches.size()) {
          throw ShapeMismatch("peer sent " + std::to_string(incoming.size()) + " sketches, expected " +
                              std::to_string(sketches.size()));
        }
        for (std::size_t q = 0; q < sketches.size(); ++q) {
          sketches[q].merge(incoming[q]);
          ++item_merges;
        }
      },
      stats);
  if (stats) stats->item_merges = item_merges;
}

}  // namespace

void tree_reduce_sketches(Transport& transport, std::uint64_t batch_id, std::vector<TopkapiSketch>& sketches,
                          ReduceStats* stats) {
  reduce_sketches(transport, ReductionSchedule::tree(transport.world_size()), batch_id, sketches, stats);
}

void linear_reduce_sketches(Transport& transport, std::uint64_t batch_id, std::vector<TopkapiSketch>& sketches,
                            ReduceStats* stats) {
  reduce_sketches(transport, ReductionSchedule::linear(transport.world_size()), batch_id, sketches, stats);
}

void tree_reduce_frequencies(Transport& transport, std::uint64_t batch_id, std::vector<FrequencyMap>& maps,
                             ReduceStats* stats) {
  std::size_t item_merges = 0;
  reduce_with_schedule(
      transport, ReductionSchedule::tree(transport.world_size()), batch_id,
      [&] {
        Bytes out;
        ByteWriter w(out);
        w.put_u64(maps.size());
        for (const auto& m : maps) serialize_frequencies(m, w);
        return out;
      },
      [&](std::span<const std::byte> payload) {
        ByteReader r(payload);
        const std::uint64_t n = r.get_u64();
        if (n != maps.size()) throw ShapeMismatch("peer sent a different number of frequency maps");
        for (auto& m : maps) {
          merge_frequencies(m, deserialize_frequencies(r));
          ++item_merges;
        }
        if (!r.at_end()) throw FormatError("trailing bytes after frequency maps");
      },
      stats);
  if (stats) stats->item_merges = item_merges;
}

}  // namespace slash
