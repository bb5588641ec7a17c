#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <thread>

#include "slash/cluster.hpp"

namespace slash {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text() { return std::strerror(errno); }

class Fd {
 public:
  Fd() = default;
  explicit Fd(int fd) : fd_(fd) {}
  ~Fd() { reset(); }
  Fd(Fd&& o) noexcept : fd_(o.release()) {}
  Fd& operator=(Fd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = o.release();
    }
    return *this;
  }
  int get() const { return fd_; }
  int release() { return std::exchange(fd_, -1); }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

void write_all(int fd, const std::byte* data, std::size_t n, int peer) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw TransportError("send to rank " + std::to_string(peer) + " failed: " + errno_text(), peer);
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Returns false on orderly EOF before any byte was read.
bool read_all(int fd, std::byte* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, data + got, n - got, 0);
    if (r == 0) {
      if (got == 0) return false;
      throw FormatError("connection closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw FormatError("recv failed: " + errno_text());
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

Frame read_frame(int fd, bool& eof) {
  std::byte header[kFrameHeaderBytes];
  eof = !read_all(fd, header, sizeof header);
  Frame f;
  if (eof) return f;
  const std::uint64_t len = decode_frame_header(header, f);
  f.payload.resize(len);
  if (len > 0 && !read_all(fd, f.payload.data(), len)) throw FormatError("connection closed mid-frame");
  return f;
}

void send_frame(int fd, const Frame& f, int peer) {
  const Bytes bytes = encode_frame(f);
  write_all(fd, bytes.data(), bytes.size(), peer);
}

addrinfo* resolve(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  const int rc = ::getaddrinfo(ep.host.c_str(), port.c_str(), &hints, &res);
  if (rc != 0) throw TransportError("cannot resolve " + ep.host + ": " + ::gai_strerror(rc));
  return res;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

struct TcpTransport::Peer {
  Fd fd;
  std::mutex write_mutex;
  std::mutex queue_mutex;
  std::condition_variable ready;
  std::deque<Frame> queue;
  bool closed = false;
  std::string error;
  std::thread reader;
};

TcpTransport::TcpTransport(int rank, std::vector<Endpoint> members, std::chrono::milliseconds timeout)
    : rank_(rank), members_(std::move(members)), timeout_(timeout) {
  if (members_.empty()) throw ConfigError("cluster membership is empty");
  if (rank_ < 0 || rank_ >= world_size()) throw ConfigError("rank " + std::to_string(rank_) + " not in cluster");
  peers_.resize(members_.size());
  for (int r = 0; r < world_size(); ++r) {
    if (r != rank_) peers_[r] = std::make_unique<Peer>();
  }
  try {
    connect_mesh();
  } catch (...) {
    for (auto& p : peers_) {
      if (p && p->fd.get() >= 0) ::shutdown(p->fd.get(), SHUT_RDWR);
    }
    for (auto& p : peers_) {
      if (p && p->reader.joinable()) p->reader.join();
    }
    throw;
  }
}

TcpTransport::~TcpTransport() {
  for (auto& p : peers_) {
    if (p && p->fd.get() >= 0) ::shutdown(p->fd.get(), SHUT_RDWR);
  }
  for (auto& p : peers_) {
    if (p && p->reader.joinable()) p->reader.join();
  }
}

void TcpTransport::connect_mesh() {
  const auto deadline = Clock::now() + timeout_;
  const int m = world_size();

  Fd listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (listener.get() < 0) throw TransportError("socket failed: " + errno_text(), rank_);
  int one = 1;
  ::setsockopt(listener.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_ANY);
  addr.sin_port = htons(members_[rank_].port);
  if (::bind(listener.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    throw TransportError("bind to port " + std::to_string(members_[rank_].port) + " failed: " + errno_text(), rank_);
  }
  if (::listen(listener.get(), m) < 0) throw TransportError("listen failed: " + errno_text(), rank_);

  // Dial every lower rank; retry while it may still be starting up.
  for (int r = 0; r < rank_; ++r) {
    addrinfo* res = resolve(members_[r]);
    Fd fd;
    while (true) {
      fd = Fd(::socket(AF_INET, SOCK_STREAM, 0));
      if (::connect(fd.get(), res->ai_addr, res->ai_addrlen) == 0) break;
      if (Clock::now() > deadline) {
        ::freeaddrinfo(res);
        throw TransportError("could not connect to rank " + std::to_string(r) + " at " + members_[r].host + ":" +
                                 std::to_string(members_[r].port),
                             r);
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::freeaddrinfo(res);
    set_nodelay(fd.get());
    send_frame(fd.get(), Frame{FrameType::kHandshake, 0, static_cast<std::uint32_t>(rank_), {}}, r);
    peers_[r]->fd = std::move(fd);
  }

  // Accept every higher rank; the handshake tells us who connected.
  for (int pending = m - 1 - rank_; pending > 0; --pending) {
    pollfd pfd{listener.get(), POLLIN, 0};
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0 || ::poll(&pfd, 1, static_cast<int>(left)) <= 0) {
      for (int r = rank_ + 1; r < m; ++r) {
        if (peers_[r]->fd.get() < 0) throw TransportError("rank " + std::to_string(r) + " never connected", r);
      }
    }
    Fd fd(::accept(listener.get(), nullptr, nullptr));
    if (fd.get() < 0) throw TransportError("accept failed: " + errno_text(), rank_);
    set_nodelay(fd.get());
    bool eof = false;
    Frame hello = read_frame(fd.get(), eof);
    if (eof || hello.type != FrameType::kHandshake) throw TransportError("bad handshake from peer");
    const int r = static_cast<int>(hello.round);
    if (r <= rank_ || r >= m || peers_[r]->fd.get() >= 0) {
      throw TransportError("unexpected handshake from rank " + std::to_string(r), r);
    }
    peers_[r]->fd = std::move(fd);
  }

  for (int r = 0; r < m; ++r) {
    if (r != rank_) peers_[r]->reader = std::thread(&TcpTransport::reader_loop, this, r);
  }
}

void TcpTransport::reader_loop(int src) {
  Peer& p = *peers_[src];
  std::string error;
  try {
    while (true) {
      bool eof = false;
      Frame f = read_frame(p.fd.get(), eof);
      if (eof) {
        error = "connection closed by rank " + std::to_string(src);
        break;
      }
      {
        std::lock_guard lock(p.queue_mutex);
        p.queue.push_back(std::move(f));
      }
      p.ready.notify_all();
    }
  } catch (const std::exception& e) {
    error = "link to rank " + std::to_string(src) + " failed: " + e.what();
  }
  {
    std::lock_guard lock(p.queue_mutex);
    p.closed = true;
    p.error = error;
  }
  p.ready.notify_all();
}

void TcpTransport::send(int dest, const Frame& frame) {
  if (dest < 0 || dest >= world_size() || dest == rank_) throw TransportError("send to invalid rank", dest);
  Peer& p = *peers_[dest];
  std::lock_guard lock(p.write_mutex);
  send_frame(p.fd.get(), frame, dest);
}

Frame TcpTransport::recv(int src) {
  if (src < 0 || src >= world_size() || src == rank_) throw TransportError("receive from invalid rank", src);
  Peer& p = *peers_[src];
  std::unique_lock lock(p.queue_mutex);
  p.ready.wait_for(lock, timeout_, [&] { return !p.queue.empty() || p.closed; });
  if (!p.queue.empty()) {
    Frame f = std::move(p.queue.front());
    p.queue.pop_front();
    return f;
  }
  if (p.closed) throw TransportError(p.error, src);
  throw TransportError("rank " + std::to_string(rank_) + " timed out waiting for rank " + std::to_string(src), src);
}

std::vector<std::uint16_t> free_local_ports(std::size_t count) {
  std::vector<Fd> held;
  std::vector<std::uint16_t> ports;
  for (std::size_t i = 0; i < count; ++i) {
    Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
      throw TransportError("could not reserve a local port: " + errno_text());
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd.get(), reinterpret_cast<sockaddr*>(&addr), &len);
    ports.push_back(ntohs(addr.sin_port));
    held.push_back(std::move(fd));
  }
  return ports;
}

}  // namespace slash
