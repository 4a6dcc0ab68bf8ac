#pragma once

// Subprocess bridge for externally trained decoders. The child speaks a
// line-oriented protocol on stdin/stdout:
//
//   parent:  HELLO m=<int>\n            child:  OK\n
//   parent:  DECODE <abs image path>\n  child:  LOGITS <m reals>\n
//                                          or:  ERR <message>\n
//
// Image files use the toolkit's file formats; the raw float tensor format
// carries unclamped noisy images exactly.

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "certwm/basewm.hpp"
#include "certwm/errors.hpp"
#include "certwm/imageio.hpp"

namespace certwm {

class ExternalDecoder final : public BitDecoder {
 public:
  // argv[0] is the program; the handshake runs immediately.
  ExternalDecoder(std::vector<std::string> argv, std::size_t m,
                  std::chrono::milliseconds timeout =
                      std::chrono::milliseconds(30000))
      : m_(m), timeout_(timeout) {
    if (argv.empty()) throw ConfigError("external decoder command is empty");
    spawn(argv);
    write_line("HELLO m=" + std::to_string(m_));
    std::string reply = read_line();
    if (reply != "OK")
      throw ProtocolError("handshake failed, child said: " + reply);
  }

  ~ExternalDecoder() override {
    if (stdin_fd_ >= 0) ::close(stdin_fd_);
    if (stdout_fd_ >= 0) ::close(stdout_fd_);
    if (pid_ > 0) {
      ::kill(pid_, SIGTERM);
      int status = 0;
      ::waitpid(pid_, &status, 0);
    }
  }

  ExternalDecoder(const ExternalDecoder&) = delete;
  ExternalDecoder& operator=(const ExternalDecoder&) = delete;

  std::size_t bit_count() const override { return m_; }

  // Requests are serialized; callers needing parallel decodes run a pool of
  // bridge instances.
  std::vector<double> decode_file(const std::string& image_path) {
    std::lock_guard<std::mutex> g(mu_);
    write_line("DECODE " + image_path);
    return parse_logits(read_line());
  }

  std::vector<double> logits(const ImageShape& shape,
                             std::span<const double> pixels) const override {
    auto* self = const_cast<ExternalDecoder*>(this);
    std::lock_guard<std::mutex> g(self->mu_);
    self->write_raw_image(shape, pixels);
    self->write_line("DECODE " + self->scratch_path_);
    return self->parse_logits(self->read_line());
  }

 private:
  void spawn(const std::vector<std::string>& argv) {
    int in_pipe[2], out_pipe[2];
    if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0)
      throw IOError("pipe() failed");
    pid_ = ::fork();
    if (pid_ < 0) throw IOError("fork() failed");
    if (pid_ == 0) {
      ::dup2(in_pipe[0], STDIN_FILENO);
      ::dup2(out_pipe[1], STDOUT_FILENO);
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      ::close(out_pipe[0]);
      ::close(out_pipe[1]);
      std::vector<char*> cargv;
      for (const auto& a : argv) cargv.push_back(const_cast<char*>(a.c_str()));
      cargv.push_back(nullptr);
      ::execvp(cargv[0], cargv.data());
      ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    stdin_fd_ = in_pipe[1];
    stdout_fd_ = out_pipe[0];
    ::signal(SIGPIPE, SIG_IGN);

    scratch_path_ = (std::filesystem::temp_directory_path() /
                     ("certwm-ext-" + std::to_string(::getpid()) + "-" +
                      std::to_string(pid_) + ".imgf32"))
                        .string();
  }

  void write_line(const std::string& line) {
    std::string buf = line + "\n";
    std::size_t off = 0;
    while (off < buf.size()) {
      ssize_t n = ::write(stdin_fd_, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ChildExit("decoder child closed its input: " +
                        std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() {
    auto deadline = std::chrono::steady_clock::now() + timeout_;
    std::string line;
    for (;;) {
      auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (remaining.count() <= 0)
        throw TimeoutError("decoder child did not reply in time");
      struct pollfd pfd = {stdout_fd_, POLLIN, 0};
      int pr = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
      if (pr == 0) throw TimeoutError("decoder child did not reply in time");
      if (pr < 0) {
        if (errno == EINTR) continue;
        throw IOError("poll() failed");
      }
      char chunk[4096];
      ssize_t n = ::read(stdout_fd_, chunk, sizeof chunk);
      if (n == 0) throw ChildExit("decoder child exited mid-call");
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ChildExit("read from decoder child failed");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  std::vector<double> parse_logits(const std::string& reply) {
    std::istringstream in(reply);
    std::string tag;
    in >> tag;
    if (tag == "ERR") {
      std::string msg;
      std::getline(in, msg);
      throw ProtocolError("decoder child reported error:" + msg);
    }
    if (tag != "LOGITS")
      throw ProtocolError("malformed reply from decoder child: " + reply);
    std::vector<double> z;
    double v;
    while (in >> v) z.push_back(v);
    if (z.size() != m_)
      throw ProtocolError("decoder child returned " +
                          std::to_string(z.size()) + " logits, expected " +
                          std::to_string(m_));
    for (double lv : z)
      if (!std::isfinite(lv)) throw ProtocolError("non-finite logit in reply");
    return z;
  }

  void write_raw_image(const ImageShape& shape, std::span<const double> pixels) {
    save_raw_tensor(scratch_path_, shape, pixels);
  }

  std::size_t m_ = 0;
  std::chrono::milliseconds timeout_;
  pid_t pid_ = -1;
  int stdin_fd_ = -1;
  int stdout_fd_ = -1;
  std::string buffer_;
  std::string scratch_path_;
  std::mutex mu_;
};

// One round trip through an already-handshaken bridge.
inline std::vector<double> external_decoder_call(const std::string& image_path,
                                                 ExternalDecoder& endpoint) {
  return endpoint.decode_file(image_path);
}

}  // namespace certwm
