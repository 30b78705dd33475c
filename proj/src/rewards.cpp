#include "csmc/rewards.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <json.hpp>

namespace csmc {

std::vector<double> RewardFn::batch(std::span<const Sequence> xs) const {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto& x : xs) out.push_back((*this)(x));
  return out;
}

double TokenCountReward::operator()(const Sequence& x) const {
  if (x.empty()) return 0.0;
  const auto hits = std::count(x.begin(), x.end(), target_);
  return static_cast<double>(hits) / static_cast<double>(x.size());
}

GatedBracketReward::GatedBracketReward(Token open, Token close) : open_(open), close_(close) {
  if (open == close) {
    throw InvalidArgument("open and close brackets must be different tokens");
  }
}

double GatedBracketReward::operator()(const Sequence& x) const {
  if (x.empty()) return 0.0;
  int depth = 0;
  int max_depth = 0;
  for (Token t : x) {
    if (t == open_) {
      max_depth = std::max(max_depth, ++depth);
    } else if (t == close_) {
      if (--depth < 0) return 0.0;
    }
  }
  if (depth != 0) return 0.0;
  return static_cast<double>(max_depth) / static_cast<double>(x.size());
}

PatternReward::PatternReward(Sequence pattern) : pattern_(std::move(pattern)) {
  if (pattern_.empty()) {
    throw InvalidArgument("pattern reward needs a non-empty pattern");
  }
}

double PatternReward::operator()(const Sequence& x) const {
  const std::size_t m = pattern_.size();
  if (x.size() < m) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i + m <= x.size();) {
    if (std::equal(pattern_.begin(), pattern_.end(), x.begin() + static_cast<std::ptrdiff_t>(i))) {
      ++hits;
      i += m;
    } else {
      ++i;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(x.size() / m);
}

std::chrono::milliseconds reward_timeout_from_env(std::chrono::milliseconds fallback) {
  const char* raw = std::getenv("CSMC_REWARD_TIMEOUT_SECS");
  if (raw == nullptr || *raw == '\0') return fallback;
  char* end = nullptr;
  const double secs = std::strtod(raw, &end);
  if (end == raw || *end != '\0' || !(secs > 0.0) || !std::isfinite(secs)) {
    throw InvalidArgument(std::string("CSMC_REWARD_TIMEOUT_SECS must be a positive number, got '") + raw + "'");
  }
  return std::chrono::milliseconds(static_cast<std::int64_t>(secs * 1000.0));
}

ExternalRewardClient::ExternalRewardClient(std::string command, Vocabulary vocab,
                                           std::chrono::milliseconds timeout)
    : command_(std::move(command)), vocab_(std::move(vocab)), timeout_(timeout) {
  // Writes to a dead child must surface as EPIPE, not kill the process.
  ::signal(SIGPIPE, SIG_IGN);
  int in_pipe[2];
  int out_pipe[2];
  if (::pipe(in_pipe) != 0) {
    throw RewardTransportError(std::string("pipe: ") + std::strerror(errno));
  }
  if (::pipe(out_pipe) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw RewardTransportError(std::string("pipe: ") + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    throw RewardTransportError(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  pid_ = pid;
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);
  ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);
  ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
}

ExternalRewardClient::~ExternalRewardClient() {
  if (to_child_ >= 0) ::close(to_child_);
  if (from_child_ >= 0) ::close(from_child_);
  if (pid_ > 0) {
    // Give the server a moment to exit on EOF before killing it.
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
        ::kill(-pid_, SIGKILL);  // stray grandchildren of the shell
        return;
      }
      ::usleep(10000);
    }
    ::kill(-pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
}

double ExternalRewardClient::operator()(const Sequence& x) const {
  return batch(std::span<const Sequence>(&x, 1)).front();
}

std::vector<double> ExternalRewardClient::batch(std::span<const Sequence> xs) const {
  std::vector<std::string> texts;
  texts.reserve(xs.size());
  for (const auto& x : xs) texts.push_back(vocab_.decode(x));
  return batch_text(texts);
}

std::vector<double> ExternalRewardClient::batch_text(const std::vector<std::string>& texts) const {
  std::lock_guard lock(mutex_);
  if (broken_) {
    throw RewardTransportError("reward server connection is unusable after an earlier failure");
  }
  std::vector<double> rewards(texts.size(), std::numeric_limits<double>::quiet_NaN());
  if (texts.empty()) return rewards;
  const std::int64_t first_id = next_id_;
  std::string payload;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    nlohmann::json req = {{"id", first_id + static_cast<std::int64_t>(i)}, {"text", texts[i]}};
    payload += req.dump();
    payload += '\n';
  }
  next_id_ += static_cast<std::int64_t>(texts.size());
  try {
    write_all_and_collect(payload, rewards, first_id);
  } catch (...) {
    broken_ = true;
    throw;
  }
  return rewards;
}

void ExternalRewardClient::write_all_and_collect(const std::string& payload, std::vector<double>& rewards,
                                                 std::int64_t first_id) const {
  using clock = std::chrono::steady_clock;
  const auto deadline = clock::now() + timeout_;
  std::size_t written = 0;
  std::size_t pending = rewards.size();
  std::vector<bool> answered(rewards.size(), false);

  while (pending > 0) {
    const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
    if (remaining.count() <= 0) {
      throw RewardTransportError("reward server timed out with " + std::to_string(pending) +
                                 " replies outstanding (command: " + command_ + ")");
    }
    pollfd fds[2];
    nfds_t nfds = 0;
    fds[nfds++] = {from_child_, POLLIN, 0};
    if (written < payload.size()) fds[nfds++] = {to_child_, POLLOUT, 0};
    const int ready = ::poll(fds, nfds, static_cast<int>(std::min<std::int64_t>(remaining.count(), 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      throw RewardTransportError(std::string("poll: ") + std::strerror(errno));
    }
    if (nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
      const ssize_t n = ::write(to_child_, payload.data() + written, payload.size() - written);
      if (n < 0 && errno != EAGAIN && errno != EINTR) {
        throw RewardTransportError(std::string("reward server closed its input: ") + std::strerror(errno));
      }
      if (n > 0) written += static_cast<std::size_t>(n);
    }
    if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
      char buf[4096];
      const ssize_t n = ::read(from_child_, buf, sizeof buf);
      if (n == 0) {
        throw RewardTransportError("reward server exited with " + std::to_string(pending) +
                                   " replies outstanding (command: " + command_ + ")");
      }
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        throw RewardTransportError(std::string("read: ") + std::strerror(errno));
      }
      read_buffer_.append(buf, static_cast<std::size_t>(n));
      std::size_t nl;
      while ((nl = read_buffer_.find('\n')) != std::string::npos) {
        const std::string line = read_buffer_.substr(0, nl);
        read_buffer_.erase(0, nl + 1);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json reply;
        try {
          reply = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
          throw RewardTransportError("malformed reply from reward server: " + line);
        }
        if (!reply.is_object() || !reply.contains("id") || !reply["id"].is_number_integer()) {
          throw RewardTransportError("reply without integer id: " + line);
        }
        const std::int64_t id = reply["id"].get<std::int64_t>();
        if (id < first_id || id >= first_id + static_cast<std::int64_t>(rewards.size())) {
          throw RewardTransportError("reply for unknown id " + std::to_string(id));
        }
        const auto slot = static_cast<std::size_t>(id - first_id);
        if (answered[slot]) {
          throw RewardTransportError("duplicate reply for id " + std::to_string(id));
        }
        if (!reply.contains("valid") || !reply["valid"].is_boolean()) {
          throw RewardTransportError("reply without boolean 'valid': " + line);
        }
        const bool valid = reply["valid"].get<bool>();
        double value = 0.0;
        if (valid) {
          if (!reply.contains("reward") || !reply["reward"].is_number()) {
            throw RewardTransportError("valid reply without numeric reward: " + line);
          }
          value = reply["reward"].get<double>();
          if (!std::isfinite(value)) {
            throw RewardTransportError("non-finite reward in reply: " + line);
          }
        }
        rewards[slot] = value;
        answered[slot] = true;
        --pending;
      }
    }
  }
}

}  // namespace csmc
