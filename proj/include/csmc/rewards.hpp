#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "csmc/core.hpp"

namespace csmc {

/// Total, deterministic map from clean sequences to finite reals.
/// Structurally invalid inputs score 0 rather than throwing.
class RewardFn {
 public:
  virtual ~RewardFn() = default;
  virtual double operator()(const Sequence& x) const = 0;
  virtual std::vector<double> batch(std::span<const Sequence> xs) const;
  virtual std::string name() const = 0;
};

/// Fraction of positions holding `target`.
class TokenCountReward : public RewardFn {
 public:
  explicit TokenCountReward(Token target) : target_(target) {}
  double operator()(const Sequence& x) const override;
  std::string name() const override { return "token_count"; }

 private:
  Token target_;
};

/// Max nesting depth / L for balanced bracket strings, 0 otherwise.
/// Tokens other than `open` and `close` are filler.
class GatedBracketReward : public RewardFn {
 public:
  GatedBracketReward(Token open, Token close);
  double operator()(const Sequence& x) const override;
  std::string name() const override { return "gated_bracket"; }

 private:
  Token open_;
  Token close_;
};

/// Non-overlapping left-to-right occurrences of `pattern`, divided by floor(L / |pattern|).
class PatternReward : public RewardFn {
 public:
  explicit PatternReward(Sequence pattern);
  double operator()(const Sequence& x) const override;
  std::string name() const override { return "pattern"; }

 private:
  Sequence pattern_;
};

class ConstantReward : public RewardFn {
 public:
  explicit ConstantReward(double value = 0.0) : value_(value) {}
  double operator()(const Sequence&) const override { return value_; }
  std::string name() const override { return "constant"; }

 private:
  double value_;
};

/// Adapts any callable. The callable must be deterministic and thread-safe.
class FunctionReward : public RewardFn {
 public:
  FunctionReward(std::function<double(const Sequence&)> fn, std::string name = "function")
      : fn_(std::move(fn)), name_(std::move(name)) {}
  double operator()(const Sequence& x) const override { return fn_(x); }
  std::string name() const override { return name_; }

 private:
  std::function<double(const Sequence&)> fn_;
  std::string name_;
};

/// A failure to obtain a reward (dead process, malformed reply, timeout).
/// Distinct from a zero reward: callers must abort rather than continue.
class RewardTransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Talks newline-delimited JSON to a child process over its stdin/stdout:
///   request: {"id": <int>, "text": "<decoded>"}
///   reply:   {"id": <int>, "reward": <float>, "valid": <bool>}
/// Replies may arrive in any order. Access is serialized by an internal mutex.
class ExternalRewardClient : public RewardFn {
 public:
  ExternalRewardClient(std::string command, Vocabulary vocab,
                       std::chrono::milliseconds timeout = std::chrono::seconds(30));
  ~ExternalRewardClient() override;
  ExternalRewardClient(const ExternalRewardClient&) = delete;
  ExternalRewardClient& operator=(const ExternalRewardClient&) = delete;

  double operator()(const Sequence& x) const override;
  std::vector<double> batch(std::span<const Sequence> xs) const override;
  /// Sends already-decoded strings.
  std::vector<double> batch_text(const std::vector<std::string>& texts) const;
  std::string name() const override { return "external"; }

 private:
  void write_all_and_collect(const std::string& payload, std::vector<double>& rewards,
                             std::int64_t first_id) const;

  std::string command_;
  Vocabulary vocab_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::string read_buffer_;
  mutable std::int64_t next_id_ = 0;
  mutable bool broken_ = false;
  mutable std::mutex mutex_;
};

/// Reads CSMC_REWARD_TIMEOUT_SECS, falling back to `fallback` when unset.
std::chrono::milliseconds reward_timeout_from_env(std::chrono::milliseconds fallback);

}  // namespace csmc
