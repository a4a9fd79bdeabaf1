#pragma once

#include <cstdio>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <string>
#include <sys/types.h>

#include "wtpgd/model.hpp"
#include "wtpgd/zoo.hpp"

namespace wtpgd {

// Line protocol for external black boxes: each request is one line of
// comma-separated pixels, each response one line of comma-separated
// posterior probabilities.

std::string format_values(const Tensor& t);
Tensor parse_values(const std::string& line);

/// One request line out, one response line back.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual std::string exchange(const std::string& request) = 0;
};

class StreamChannel final : public LineChannel {
 public:
  StreamChannel(std::istream& responses, std::ostream& requests) : in_(&responses), out_(&requests) {}
  std::string exchange(const std::string& request) override;

 private:
  std::istream* in_;
  std::ostream* out_;
};

/// Talks to a child process started with `/bin/sh -c command` over its stdin/stdout.
class ProcessChannel final : public LineChannel {
 public:
  explicit ProcessChannel(const std::string& command);
  ~ProcessChannel() override;
  ProcessChannel(const ProcessChannel&) = delete;
  ProcessChannel& operator=(const ProcessChannel&) = delete;
  std::string exchange(const std::string& request) override;

 private:
  pid_t pid_ = -1;
  std::FILE* to_child_ = nullptr;
  std::FILE* from_child_ = nullptr;
};

/// Oracle backed by a line channel. Queries are serialized; the remote side
/// owns any randomness, so `rng` is ignored.
class ChannelOracle final : public PosteriorOracle {
 public:
  ChannelOracle(LineChannel& channel, bool stochastic, Shape input_shape);
  Tensor posterior(const Tensor& x, Rng& rng) const override;
  bool stochastic() const override { return stochastic_; }

 private:
  LineChannel* channel_;
  bool stochastic_;
  Shape shape_;
  mutable std::mutex mutex_;
};

/// Serves `model` over the line protocol until EOF. Request r is answered
/// with a draw from stream `rng.derive(r)`.
void serve_oracle(const Model& model, std::istream& requests, std::ostream& responses, const Rng& rng);

}  // namespace wtpgd
