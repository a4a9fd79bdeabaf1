#include "wtpgd/oracle_channel.hpp"

#include <charconv>
#include <csignal>
#include <istream>
#include <ostream>
#include <sys/wait.h>
#include <unistd.h>

namespace wtpgd {

std::string format_values(const Tensor& t) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0) out += ',';
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), t[i]);
    out.append(buf, ptr);
  }
  return out;
}

Tensor parse_values(const std::string& line) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    auto end = line.find(',', pos);
    if (end == std::string::npos) end = line.size();
    std::size_t b = pos, e = end;
    while (b < e && (line[b] == ' ' || line[b] == '\t')) ++b;
    while (e > b && (line[e - 1] == ' ' || line[e - 1] == '\t' || line[e - 1] == '\r')) --e;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(line.data() + b, line.data() + e, v);
    if (b == e || ec != std::errc() || ptr != line.data() + e) {
      throw Error("malformed value '" + line.substr(b, e - b) + "' in protocol line");
    }
    values.push_back(v);
    pos = end + 1;
  }
  return Tensor::vector(std::move(values));
}

std::string StreamChannel::exchange(const std::string& request) {
  *out_ << request << '\n' << std::flush;
  std::string line;
  if (!std::getline(*in_, line)) throw Error("oracle channel closed before responding");
  return line;
}

ProcessChannel::ProcessChannel(const std::string& command) {
  int to_child[2];
  int from_child[2];
  if (pipe(to_child) != 0) throw Error("pipe() failed");
  if (pipe(from_child) != 0) {
    close(to_child[0]);
    close(to_child[1]);
    throw Error("pipe() failed");
  }
  pid_ = fork();
  if (pid_ < 0) throw Error("fork() failed");
  if (pid_ == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_child[0]);
  close(from_child[1]);
  to_child_ = fdopen(to_child[1], "w");
  from_child_ = fdopen(from_child[0], "r");
  if (to_child_ == nullptr || from_child_ == nullptr) throw Error("fdopen() failed");
  std::signal(SIGPIPE, SIG_IGN);
}

ProcessChannel::~ProcessChannel() {
  if (to_child_ != nullptr) std::fclose(to_child_);
  if (from_child_ != nullptr) std::fclose(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::string ProcessChannel::exchange(const std::string& request) {
  if (std::fputs(request.c_str(), to_child_) < 0 || std::fputc('\n', to_child_) == EOF || std::fflush(to_child_) != 0) {
    throw Error("failed writing to oracle process");
  }
  std::string line;
  int ch;
  while ((ch = std::fgetc(from_child_)) != EOF && ch != '\n') line.push_back(static_cast<char>(ch));
  if (ch == EOF && line.empty()) throw Error("oracle process closed its output");
  return line;
}

ChannelOracle::ChannelOracle(LineChannel& channel, bool stochastic, Shape input_shape)
    : channel_(&channel), stochastic_(stochastic), shape_(std::move(input_shape)) {}

Tensor ChannelOracle::posterior(const Tensor& x, Rng&) const {
  if (x.shape() != shape_) throw ShapeError("oracle input shape mismatch");
  std::string reply;
  {
    std::lock_guard lock(mutex_);
    reply = channel_->exchange(format_values(x));
  }
  return parse_values(reply);
}

void serve_oracle(const Model& model, std::istream& requests, std::ostream& responses, const Rng& rng) {
  std::string line;
  std::uint64_t index = 0;
  while (std::getline(requests, line)) {
    if (line.empty()) continue;
    const Tensor x = parse_values(line).reshaped(model.input_shape());
    Rng draw = rng.derive(index++);
    responses << format_values(softmax(model_logits(model, x, draw))) << '\n' << std::flush;
  }
}

}  // namespace wtpgd
