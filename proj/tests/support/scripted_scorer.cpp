// Protocol v1 test double. Usage:
//   scripted_scorer [--socket PATH] MODE [ARG]
// Modes:
//   constant            every candidate scores 0
//   oracle FILE         FILE holds "query_id doc_id" lines; gold scores 1, others 0
//   token WORD          score = occurrences of WORD in the candidate tokens
//   reverse             score = position, reversing the candidate order
//   sleep MS            constant, after sleeping MS per request
//   bad-ids             drops the last candidate and invents another
//   error               answers every request with an error object
//   stale               sends a response for an unknown query id before each answer
//   no-ready            never prints the readiness line
//   garbage             answers with a line that is not JSON
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <thread>

#include <json.hpp>

using json = nlohmann::ordered_json;

namespace {

struct Io {
  std::FILE* in;
  std::FILE* out;
};

bool read_line(std::FILE* in, std::string& line) {
  line.clear();
  int c;
  while ((c = std::fgetc(in)) != EOF) {
    if (c == '\n') return true;
    line.push_back(static_cast<char>(c));
  }
  return !line.empty();
}

void emit(std::FILE* out, const json& j) {
  const std::string s = j.dump() + "\n";
  std::fwrite(s.data(), 1, s.size(), out);
  std::fflush(out);
}

}  // namespace

int main(int argc, char** argv) {
  int arg = 1;
  std::string socket_path;
  if (argc > 2 && std::strcmp(argv[1], "--socket") == 0) {
    socket_path = argv[2];
    arg = 3;
  }
  if (arg >= argc) {
    std::cerr << "scripted_scorer: missing mode\n";
    return 2;
  }
  const std::string mode = argv[arg];
  const std::string param = arg + 1 < argc ? argv[arg + 1] : "";

  std::map<std::string, std::string> gold;
  if (mode == "oracle") {
    std::ifstream f(param);
    std::string q, d;
    while (f >> q >> d) gold[q] = d;
  }

  Io io{stdin, stdout};
  if (!socket_path.empty()) {
    int server = ::socket(AF_UNIX, SOCK_STREAM, 0);
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, socket_path.c_str(), sizeof(addr.sun_path) - 1);
    ::unlink(socket_path.c_str());
    if (::bind(server, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(server, 1) != 0) {
      std::perror("scripted_scorer");
      return 1;
    }
    int fd = ::accept(server, nullptr, nullptr);
    ::close(server);
    io.in = ::fdopen(fd, "r");
    io.out = ::fdopen(::dup(fd), "w");
  }

  if (mode != "no-ready") emit(io.out, {{"ready", true}});

  std::string line;
  while (read_line(io.in, line)) {
    json req;
    try {
      req = json::parse(line);
    } catch (const json::exception& e) {
      emit(io.out, {{"query_id", nullptr}, {"error", std::string("malformed request: ") + e.what()}});
      continue;
    }
    const std::string qid = req.value("query_id", "");
    if (mode == "error") {
      emit(io.out, {{"query_id", qid}, {"error", "scripted failure"}});
      continue;
    }
    if (mode == "garbage") {
      std::fputs("this is not json\n", io.out);
      std::fflush(io.out);
      continue;
    }
    if (mode == "sleep") std::this_thread::sleep_for(std::chrono::milliseconds(std::stoi(param)));
    if (mode == "stale") emit(io.out, {{"query_id", qid + "-stale"}, {"scores", json::array()}});

    json scores = json::array();
    const auto& candidates = req["candidates"];
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const std::string doc = candidates[i]["doc_id"];
      double score = 0.0;
      if (mode == "oracle") {
        auto it = gold.find(qid);
        score = it != gold.end() && it->second == doc ? 1.0 : 0.0;
      } else if (mode == "token") {
        for (const auto& t : candidates[i]["doc_tokens"]) score += t.get<std::string>() == param ? 1.0 : 0.0;
      } else if (mode == "reverse") {
        score = static_cast<double>(i);
      }
      scores.push_back({{"doc_id", doc}, {"score", score}});
    }
    if (mode == "bad-ids" && !scores.empty()) {
      scores.erase(scores.size() - 1);
      scores.push_back({{"doc_id", "https://invented.example/none"}, {"score", 0.5}});
    }
    emit(io.out, {{"query_id", qid}, {"scores", scores}});
  }
  return 0;
}
