#include <cstdio>
#include <fstream>
#include <sstream>

#include "xdsv/embedding.hpp"
#include "xdsv/error.hpp"

namespace xdsv {

void write_embeddings(const EmbeddingMap& embeddings, std::ostream& out) {
  char buf[32];
  for (const auto& [utt, e] : embeddings) {
    out << utt;
    for (float v : e) {
      std::snprintf(buf, sizeof(buf), " %.9g", static_cast<double>(v));
      out << buf;
    }
    out << '\n';
  }
}

void save_embeddings(const EmbeddingMap& embeddings, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::Io, "cannot write embeddings " + path.string());
  write_embeddings(embeddings, out);
}

EmbeddingMap parse_embeddings(std::istream& in, const std::string& source) {
  EmbeddingMap out;
  std::string line;
  int line_no = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string utt;
    if (!(ls >> utt)) continue;
    Embedding e;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        e.push_back(std::stof(tok, &used));
        require(used == tok.size(), ErrorKind::Parse, "trailing characters");
      } catch (const std::exception&) {
        fail(ErrorKind::Parse, source + ":" + std::to_string(line_no) + ": bad value '" + tok + "'");
      }
    }
    require(!e.empty(), ErrorKind::Parse, source + ":" + std::to_string(line_no) + ": no values");
    if (dim == 0) dim = e.size();
    require(e.size() == dim, ErrorKind::Parse,
            source + ":" + std::to_string(line_no) + ": inconsistent embedding dimension");
    require(out.emplace(utt, std::move(e)).second, ErrorKind::Parse,
            source + ":" + std::to_string(line_no) + ": duplicate utterance '" + utt + "'");
  }
  return out;
}

EmbeddingMap load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::Io, "cannot open embeddings " + path.string());
  return parse_embeddings(in, path.string());
}

}  // namespace xdsv
