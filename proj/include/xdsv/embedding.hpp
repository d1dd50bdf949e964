#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace xdsv {

inline constexpr int kEmbeddingDim = 256;

using Embedding = std::vector<float>;
// Ordered so iteration (and everything written from it) is deterministic.
using EmbeddingMap = std::map<std::string, Embedding>;

// Text format, one utterance per line: `utt_id v0 v1 ... v{D-1}`.
void write_embeddings(const EmbeddingMap& embeddings, std::ostream& out);
void save_embeddings(const EmbeddingMap& embeddings, const std::filesystem::path& path);
EmbeddingMap parse_embeddings(std::istream& in, const std::string& source = "<stream>");
EmbeddingMap load_embeddings(const std::filesystem::path& path);

}  // namespace xdsv
