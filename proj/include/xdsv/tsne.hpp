#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "xdsv/embedding.hpp"
#include "xdsv/manifest.hpp"

namespace xdsv {

struct TsneConfig {
  double perplexity = 15.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  std::uint64_t seed = 0;
};

// Exact t-SNE (dense affinities) to two dimensions.
std::vector<std::array<double, 2>> tsne(const std::vector<std::vector<double>>& points,
                                        const TsneConfig& cfg);

struct TsnePoint {
  std::string utt_id;
  std::string speaker_id;
  Domain domain = Domain::ST;
  double x = 0.0;
  double y = 0.0;
};

struct TsnePlot {
  std::vector<std::string> speakers;  // legend order
  std::vector<TsnePoint> points;
};

// Picks n_speakers speakers at random (seeded), projects their
// length-normalized embeddings.
TsnePlot visualize_tsne(const EmbeddingMap& embeddings, const Manifest& m, int n_speakers,
                        const TsneConfig& cfg);

// utt_id speaker domain x y, tab-separated.
void write_tsne_coords(const TsnePlot& plot, std::ostream& out);
// Scatter plot: one colour per speaker, circles for ST, stars for S.
std::string render_tsne_svg(const TsnePlot& plot, const std::string& title = "");

}  // namespace xdsv
