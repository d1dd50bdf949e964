#include "xdsv/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

#include "xdsv/error.hpp"
#include "xdsv/random.hpp"

namespace xdsv {

namespace {

// Row i of the conditional affinities with the Gaussian width found by
// bisection on the entropy.
void conditional_row(const std::vector<double>& d2, std::size_t i, std::size_t n, double log_perp,
                     std::vector<double>& row) {
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    double sum = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) {
        row[j] = 0.0;
        continue;
      }
      row[j] = std::exp(-beta * d2[i * n + j]);
      sum += row[j];
      weighted += row[j] * d2[i * n + j];
    }
    if (sum <= 0.0) sum = 1e-300;
    const double entropy = std::log(sum) + beta * weighted / sum;
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    const double diff = entropy - log_perp;
    if (std::abs(diff) < 1e-6) break;
    if (diff > 0.0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
}

}  // namespace

std::vector<std::array<double, 2>> tsne(const std::vector<std::vector<double>>& points,
                                        const TsneConfig& cfg) {
  const std::size_t n = points.size();
  require(n >= 2, ErrorKind::Validation, "t-SNE needs at least 2 points");
  const std::size_t dim = points[0].size();
  for (const auto& p : points) require(p.size() == dim, ErrorKind::Shape, "t-SNE points differ in dimension");
  require(cfg.perplexity > 0.0 && cfg.iterations > 0, ErrorKind::Config, "invalid t-SNE settings");

  std::vector<double> d2(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double d = points[i][k] - points[j][k];
        s += d * d;
      }
      d2[i * n + j] = d2[j * n + i] = s;
    }
  }

  const double perplexity = std::min(cfg.perplexity, (double(n) - 1.0) / 3.0);
  const double log_perp = std::log(std::max(perplexity, 1.0 + 1e-9));
  std::vector<double> p(n * n, 0.0), row(n);
  for (std::size_t i = 0; i < n; ++i) {
    conditional_row(d2, i, n, log_perp, row);
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] = row[j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::max((p[i * n + j] + p[j * n + i]) / (2.0 * double(n)), 1e-12);
      p[i * n + j] = p[j * n + i] = v;
    }
    p[i * n + i] = 0.0;
  }

  Rng rng = derive_rng(cfg.seed, "tsne.init");
  std::vector<double> y(2 * n), velocity(2 * n, 0.0), gains(2 * n, 1.0), grad(2 * n), q(n * n);
  for (auto& v : y) v = 1e-4 * standard_normal(rng);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const double exaggeration = iter < cfg.exaggeration_iterations ? cfg.early_exaggeration : 1.0;
    const double momentum = iter < cfg.exaggeration_iterations ? 0.5 : 0.8;
    double qsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      q[i * n + i] = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        const double w = 1.0 / (1.0 + dx * dx + dy * dy);
        q[i * n + j] = q[j * n + i] = w;
        qsum += 2.0 * w;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      double gx = 0.0, gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double w = q[i * n + j];
        const double m = (exaggeration * p[i * n + j] - w / qsum) * w;
        gx += m * (y[2 * i] - y[2 * j]);
        gy += m * (y[2 * i + 1] - y[2 * j + 1]);
      }
      grad[2 * i] = 4.0 * gx;
      grad[2 * i + 1] = 4.0 * gy;
    }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      const bool same_sign = (grad[k] > 0.0) == (velocity[k] > 0.0);
      gains[k] = std::max(0.01, same_sign ? gains[k] * 0.8 : gains[k] + 0.2);
      velocity[k] = momentum * velocity[k] - cfg.learning_rate * gains[k] * grad[k];
      y[k] += velocity[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    mx /= double(n);
    my /= double(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx;
      y[2 * i + 1] -= my;
    }
  }

  std::vector<std::array<double, 2>> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = {y[2 * i], y[2 * i + 1]};
  return out;
}

TsnePlot visualize_tsne(const EmbeddingMap& embeddings, const Manifest& m, int n_speakers,
                        const TsneConfig& cfg) {
  require(n_speakers >= 1, ErrorKind::Argument, "n_speakers must be positive");
  std::set<std::string> available;
  for (const auto& r : m.records()) {
    if (embeddings.count(r.utt_id)) available.insert(r.speaker_id);
  }
  std::vector<std::string> pool(available.begin(), available.end());
  require(pool.size() >= std::size_t(n_speakers), ErrorKind::Validation,
          "t-SNE needs " + std::to_string(n_speakers) + " speakers with embeddings, found " +
              std::to_string(pool.size()));

  Rng rng = derive_rng(cfg.seed, "tsne.speakers");
  for (std::size_t i = 0; i < std::size_t(n_speakers); ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  }
  pool.resize(std::size_t(n_speakers));
  std::sort(pool.begin(), pool.end());
  const std::set<std::string> chosen(pool.begin(), pool.end());

  TsnePlot plot;
  plot.speakers = pool;
  std::vector<std::vector<double>> data;
  for (const auto& r : m.records()) {
    const auto it = embeddings.find(r.utt_id);
    if (!chosen.count(r.speaker_id) || it == embeddings.end()) continue;
    double norm = 0.0;
    for (float v : it->second) norm += double(v) * v;
    norm = std::sqrt(norm);
    require(norm > 0.0, ErrorKind::Numeric, "zero-norm embedding for " + r.utt_id);
    std::vector<double> v(it->second.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = it->second[k] / norm;
    data.push_back(std::move(v));
    plot.points.push_back({r.utt_id, r.speaker_id, r.domain, 0.0, 0.0});
  }
  const auto coords = tsne(data, cfg);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    plot.points[i].x = coords[i][0];
    plot.points[i].y = coords[i][1];
  }
  return plot;
}

void write_tsne_coords(const TsnePlot& plot, std::ostream& out) {
  char buf[128];
  for (const auto& p : plot.points) {
    std::snprintf(buf, sizeof buf, "\t%.9g\t%.9g\n", p.x, p.y);
    out << p.utt_id << '\t' << p.speaker_id << '\t' << to_string(p.domain) << buf;
  }
}

std::string render_tsne_svg(const TsnePlot& plot, const std::string& title) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};
  constexpr int kPalette = sizeof(palette) / sizeof(palette[0]);
  const double width = 760, height = 600, plot_w = 560, margin = 30;

  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!plot.points.empty()) {
    x0 = x1 = plot.points[0].x;
    y0 = y1 = plot.points[0].y;
    for (const auto& p : plot.points) {
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
  }
  const double sx = (plot_w - 2 * margin) / std::max(x1 - x0, 1e-9);
  const double sy = (height - 2 * margin) / std::max(y1 - y0, 1e-9);
  auto colour = [&](const std::string& spk) {
    const auto idx = std::find(plot.speakers.begin(), plot.speakers.end(), spk) - plot.speakers.begin();
    return palette[idx % kPalette];
  };
  auto star = [](double cx, double cy, double r) {
    std::ostringstream s;
    for (int k = 0; k < 10; ++k) {
      const double a = -M_PI / 2 + k * M_PI / 5;
      const double rr = k % 2 == 0 ? r : r * 0.45;
      s << (k ? " " : "") << cx + rr * std::cos(a) << ',' << cy + rr * std::sin(a);
    }
    return s.str();
  };

  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!title.empty()) svg << "<text x=\"" << margin << "\" y=\"18\" font-size=\"14\">" << title << "</text>\n";
  svg << "<g class=\"points\">\n";
  for (const auto& p : plot.points) {
    const double cx = margin + (p.x - x0) * sx;
    const double cy = height - margin - (p.y - y0) * sy;
    if (p.domain == Domain::ST) {
      svg << "<circle class=\"marker-st\" cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"4\" fill=\""
          << colour(p.speaker_id) << "\"/>\n";
    } else {
      svg << "<polygon class=\"marker-s\" points=\"" << star(cx, cy, 6) << "\" fill=\""
          << colour(p.speaker_id) << "\"/>\n";
    }
  }
  svg << "</g>\n<g class=\"legend\" font-size=\"12\">\n";
  double ly = margin;
  for (const auto& spk : plot.speakers) {
    svg << "<g class=\"legend-speaker\"><rect x=\"" << plot_w + 10 << "\" y=\"" << ly - 9
        << "\" width=\"10\" height=\"10\" fill=\"" << colour(spk) << "\"/><text x=\"" << plot_w + 26
        << "\" y=\"" << ly << "\">" << spk << "</text></g>\n";
    ly += 18;
  }
  ly += 10;
  svg << "<g class=\"legend-marker\"><circle cx=\"" << plot_w + 15 << "\" cy=\"" << ly - 4
      << "\" r=\"4\" fill=\"black\"/><text x=\"" << plot_w + 26 << "\" y=\"" << ly
      << "\">stage speech (ST)</text></g>\n";
  ly += 18;
  svg << "<g class=\"legend-marker\"><polygon points=\"" << star(plot_w + 15, ly - 4, 6)
      << "\" fill=\"black\"/><text x=\"" << plot_w + 26 << "\" y=\"" << ly
      << "\">singing (S)</text></g>\n";
  svg << "</g>\n</svg>\n";
  return svg.str();
}

}  // namespace xdsv
