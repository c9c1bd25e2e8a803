#include "cxrlab/eval/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "cxrlab/core/error.hpp"
#include "cxrlab/core/image_io.hpp"
#include "cxrlab/core/rng.hpp"
#include "cxrlab/kernels/kernels.hpp"
#include "cxrlab/nn/checkpoint.hpp"
#include "cxrlab/nn/graph.hpp"

namespace cxr::interp {
namespace {

Tensor toBatch(const Tensor& image) {
  if (image.dim() != 2 || image.shape(0) < 1 || image.shape(1) < 1)
    throw ValidationError("interpret expects a single [H, W] image");
  Tensor batch({1, 1, image.shape(0), image.shape(1)});
  std::copy(image.data(), image.data() + image.size(), batch.data());
  return batch;
}

nn::NodePtr pickLayer(const nn::BackboneOut& out, const nn::Backbone& backbone,
                      const std::string& name) {
  if (name == "features") return out.features;
  for (std::size_t i = 0; i < out.stages.size(); ++i)
    if (name == "stage" + std::to_string(i)) return out.stages[i];
  std::ostringstream msg;
  msg << "unknown layer '" << name << "', available:";
  for (const auto& layer : availableLayers(backbone)) msg << ' ' << layer;
  throw ValidationError(msg.str());
}

std::ofstream openOut(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace

std::vector<std::string> availableLayers(const nn::Backbone& backbone) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < backbone.stageChannels().size(); ++i)
    names.push_back("stage" + std::to_string(i));
  names.push_back("features");
  return names;
}

Heatmap gradCam(const nn::Backbone& backbone, const nn::Classifier& head,
                const Tensor& image, data::ClassLabel targetClass,
                const std::string& layerName) {
  int cls = static_cast<int>(targetClass);
  if (cls < 0 || cls >= head.numClasses())
    throw ValidationError("target class out of range");
  int inH = image.shape(0);
  int inW = image.shape(1);

  nn::Tape t;
  auto x = t.value(toBatch(image));
  auto out = backbone.forward(t, x, false);
  auto layer = pickLayer(out, backbone, layerName);
  Rng dropRng(0);
  auto logits = head.forward(t, out.pooled, false, dropRng);

  Tensor seed({1, head.numClasses()});
  seed.at(0, cls) = 1.0;
  t.backward(logits, seed);

  const Tensor& acts = layer->value;
  Tensor grads = layer->grad.empty() ? Tensor(acts.shape()) : layer->grad;
  int c = acts.shape(1);
  int h = acts.shape(2);
  int w = acts.shape(3);
  int plane = h * w;

  Tensor raw({h, w});
  for (int k = 0; k < c; ++k) {
    const double* g = grads.data() + static_cast<std::size_t>(k) * plane;
    const double* a = acts.data() + static_cast<std::size_t>(k) * plane;
    double alpha = 0.0;
    for (int i = 0; i < plane; ++i) alpha += g[i];
    alpha /= plane;
    kernels::axpy(alpha, a, raw.data(), static_cast<std::size_t>(plane));
  }
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = std::max(0.0, raw[i]);

  Heatmap hm;
  hm.sourceLayer = layerName;
  hm.targetClass = targetClass;
  hm.values = Tensor({inH, inW});
  kernels::resizeBilinear(raw.data(), h, w, hm.values.data(), inH, inW);
  double mx = hm.values.maxValue();
  if (mx > 0.0) {
    for (std::size_t i = 0; i < hm.values.size(); ++i) hm.values[i] /= mx;
  } else {
    hm.values.zero();
  }
  return hm;
}

void writeHeatmapPng(const Heatmap& hm, const std::string& path) {
  Tensor scaled = hm.values.clone();
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= 255.0;
  writeGrayPng8(path, scaled);
}

BoxLocalization boxLocalization(const Heatmap& hm,
                                const data::ImageRecord& record) {
  if (record.boxes.empty())
    throw ValidationError("record '" + record.id + "' has no boxes");
  int h = hm.values.shape(0);
  int w = hm.values.shape(1);
  Tensor mask = data::boxesToMask(record, h, w);
  double inSum = 0.0, outSum = 0.0;
  long inCount = 0, outCount = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] > 0.5) {
      inSum += hm.values[i];
      ++inCount;
    } else {
      outSum += hm.values[i];
      ++outCount;
    }
  }
  BoxLocalization loc;
  loc.insideMean = inCount ? inSum / inCount : 0.0;
  loc.outsideMean = outCount ? outSum / outCount : 0.0;
  return loc;
}

FeatureMapDump featureMaps(const nn::Backbone& backbone, const Tensor& image,
                           const std::string& layerName) {
  nn::Tape t;
  auto x = t.value(toBatch(image));
  auto out = backbone.forward(t, x, false);
  auto layer = pickLayer(out, backbone, layerName);

  const Tensor& acts = layer->value;
  int c = acts.shape(1);
  int h = acts.shape(2);
  int w = acts.shape(3);
  int plane = h * w;

  FeatureMapDump dump;
  dump.layer = layerName;
  dump.maps = Tensor({c, h, w});
  std::copy(acts.data(), acts.data() + acts.size(), dump.maps.data());
  dump.tileCols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(c))));
  dump.tileRows = (c + dump.tileCols - 1) / dump.tileCols;
  dump.grid = Tensor({dump.tileRows * h, dump.tileCols * w});
  for (int k = 0; k < c; ++k) {
    const double* m = dump.maps.data() + static_cast<std::size_t>(k) * plane;
    double mn = m[0], mx = m[0];
    for (int i = 1; i < plane; ++i) {
      mn = std::min(mn, m[i]);
      mx = std::max(mx, m[i]);
    }
    double scale = mx > mn ? 255.0 / (mx - mn) : 0.0;
    int r0 = (k / dump.tileCols) * h;
    int c0 = (k % dump.tileCols) * w;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        dump.grid.at(r0 + i, c0 + j) = (m[i * w + j] - mn) * scale;
  }
  return dump;
}

void writeFeatureMapDump(const FeatureMapDump& dump, const std::string& stem) {
  writeGrayPng8(stem + ".png", dump.grid);

  auto bin = openOut(stem + ".bin", true);
  bin.write(reinterpret_cast<const char*>(dump.maps.data()),
            static_cast<std::streamsize>(dump.maps.size() * sizeof(double)));
  if (!bin) throw IoError("cannot write " + stem + ".bin");

  nlohmann::json meta{{"layer", dump.layer},
                      {"channels", dump.maps.shape(0)},
                      {"height", dump.maps.shape(1)},
                      {"width", dump.maps.shape(2)},
                      {"tile_rows", dump.tileRows},
                      {"tile_cols", dump.tileCols},
                      {"dtype", "float64"}};
  openOut(stem + ".json") << meta.dump(2) << '\n';
}

EmbeddingDump exportEmbeddings(const nn::Backbone& backbone,
                               const std::vector<const data::ImageRecord*>& records,
                               const data::PreprocConfig& preproc,
                               const std::string& checkpointRef) {
  EmbeddingDump dump;
  dump.layer = "pooled";
  dump.checkpointRef = checkpointRef;
  int n = static_cast<int>(records.size());
  int dim = backbone.featureDim();
  dump.features = Tensor({n, dim});

  constexpr int kChunk = 16;
  for (int start = 0; start < n; start += kChunk) {
    int b = std::min(kChunk, n - start);
    Tensor batch({b, 1, preproc.targetH, preproc.targetW});
    for (int i = 0; i < b; ++i) {
      Tensor img = data::preprocess(records[start + i]->pixels, preproc);
      std::copy(img.data(), img.data() + img.size(),
                batch.data() + static_cast<std::size_t>(i) * img.size());
    }
    nn::Tape t;
    auto out = backbone.forward(t, t.value(batch), false);
    const Tensor& pooled = out.pooled->value;
    std::copy(pooled.data(), pooled.data() + pooled.size(),
              dump.features.data() + static_cast<std::size_t>(start) * dim);
  }
  for (const auto* rec : records) {
    dump.labels.push_back(static_cast<int>(rec->label));
    dump.ids.push_back(rec->id);
  }
  return dump;
}

void writeEmbeddingsCsv(const EmbeddingDump& dump, const std::string& path) {
  auto out = openOut(path);
  out << std::setprecision(17);
  out << "id,label";
  for (int j = 0; j < dump.features.shape(1); ++j) out << ",f" << j;
  out << '\n';
  for (int i = 0; i < dump.features.shape(0); ++i) {
    out << dump.ids[i] << ',' << dump.labels[i];
    for (int j = 0; j < dump.features.shape(1); ++j)
      out << ',' << dump.features.at(i, j);
    out << '\n';
  }
}

Tensor pcaReduce2d(const Tensor& features) {
  if (features.dim() != 2) throw ValidationError("pca expects [N, d] features");
  int n = features.shape(0);
  int d = features.shape(1);
  Tensor xy({n, 2});
  if (n == 0 || d == 0) return xy;

  Tensor centered = features.clone();
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += centered.at(i, j);
    mean /= n;
    for (int i = 0; i < n; ++i) centered.at(i, j) -= mean;
  }

  Tensor cov({d, d});
  kernels::matmul(centered.data(), centered.data(), cov.data(), d, d, n,
                  true, false, false);
  double denom = std::max(1, n - 1);
  for (std::size_t i = 0; i < cov.size(); ++i) cov[i] /= denom;

  Rng rng(0x9e3779b9);
  std::vector<Tensor> comps;
  // Power iteration with re-orthogonalization against earlier components.
  // When the data is exactly low rank, cov maps everything back into the
  // span of the leading components, so orthogonalization merely shrinks the
  // iterate by rounding noise without changing its direction. A collapse of
  // the norm across orthogonalization therefore means no variance is left
  // and the component is pinned to zero.
  auto orthogonalize = [&](Tensor& u) {
    for (const Tensor& c : comps) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += u[j] * c[j];
      for (int j = 0; j < d; ++j) u[j] -= dot * c[j];
    }
  };
  auto vecNorm = [&](const Tensor& u) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += u[j] * u[j];
    return std::sqrt(s);
  };
  for (int comp = 0; comp < 2; ++comp) {
    Tensor v({d});
    for (int j = 0; j < d; ++j) v[j] = rng.normal(0.0, 1.0);
    orthogonalize(v);
    double norm = vecNorm(v);
    if (norm > 1e-300) {
      for (int j = 0; j < d; ++j) v[j] /= norm;
      for (int iter = 0; iter < 500; ++iter) {
        Tensor next({d});
        kernels::matmul(cov.data(), v.data(), next.data(), d, 1, d, false,
                        false, false);
        double pre = vecNorm(next);
        orthogonalize(next);
        double post = vecNorm(next);
        if (post < 1e-300 || post < 1e-12 * pre) {
          v.zero();
          break;
        }
        for (int j = 0; j < d; ++j) next[j] /= post;
        double delta = 0.0;
        for (int j = 0; j < d; ++j)
          delta = std::max(delta, std::abs(next[j] - v[j]));
        v = next;
        if (delta < 1e-13) break;
      }
    } else {
      v.zero();
    }
    // Fixed sign convention keeps the projection reproducible.
    int peak = 0;
    for (int j = 1; j < d; ++j)
      if (std::abs(v[j]) > std::abs(v[peak])) peak = j;
    if (v[peak] < 0.0)
      for (int j = 0; j < d; ++j) v[j] = -v[j];
    comps.push_back(std::move(v));
  }

  for (int i = 0; i < n; ++i)
    for (int comp = 0; comp < 2; ++comp) {
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += centered.at(i, j) * comps[comp][j];
      xy.at(i, comp) = dot;
    }
  return xy;
}

void writeReducedCsv(const EmbeddingDump& dump, const Tensor& xy,
                     const std::string& path) {
  if (xy.dim() != 2 || xy.shape(0) != static_cast<int>(dump.ids.size()) ||
      xy.shape(1) != 2)
    throw ValidationError("reduced coordinates must be [N, 2]");
  auto out = openOut(path);
  out << std::setprecision(17) << "id,label,x,y\n";
  for (int i = 0; i < xy.shape(0); ++i)
    out << dump.ids[i] << ',' << dump.labels[i] << ',' << xy.at(i, 0) << ','
        << xy.at(i, 1) << '\n';
}

BoxDimStats boxDimStats(const std::vector<data::ImageRecord>& records) {
  BoxDimStats stats;
  stats.dims.resize(data::kNumClasses);
  stats.means.assign(data::kNumClasses, 0.0);
  stats.counts.assign(data::kNumClasses, 0);
  for (const auto& rec : records) {
    if (rec.boxes.empty()) continue;
    if (rec.pixels.dim() != 2 || rec.pixels.shape(0) < 1 || rec.pixels.shape(1) < 1)
      throw ValidationError("record '" + rec.id + "' has boxes but no pixels");
    double sy = 224.0 / rec.pixels.shape(0);
    double sx = 224.0 / rec.pixels.shape(1);
    for (const auto& box : rec.boxes)
      stats.dims[static_cast<std::size_t>(rec.label)].push_back(
          std::sqrt((box.w * sx) * (box.h * sy)));
  }
  for (int c = 0; c < data::kNumClasses; ++c) {
    const auto& dims = stats.dims[static_cast<std::size_t>(c)];
    stats.counts[static_cast<std::size_t>(c)] = static_cast<long>(dims.size());
    if (!dims.empty()) {
      double sum = 0.0;
      for (double v : dims) sum += v;
      stats.means[static_cast<std::size_t>(c)] = sum / dims.size();
    }
  }
  return stats;
}

void writeBoxDimCsv(const BoxDimStats& stats, const std::string& path) {
  auto out = openOut(path);
  out << std::setprecision(17) << "class,dim\n";
  for (int c = 0; c < data::kNumClasses; ++c)
    for (double v : stats.dims[static_cast<std::size_t>(c)])
      out << data::toString(static_cast<data::ClassLabel>(c)) << ',' << v << '\n';
}

void writeBoxDimHistogramCsv(const BoxDimStats& stats, double binWidth,
                             const std::string& path) {
  if (!(binWidth > 0.0)) throw ValidationError("bin width must be positive");
  auto out = openOut(path);
  out << std::setprecision(17) << "class,bin_lo,bin_hi,count\n";
  for (int c = 0; c < data::kNumClasses; ++c) {
    const auto& dims = stats.dims[static_cast<std::size_t>(c)];
    if (dims.empty()) continue;
    auto [mnIt, mxIt] = std::minmax_element(dims.begin(), dims.end());
    long lo = static_cast<long>(std::floor(*mnIt / binWidth));
    long hi = static_cast<long>(std::floor(*mxIt / binWidth));
    for (long b = lo; b <= hi; ++b) {
      long count = 0;
      for (double v : dims) {
        long bin = static_cast<long>(std::floor(v / binWidth));
        if (bin == b) ++count;
      }
      out << data::toString(static_cast<data::ClassLabel>(c)) << ','
          << b * binWidth << ',' << (b + 1) * binWidth << ',' << count << '\n';
    }
  }
  out << "# class,mean,count\n";
  for (int c = 0; c < data::kNumClasses; ++c)
    out << data::toString(static_cast<data::ClassLabel>(c)) << ','
        << stats.means[static_cast<std::size_t>(c)] << ','
        << stats.counts[static_cast<std::size_t>(c)] << '\n';
}

AnalysisModel loadAnalysisModel(const train::TrainConfig& cfg,
                                const std::string& checkpointPath,
                                bool withHead) {
  AnalysisModel model;
  nn::BackboneConfig bcfg;
  bcfg.name = cfg.backbone;
  Rng init = Rng::stream(cfg.seed, 1);
  model.backbone.emplace(bcfg, model.store, init, "backbone");
  if (withHead)
    model.head.emplace(model.backbone->featureDim(), data::kNumClasses,
                       model.store, init, "head", cfg.headDropout);

  auto meta = nn::loadCheckpoint(checkpointPath, model.store);
  if (meta.contains("backbone") &&
      meta["backbone"].get<std::string>() != nn::toString(cfg.backbone))
    throw CheckpointError("checkpoint backbone '" +
                          meta["backbone"].get<std::string>() +
                          "' does not match configured '" +
                          nn::toString(cfg.backbone) + "'");
  if (meta.contains("input_h") && meta["input_h"].get<int>() != cfg.preproc.targetH)
    throw CheckpointError("checkpoint input height differs from config");
  if (meta.contains("input_w") && meta["input_w"].get<int>() != cfg.preproc.targetW)
    throw CheckpointError("checkpoint input width differs from config");
  return model;
}

}  // namespace cxr::interp
