#include "cxrlab/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "cxrlab/core/error.hpp"
#include "cxrlab/core/image_io.hpp"
#include "cxrlab/core/rng.hpp"

namespace fs = std::filesystem;

namespace cxr::data {

ClassLabel labelFromString(const std::string& s) {
  if (s == "negative") return ClassLabel::negative;
  if (s == "typical") return ClassLabel::typical;
  if (s == "indeterminate") return ClassLabel::indeterminate;
  if (s == "atypical") return ClassLabel::atypical;
  throw ValidationError("unknown class label: '" + s + "'");
}

std::string toString(ClassLabel label) {
  switch (label) {
    case ClassLabel::negative: return "negative";
    case ClassLabel::typical: return "typical";
    case ClassLabel::indeterminate: return "indeterminate";
    case ClassLabel::atypical: return "atypical";
  }
  return "negative";
}

namespace {

// One CSV line split on commas outside double quotes. Doubled quotes inside
// a quoted field unescape to a single quote.
std::vector<std::string> splitCsvLine(const std::string& line, int lineNo) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted)
    throw ParseError("manifest line " + std::to_string(lineNo) +
                     ": unterminated quote");
  fields.push_back(cur);
  return fields;
}

int parseInt(const std::string& s, int lineNo) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    throw ParseError("manifest line " + std::to_string(lineNo) +
                     ": bad integer '" + s + "'");
  }
  if (pos != s.size())
    throw ParseError("manifest line " + std::to_string(lineNo) +
                     ": bad integer '" + s + "'");
  return v;
}

std::vector<BoundingBox> parseBoxes(const std::string& field, int lineNo) {
  std::vector<BoundingBox> boxes;
  if (field.empty()) return boxes;
  std::stringstream ss(field);
  std::string quad;
  while (std::getline(ss, quad, ';')) {
    std::vector<std::string> parts;
    std::stringstream qs(quad);
    std::string part;
    while (std::getline(qs, part, ',')) parts.push_back(part);
    if (parts.size() != 4)
      throw ParseError("manifest line " + std::to_string(lineNo) +
                       ": box needs four values, got '" + quad + "'");
    BoundingBox b{parseInt(parts[0], lineNo), parseInt(parts[1], lineNo),
                  parseInt(parts[2], lineNo), parseInt(parts[3], lineNo)};
    if (b.w <= 0 || b.h <= 0)
      throw ValidationError("manifest line " + std::to_string(lineNo) +
                            ": box width and height must be positive");
    boxes.push_back(b);
  }
  return boxes;
}

bool clipBox(BoundingBox& b, int imgH, int imgW) {
  const int x0 = std::max(b.x, 0);
  const int y0 = std::max(b.y, 0);
  const int x1 = std::min(b.x + b.w, imgW);
  const int y1 = std::min(b.y + b.h, imgH);
  if (x1 <= x0 || y1 <= y0) return false;
  b = {x0, y0, x1 - x0, y1 - y0};
  return true;
}

}  // namespace

std::vector<ImageRecord> loadManifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest: " + path);
  const fs::path baseDir = fs::path(path).parent_path();

  std::string header;
  if (!std::getline(is, header)) return {};
  if (!header.empty() && header.back() == '\r') header.pop_back();

  const auto cols = splitCsvLine(header, 1);
  std::map<std::string, int> colIndex;
  for (std::size_t i = 0; i < cols.size(); ++i)
    colIndex[cols[i]] = static_cast<int>(i);
  if (!colIndex.count("path") || !colIndex.count("label"))
    throw ParseError("manifest header must include 'path' and 'label'");

  auto field = [&](const std::vector<std::string>& row, const char* name,
                   const std::string& fallback) {
    auto it = colIndex.find(name);
    return it == colIndex.end() ? fallback : row[it->second];
  };

  std::vector<ImageRecord> records;
  std::map<std::string, std::size_t> byId;
  std::string line;
  int lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto row = splitCsvLine(line, lineNo);
    if (row.size() != cols.size())
      throw ParseError("manifest line " + std::to_string(lineNo) + ": got " +
                       std::to_string(row.size()) + " fields, expected " +
                       std::to_string(cols.size()));

    const std::string imgPath = row[colIndex.at("path")];
    const std::string id = field(row, "id", imgPath);
    const std::string labelStr = row[colIndex.at("label")];
    ClassLabel label;
    try {
      label = labelFromString(labelStr);
    } catch (const ValidationError&) {
      throw ValidationError("manifest line " + std::to_string(lineNo) +
                            ": unknown class label '" + labelStr + "'");
    }
    auto boxes = parseBoxes(field(row, "boxes", ""), lineNo);
    const std::string group = field(row, "group", id);

    auto it = byId.find(id);
    if (it != byId.end()) {
      ImageRecord& r = records[it->second];
      if (r.label != label)
        throw ValidationError("manifest line " + std::to_string(lineNo) +
                              ": conflicting labels for id '" + id + "'");
      if (r.group != group)
        throw ValidationError("manifest line " + std::to_string(lineNo) +
                              ": conflicting groups for id '" + id + "'");
      r.boxes.insert(r.boxes.end(), boxes.begin(), boxes.end());
      continue;
    }

    ImageRecord r;
    r.id = id;
    r.label = label;
    r.group = group;
    r.boxes = std::move(boxes);
    const fs::path resolved = fs::path(imgPath).is_absolute()
                                  ? fs::path(imgPath)
                                  : baseDir / imgPath;
    r.pixels = readGrayPng(resolved.string());
    byId[id] = records.size();
    records.push_back(std::move(r));
  }

  for (ImageRecord& r : records) {
    const int imgH = r.pixels.shape(0), imgW = r.pixels.shape(1);
    for (BoundingBox& b : r.boxes) {
      if (!clipBox(b, imgH, imgW))
        throw ValidationError("record '" + r.id +
                              "': box lies entirely outside the image");
    }
  }
  return records;
}

void writeDataset(const std::vector<ImageRecord>& records,
                  const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  std::ofstream csv(fs::path(dir) / "manifest.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write manifest under " + dir);
  csv << "id,path,label,boxes,group\n";
  for (const ImageRecord& r : records) {
    const std::string rel = "images/" + r.id + ".png";
    writeGrayPng8((fs::path(dir) / rel).string(), r.pixels);
    std::string boxes;
    for (std::size_t i = 0; i < r.boxes.size(); ++i) {
      if (i) boxes += ";";
      boxes += std::to_string(r.boxes[i].x) + "," +
               std::to_string(r.boxes[i].y) + "," +
               std::to_string(r.boxes[i].w) + "," +
               std::to_string(r.boxes[i].h);
    }
    csv << r.id << "," << rel << "," << toString(r.label) << ",\"" << boxes
        << "\"," << r.group << "\n";
  }
  if (!csv) throw IoError("write failed for manifest under " + dir);
}

Tensor boxesToMask(const ImageRecord& record, int outH, int outW) {
  if (outH <= 0 || outW <= 0)
    throw ValidationError("mask size must be positive");
  Tensor mask({outH, outW});
  mask.zero();
  const int srcH = record.pixels.shape(0), srcW = record.pixels.shape(1);
  const double sy = static_cast<double>(outH) / srcH;
  const double sx = static_cast<double>(outW) / srcW;
  for (const BoundingBox& b : record.boxes) {
    // floor the leading edge, ceil the trailing edge: rescaling never drops
    // an annotated pixel
    int x0 = static_cast<int>(std::floor(b.x * sx));
    int y0 = static_cast<int>(std::floor(b.y * sy));
    int x1 = static_cast<int>(std::ceil((b.x + b.w) * sx));
    int y1 = static_cast<int>(std::ceil((b.y + b.h) * sy));
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, outW);
    y1 = std::min(y1, outH);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) mask.at(y, x) = 1.0;
  }
  return mask;
}

namespace {

struct GroupUnit {
  std::vector<std::string> ids;
  ClassLabel label;  // stratum: label of the group's first record
};

// Groups in first-appearance order, bucketed per class.
std::vector<std::vector<GroupUnit>> groupByClass(
    const std::vector<ImageRecord>& records) {
  std::vector<GroupUnit> units;
  std::map<std::string, std::size_t> byGroup;
  for (const ImageRecord& r : records) {
    const std::string key = r.group.empty() ? r.id : r.group;
    auto it = byGroup.find(key);
    if (it == byGroup.end()) {
      byGroup[key] = units.size();
      units.push_back({{r.id}, r.label});
    } else {
      units[it->second].ids.push_back(r.id);
    }
  }
  std::vector<std::vector<GroupUnit>> perClass(kNumClasses);
  for (GroupUnit& u : units)
    perClass[static_cast<int>(u.label)].push_back(std::move(u));
  return perClass;
}

void shuffleUnits(std::vector<GroupUnit>& units, Rng& rng) {
  for (int i = static_cast<int>(units.size()) - 1; i > 0; --i) {
    const int j = rng.uniformInt(0, i);
    std::swap(units[i], units[j]);
  }
}

int unitRecordCount(const std::vector<GroupUnit>& units) {
  int n = 0;
  for (const GroupUnit& u : units) n += static_cast<int>(u.ids.size());
  return n;
}

}  // namespace

DatasetSplit makeSplit(const std::vector<ImageRecord>& records,
                       double testFraction, std::uint64_t seed) {
  if (testFraction <= 0.0 || testFraction >= 1.0)
    throw ValidationError("test fraction must lie strictly between 0 and 1");
  if (records.size() < 2)
    throw ValidationError("need at least two records to split");

  auto perClass = groupByClass(records);

  // Largest-remainder allocation of test seats over the eligible classes.
  std::vector<int> classCount(kNumClasses, 0);
  std::vector<bool> eligible(kNumClasses, false);
  double quotaSum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    classCount[c] = unitRecordCount(perClass[c]);
    if (classCount[c] == 0) continue;
    if (classCount[c] < 2) {
      std::cerr << "[split] class " << toString(static_cast<ClassLabel>(c))
                << " has fewer than 2 records; keeping it whole in train\n";
      continue;
    }
    eligible[c] = true;
    quotaSum += testFraction * classCount[c];
  }
  const int totalSeats = static_cast<int>(std::floor(quotaSum + 1e-9));
  std::vector<int> target(kNumClasses, 0);
  std::vector<std::pair<double, int>> remainders;  // (-remainder, class)
  int seated = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (!eligible[c]) continue;
    const double quota = testFraction * classCount[c];
    target[c] = static_cast<int>(std::floor(quota + 1e-9));
    seated += target[c];
    remainders.push_back({-(quota - target[c]), c});
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t i = 0; i < remainders.size() && seated < totalSeats; ++i) {
    if (-remainders[i].first <= 1e-9) break;
    ++target[remainders[i].second];
    ++seated;
  }

  DatasetSplit split;
  split.seed = seed;
  for (int c = 0; c < kNumClasses; ++c) {
    auto& units = perClass[c];
    if (units.empty()) continue;
    Rng rng(Rng::stream(seed, static_cast<std::uint64_t>(c)));
    shuffleUnits(units, rng);
    int taken = 0;
    for (const GroupUnit& u : units) {
      const int sz = static_cast<int>(u.ids.size());
      const bool toTest = eligible[c] && taken + sz <= target[c];
      auto& bucket = toTest ? split.testIds : split.trainIds;
      if (toTest) taken += sz;
      bucket.insert(bucket.end(), u.ids.begin(), u.ids.end());
    }
  }
  return split;
}

std::vector<DatasetSplit> makeKFolds(const std::vector<ImageRecord>& records,
                                     int k, std::uint64_t seed) {
  if (k < 2) throw ValidationError("need at least 2 folds");
  if (k > static_cast<int>(records.size()))
    throw ValidationError("more folds than records");

  auto perClass = groupByClass(records);
  std::vector<std::vector<std::string>> foldIds(k);
  for (int c = 0; c < kNumClasses; ++c) {
    auto& units = perClass[c];
    if (units.empty()) continue;
    if (unitRecordCount(units) < k)
      std::cerr << "[kfold] class " << toString(static_cast<ClassLabel>(c))
                << " has fewer records than folds\n";
    Rng rng(Rng::stream(seed, 1000 + static_cast<std::uint64_t>(c)));
    shuffleUnits(units, rng);
    for (std::size_t i = 0; i < units.size(); ++i) {
      auto& dst = foldIds[i % k];
      dst.insert(dst.end(), units[i].ids.begin(), units[i].ids.end());
    }
  }

  std::vector<DatasetSplit> folds;
  for (int f = 0; f < k; ++f) {
    DatasetSplit s;
    s.foldIndex = f;
    s.seed = seed;
    s.testIds = foldIds[f];
    for (int other = 0; other < k; ++other) {
      if (other == f) continue;
      s.trainIds.insert(s.trainIds.end(), foldIds[other].begin(),
                        foldIds[other].end());
    }
    folds.push_back(std::move(s));
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Phantom generation

PhantomGeometry phantomLungGeometry(int h, int w) {
  PhantomGeometry g;
  g.left = {0.32 * w, 0.50 * h, 0.17 * w, 0.30 * h};
  g.right = {0.68 * w, 0.50 * h, 0.17 * w, 0.30 * h};
  return g;
}

namespace {

constexpr double kNoiseSigma = 13.0;
constexpr double kLesionThreshold = 6.0;  // box extent cutoff for soft blobs

struct Blob {
  double cx, cy, sigma, amp;
};

struct LineLesion {
  double cx, cy, angle, halfLen, halfThick, amp;
};

void addBlob(Tensor& img, const Blob& b) {
  const int h = img.shape(0), w = img.shape(1);
  const int r = static_cast<int>(std::ceil(3.0 * b.sigma));
  const int y0 = std::max(0, static_cast<int>(b.cy) - r);
  const int y1 = std::min(h - 1, static_cast<int>(b.cy) + r);
  const int x0 = std::max(0, static_cast<int>(b.cx) - r);
  const int x1 = std::min(w - 1, static_cast<int>(b.cx) + r);
  const double inv = 1.0 / (2.0 * b.sigma * b.sigma);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d2 = (x - b.cx) * (x - b.cx) + (y - b.cy) * (y - b.cy);
      img.at(y, x) += b.amp * std::exp(-d2 * inv);
    }
}

BoundingBox blobBox(const Blob& b, int h, int w) {
  // radius where the contribution drops below the threshold
  const double rt = b.sigma * std::sqrt(2.0 * std::log(b.amp / kLesionThreshold));
  BoundingBox box;
  box.x = static_cast<int>(std::floor(b.cx - rt));
  box.y = static_cast<int>(std::floor(b.cy - rt));
  box.w = static_cast<int>(std::ceil(b.cx + rt)) - box.x;
  box.h = static_cast<int>(std::ceil(b.cy + rt)) - box.y;
  const int x0 = std::max(box.x, 0), y0 = std::max(box.y, 0);
  const int x1 = std::min(box.x + box.w, w), y1 = std::min(box.y + box.h, h);
  return {x0, y0, std::max(1, x1 - x0), std::max(1, y1 - y0)};
}

void addLine(Tensor& img, const LineLesion& l) {
  const int h = img.shape(0), w = img.shape(1);
  const double ux = std::cos(l.angle), uy = std::sin(l.angle);
  const int reach = static_cast<int>(std::ceil(l.halfLen + l.halfThick)) + 1;
  const int y0 = std::max(0, static_cast<int>(l.cy) - reach);
  const int y1 = std::min(h - 1, static_cast<int>(l.cy) + reach);
  const int x0 = std::max(0, static_cast<int>(l.cx) - reach);
  const int x1 = std::min(w - 1, static_cast<int>(l.cx) + reach);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - l.cx, dy = y - l.cy;
      const double along = dx * ux + dy * uy;
      const double across = -dx * uy + dy * ux;
      if (std::abs(along) <= l.halfLen && std::abs(across) <= l.halfThick)
        img.at(y, x) += l.amp;  // hard edge, no falloff
    }
}

BoundingBox lineBox(const LineLesion& l, int h, int w) {
  const double ux = std::cos(l.angle), uy = std::sin(l.angle);
  const double ex = std::abs(ux) * l.halfLen + std::abs(uy) * l.halfThick;
  const double ey = std::abs(uy) * l.halfLen + std::abs(ux) * l.halfThick;
  BoundingBox box;
  box.x = static_cast<int>(std::floor(l.cx - ex));
  box.y = static_cast<int>(std::floor(l.cy - ey));
  box.w = static_cast<int>(std::ceil(l.cx + ex)) - box.x;
  box.h = static_cast<int>(std::ceil(l.cy + ey)) - box.y;
  const int cx0 = std::max(box.x, 0), cy0 = std::max(box.y, 0);
  const int cx1 = std::min(box.x + box.w, w), cy1 = std::min(box.y + box.h, h);
  return {cx0, cy0, std::max(1, cx1 - cx0), std::max(1, cy1 - cy0)};
}

// Uniform point in the unit disk section selected by `accept`, mapped into
// the lung ellipse.
std::pair<double, double> samplePointInLung(
    const LungGeometry& lung, Rng& rng,
    const std::function<bool(double, double)>& accept) {
  for (int tries = 0; tries < 1000; ++tries) {
    const double u = rng.uniform(-1.0, 1.0);
    const double v = rng.uniform(-1.0, 1.0);
    if (u * u + v * v > 1.0) continue;
    if (!accept(u, v)) continue;
    return {lung.cx + u * lung.rx, lung.cy + v * lung.ry};
  }
  return {lung.cx, lung.cy};  // unreachable for the sections used here
}

}  // namespace

std::vector<ImageRecord> generatePhantomDataset(int n, int h, int w,
                                                std::uint64_t seed) {
  if (n < 4) throw ValidationError("phantom dataset needs n >= 4");
  if (h < 32 || w < 32)
    throw ValidationError("phantom images must be at least 32x32");

  const PhantomGeometry geo = phantomLungGeometry(h, w);
  const double minDim = std::min(h, w);
  std::vector<ImageRecord> records;
  records.reserve(n);

  for (int i = 0; i < n; ++i) {
    Rng rng(Rng::stream(seed, static_cast<std::uint64_t>(i)));
    const auto label = static_cast<ClassLabel>(i % kNumClasses);

    Tensor img({h, w});
    for (int y = 0; y < h; ++y) {
      const double base = 205.0 - 25.0 * (static_cast<double>(y) / h);
      for (int x = 0; x < w; ++x) {
        double v = base;
        for (const LungGeometry* lung : {&geo.left, &geo.right}) {
          const double du = (x - lung->cx) / lung->rx;
          const double dv = (y - lung->cy) / lung->ry;
          const double r2 = du * du + dv * dv;
          if (r2 <= 1.0) v -= 75.0 * (1.0 - 0.5 * r2);
        }
        img.at(y, x) = v;
      }
    }

    std::vector<BoundingBox> boxes;
    auto placeBlobs = [&](const LungGeometry& lung, int count, bool lower,
                          double sigmaLo, double sigmaHi) {
      const bool leftLung = &lung == &geo.left;
      for (int bi = 0; bi < count; ++bi) {
        auto accept = [&](double u, double v) {
          if (u * u + v * v > 0.72) return false;  // keep centers interior
          if (lower) {
            // peripheral lower quadrant: below center, toward the outer edge
            return v > 0.1 && (leftLung ? u < 0.05 : u > -0.05);
          }
          return v < 0.1;  // upper and central region
        };
        const auto [cx, cy] = samplePointInLung(lung, rng, accept);
        Blob b;
        b.cx = cx;
        b.cy = cy;
        b.sigma = (sigmaLo + (sigmaHi - sigmaLo) * rng.uniform01()) * minDim;
        b.amp = 24.0 + 8.0 * rng.uniform01();
        addBlob(img, b);
        boxes.push_back(blobBox(b, h, w));
      }
    };

    switch (label) {
      case ClassLabel::negative:
        break;
      case ClassLabel::typical: {
        const int nLeft = 1 + (rng.bernoulli(0.5) ? 1 : 0);
        const int nRight = 1 + (rng.bernoulli(0.5) ? 1 : 0);
        placeBlobs(geo.left, nLeft, true, 0.055, 0.09);
        placeBlobs(geo.right, nRight, true, 0.055, 0.09);
        break;
      }
      case ClassLabel::indeterminate: {
        const LungGeometry& lung = rng.bernoulli(0.5) ? geo.left : geo.right;
        const int count = 1 + (rng.bernoulli(0.35) ? 1 : 0);
        placeBlobs(lung, count, false, 0.03, 0.05);
        break;
      }
      case ClassLabel::atypical: {
        const LungGeometry& lung = rng.bernoulli(0.5) ? geo.left : geo.right;
        auto accept = [](double u, double v) { return u * u + v * v <= 0.5; };
        const auto [cx, cy] = samplePointInLung(lung, rng, accept);
        LineLesion l;
        l.cx = cx;
        l.cy = cy;
        l.angle = rng.uniform(0.0, 3.14159265358979323846);
        l.halfLen = (0.09 + 0.05 * rng.uniform01()) * minDim;
        l.halfThick = std::max(1.0, 0.018 * minDim);
        l.amp = 27.0 + 6.0 * rng.uniform01();
        addLine(img, l);
        boxes.push_back(lineBox(l, h, w));
        break;
      }
    }

    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double noisy = img.at(y, x) + rng.normal(0.0, kNoiseSigma);
        img.at(y, x) = std::clamp(std::round(noisy), 0.0, 255.0);
      }

    ImageRecord r;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "phantom_%05d", i);
    r.id = buf;
    r.group = r.id;
    r.label = label;
    r.pixels = std::move(img);
    r.boxes = std::move(boxes);
    records.push_back(std::move(r));
  }
  return records;
}

const ImageRecord* findRecord(const std::vector<ImageRecord>& records,
                              const std::string& id) {
  for (const ImageRecord& r : records)
    if (r.id == id) return &r;
  return nullptr;
}

std::vector<const ImageRecord*> selectRecords(
    const std::vector<ImageRecord>& records,
    const std::vector<std::string>& ids) {
  std::vector<const ImageRecord*> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const ImageRecord* r = findRecord(records, id);
    if (!r) throw ValidationError("unknown record id: " + id);
    out.push_back(r);
  }
  return out;
}

}  // namespace cxr::data
