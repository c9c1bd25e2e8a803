#pragma once

#include <string>
#include <vector>

#include "cxrlab/core/tensor.hpp"

namespace cxr::data {

enum class ClassLabel { negative = 0, typical = 1, indeterminate = 2, atypical = 3 };

inline constexpr int kNumClasses = 4;

ClassLabel labelFromString(const std::string& s);
std::string toString(ClassLabel label);

struct BoundingBox {
  int x = 0;  // left
  int y = 0;  // top
  int w = 0;
  int h = 0;

  bool operator==(const BoundingBox&) const = default;
};

struct ImageRecord {
  std::string id;
  Tensor pixels;  // [H, W], non-negative intensities
  ClassLabel label = ClassLabel::negative;
  std::vector<BoundingBox> boxes;
  std::string group;  // records sharing a group never straddle a split
};

struct DatasetSplit {
  std::vector<std::string> trainIds;
  std::vector<std::string> testIds;
  int foldIndex = 0;
  std::uint64_t seed = 0;
};

/// Reads a manifest CSV plus the PNG images it references. Columns are
/// matched by header name: `path` and `label` are required; `id` defaults to
/// the path string, `boxes` to none, `group` to the id. `boxes` holds
/// semicolon-separated `x,y,w,h` quadruples in one quoted field. Rows with
/// the same id merge their boxes. Boxes are clipped to the image bounds.
std::vector<ImageRecord> loadManifest(const std::string& path);

/// Writes `images/<id>.png` (8-bit) plus `manifest.csv` under `dir`.
void writeDataset(const std::vector<ImageRecord>& records,
                  const std::string& dir);

/// Rescales each box from the record's resolution to (outH, outW), floors
/// the top-left corner, ceils the bottom-right, clips, and ORs the boxes
/// into a binary mask.
Tensor boxesToMask(const ImageRecord& record, int outH, int outW);

/// Stratified, group-respecting train/test split. Per-class test counts are
/// assigned by largest remainder so they deviate from
/// testFraction * classCount by less than one record (exact when every
/// group is a single record).
DatasetSplit makeSplit(const std::vector<ImageRecord>& records,
                       double testFraction, std::uint64_t seed);

/// Stratified k-fold partition; fold i is the test set of split i.
std::vector<DatasetSplit> makeKFolds(const std::vector<ImageRecord>& records,
                                     int k, std::uint64_t seed);

/// Synthetic chest phantoms: elliptical low-intensity lung fields on a
/// brighter background with Gaussian noise, plus class-conditional lesions.
/// Labels cycle negative, typical, indeterminate, atypical so class counts
/// differ by at most one. Intensities are 8-bit quantized.
std::vector<ImageRecord> generatePhantomDataset(int n, int h, int w,
                                                std::uint64_t seed);

/// Lung-field ellipse geometry used by the generator at a given image size,
/// exposed so tests can verify lesion placement by containment.
struct LungGeometry {
  double cx, cy;  // center, pixel coordinates
  double rx, ry;  // semi-axes

  bool contains(double px, double py) const {
    const double dx = (px - cx) / rx, dy = (py - cy) / ry;
    return dx * dx + dy * dy <= 1.0;
  }
};

struct PhantomGeometry {
  LungGeometry left;
  LungGeometry right;
};

PhantomGeometry phantomLungGeometry(int h, int w);

/// Convenience lookups over a record list.
const ImageRecord* findRecord(const std::vector<ImageRecord>& records,
                              const std::string& id);
std::vector<const ImageRecord*> selectRecords(
    const std::vector<ImageRecord>& records,
    const std::vector<std::string>& ids);

}  // namespace cxr::data
