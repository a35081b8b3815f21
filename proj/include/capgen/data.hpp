#pragma once

#include <string>
#include <vector>

namespace capgen::data {

// R x D matrix of image-region features, row-major.
struct FeatureGrid {
  int n_regions = 0;
  int dim = 0;
  std::vector<double> values;

  double at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * dim + c];
  }
};

struct CaptionRecord {
  std::string id;
  std::string feature_path;  // empty when the grid is held in memory
  std::string caption;
};

// In-memory dataset: records paired with their feature grids.
struct Dataset {
  std::vector<CaptionRecord> records;
  std::vector<FeatureGrid> features;

  std::size_t size() const { return records.size(); }
};

}  // namespace capgen::data
