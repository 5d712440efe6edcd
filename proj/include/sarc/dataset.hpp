#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sarc {

struct ManifestRecord {
    std::string image_path;  // as written in the manifest
    double expert1 = 0;
    double expert2 = 0;
};

struct DatasetManifest {
    std::string root;  // directory of the manifest file; relative paths resolve against it
    std::vector<ManifestRecord> records;
};

// True when s lies on the half-step expert grid {1.0, 1.5, ..., 5.0}.
bool on_half_grid(double s);

// Parses a UTF-8 CSV with header `image_path,expert1,expert2`. Checks that
// every referenced image file exists and that scores sit on the half-step
// grid. Row order is preserved.
DatasetManifest load_manifest(const std::string& path);

struct ScoredCell {
    std::string id;          // image file stem
    std::string image_path;  // resolved path
    double expert1 = 0;
    double expert2 = 0;
    double label = 0;  // (expert1 + expert2) / 2
};

struct FilterResult {
    std::vector<ScoredCell> cells;  // records that survived the agreement filter
    int excluded = 0;               // |expert1 - expert2| > 1.0
};

// Drops disagreement records (strictly greater than one), labels survivors
// with the mean score. Labels land on the quarter-step grid inside [1, 5].
FilterResult filter_and_label(const DatasetManifest& manifest);

struct SplitSpec {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
    uint64_t seed = 1;
};

struct SplitResult {
    std::vector<int> train, val, test;  // indices into the input cell list
};

// Stratified split: cells are grouped by exact label, each group is shuffled
// with the seed and cut by largest-remainder so per-bin proportions match the
// fractions within one item. Deterministic for a fixed seed.
SplitResult split_dataset(const std::vector<ScoredCell>& cells, const SplitSpec& spec);

// Counts per exact label; the nine half-step bins are always present (zero
// when empty), quarter-step labels add their own keys.
std::map<double, int> label_histogram(const std::vector<ScoredCell>& cells);

// Split file: JSON {seed, train: [ids], val: [ids], test: [ids]}.
void write_split_json(const std::string& path, const std::vector<ScoredCell>& cells,
                      const SplitResult& split, uint64_t seed);
SplitResult read_split_json(const std::string& path, const std::vector<ScoredCell>& cells);

}  // namespace sarc
