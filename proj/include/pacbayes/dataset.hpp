#pragma once

// Labeled datasets for the classification experiments: IDX image/label
// parsing (raw or gzip), synthetic Gaussian blob tasks, and deterministic
// shuffled splits.

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pacbayes {

struct LabeledDataset {
    Eigen::MatrixXd features;       // n x d, image pixels scaled to [0,1]
    std::vector<int> labels;        // n entries in [0, class_count)
    int class_count = 0;
    std::vector<long> source_index; // position of each row in the originating dataset

    long n() const { return features.rows(); }
    long dim() const { return features.cols(); }
    void validate() const; // throws std::invalid_argument on shape/label inconsistencies
};

// Malformed IDX input. what() names the offending field and byte offset.
struct IdxParseError : std::runtime_error {
    explicit IdxParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Parses an IDX image file (magic 0x00000803) and label file (magic
// 0x00000801) into a dataset. Either byte buffer may be gzip-compressed
// (sniffed via the 1f 8b magic). Pixels are scaled by 1/255. Throws
// IdxParseError on bad magic, truncation, or image/label count mismatch.
LabeledDataset parse_idx(const std::vector<std::uint8_t>& images_bytes,
                         const std::vector<std::uint8_t>& labels_bytes);

// File-loading convenience wrapper around parse_idx.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of parse_idx for round-trips; pixels re-quantized by round(f*255).
// Images are emitted as rows x cols with cols = dim, rows = 1 unless dim is
// a perfect square (then rows = cols = sqrt(dim)).
std::vector<std::uint8_t> serialize_idx_images(const LabeledDataset& ds);
std::vector<std::uint8_t> serialize_idx_labels(const LabeledDataset& ds);

// Gzip-decompresses a buffer (gzip container only). Throws IdxParseError on
// corrupt streams.
std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& bytes);

// k isotropic unit-variance Gaussian clusters in R^d whose centers form a
// regular simplex with pairwise distance `separation` (requires k-1 <= d).
// Cluster sizes are as equal as possible, remainder to the lowest labels;
// rows are ordered by label, shuffling is the splitter's job. Deterministic
// in seed. separation = 0 collapses all centers to the origin.
LabeledDataset make_blobs(long n, int k, int d, double separation, std::uint64_t seed);

// Fisher-Yates permutation of [0, n) drawn from the dataset-split stream.
std::vector<long> split_permutation(long n, std::uint64_t seed);

// Shuffles with split_permutation(seed) and cuts contiguous chunks of the
// given sizes. sum(sizes) must not exceed ds.n(); leftover rows are dropped.
// Chunk rows carry source_index into the input dataset.
std::vector<LabeledDataset> split_dataset(const LabeledDataset& ds, const std::vector<long>& sizes,
                                          std::uint64_t seed);

// Concatenation preserving source_index (used for suffix validation sets).
LabeledDataset concat_datasets(const std::vector<LabeledDataset>& parts);

} // namespace pacbayes
