#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "selb/rng.hpp"
#include "selb/tensor.hpp"

namespace selb {

// In-memory labeled dataset. Samples are stored row-major in one flat buffer;
// sample_shape is the per-sample shape (batch tensors get a leading N axis).
struct Dataset {
  Shape sample_shape;
  std::size_t num_classes = 0;
  std::vector<double> x;
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return shape_size(sample_shape); }

  Tensor batch_x(const std::vector<std::size_t>& idx) const;
  std::vector<std::size_t> batch_labels(const std::vector<std::size_t>& idx) const;
  Tensor all_x() const;
};

// Synthetic isotropic Gaussian clusters, one per class, means spread apart on
// scaled unit vectors. Features are min/max normalized to [0,1] jointly over
// train+test; label noise reassigns a fraction of *train* labels to a
// different class (test labels stay clean).
struct BlobsConfig {
  std::size_t num_classes = 3;
  std::size_t dim = 3;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 100;
  double spread = 0.5;
  double label_noise = 0.0;  // fraction of train labels reassigned, in [0, 0.5)
};

std::pair<Dataset, Dataset> gen_gaussian_blobs(const BlobsConfig& cfg, std::uint64_t seed);

// IDX container (big-endian dims, unsigned-byte payload), kept at the byte
// level so save(load(p)) is bit-exact.
struct IdxData {
  std::vector<std::size_t> dims;
  std::vector<std::uint8_t> bytes;
};

IdxData load_idx(const std::string& path);
void save_idx(const std::string& path, const IdxData& data);

// images: rank-3 IDX (n, rows, cols); labels: rank-1 IDX of class bytes.
Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         std::size_t num_classes = 10);
void save_idx_dataset(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path);

// CIFAR-10 binary batches: records of 1 label byte + 3*32*32 pixel bytes.
struct Cifar10Data {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> pixels;  // labels.size() * 3072, channel-planar
};

Cifar10Data load_cifar10_raw(const std::string& path);
void save_cifar10_raw(const std::string& path, const Cifar10Data& data);
Dataset cifar10_to_dataset(const Cifar10Data& data);
Dataset load_cifar10(const std::vector<std::string>& paths);

// Subsample of `total` points without replacement. Stratified mode gives each
// class a proportional quota with largest-remainder rounding (within +/-1 of
// exact); plain mode picks uniformly over the whole set.
Dataset subsample(const Dataset& ds, std::size_t total, bool stratified, std::uint64_t seed);

// Deterministic minibatch schedule: epoch e always yields the same exact
// partition of 0..n-1 (shuffled by a seed derived from (seed, e), last batch
// may be short).
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed);
  std::vector<std::vector<std::size_t>> epoch_batches(std::uint64_t epoch) const;
  std::size_t batches_per_epoch() const;

 private:
  std::size_t n_;
  std::size_t batch_size_;
  std::uint64_t seed_;
};

}  // namespace selb
