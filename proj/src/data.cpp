#include "selb/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "selb/error.hpp"

namespace selb {

namespace {

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::io, "read error on " + path);
  return bytes;
}

void write_bytes_atomic(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::io, "cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::io, "write error on " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::io, "cannot move " + tmp + " to " + path + ": " + ec.message());
}

std::uint32_t read_u32_be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

void push_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(std::uint8_t(v >> 24));
  out.push_back(std::uint8_t(v >> 16));
  out.push_back(std::uint8_t(v >> 8));
  out.push_back(std::uint8_t(v));
}

constexpr std::size_t kCifarRecord = 1 + 3 * 32 * 32;

}  // namespace

Tensor Dataset::batch_x(const std::vector<std::size_t>& idx) const {
  if (idx.empty()) fail(ErrorCode::bad_value, "batch_x: empty index list");
  std::size_t d = sample_size();
  Shape shape = sample_shape;
  shape.insert(shape.begin(), idx.size());
  std::vector<double> buf(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= size()) fail(ErrorCode::bad_value, "batch_x: index out of range");
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(idx[i] * d), d, buf.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return Tensor::from_data(shape, std::move(buf));
}

std::vector<std::size_t> Dataset::batch_labels(const std::vector<std::size_t>& idx) const {
  std::vector<std::size_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= size()) fail(ErrorCode::bad_value, "batch_labels: index out of range");
    out[i] = labels[idx[i]];
  }
  return out;
}

Tensor Dataset::all_x() const {
  Shape shape = sample_shape;
  shape.insert(shape.begin(), size());
  return Tensor::from_data(shape, x);
}

std::pair<Dataset, Dataset> gen_gaussian_blobs(const BlobsConfig& cfg, std::uint64_t seed) {
  if (cfg.num_classes < 2) fail(ErrorCode::config, "blobs: need at least 2 classes");
  if (cfg.dim < cfg.num_classes) {
    fail(ErrorCode::config, "blobs: dim " + std::to_string(cfg.dim) +
                                " must be >= num_classes " + std::to_string(cfg.num_classes));
  }
  if (cfg.train_per_class == 0 || cfg.test_per_class == 0) {
    fail(ErrorCode::config, "blobs: train_per_class and test_per_class must be positive");
  }
  if (!(cfg.spread > 0.0)) fail(ErrorCode::config, "blobs: spread must be positive");
  if (cfg.label_noise < 0.0 || cfg.label_noise >= 0.5) {
    fail(ErrorCode::config, "blobs: label_noise must be in [0, 0.5)");
  }
  std::size_t train_count = cfg.train_per_class * cfg.num_classes;
  std::size_t test_count = cfg.test_per_class * cfg.num_classes;

  // Class c sits at 2*e_c: pairwise mean distance 2*sqrt(2), comfortably
  // separable at the spreads we use.
  auto sample_split = [&](std::size_t count, Rng& rng) {
    Dataset ds;
    ds.sample_shape = {cfg.dim};
    ds.num_classes = cfg.num_classes;
    ds.x.resize(count * cfg.dim);
    ds.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t c = i % cfg.num_classes;
      ds.labels[i] = c;
      for (std::size_t d = 0; d < cfg.dim; ++d) {
        double mean = d == c ? 2.0 : 0.0;
        ds.x[i * cfg.dim + d] = mean + cfg.spread * rng.normal();
      }
    }
    return ds;
  };

  Rng base(seed);
  Rng train_rng = base.substream("blobs-train");
  Rng test_rng = base.substream("blobs-test");
  Dataset train = sample_split(train_count, train_rng);
  Dataset test = sample_split(test_count, test_rng);

  // Joint min/max feature scaling so train and test live on the same [0,1] box.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : train.x) { lo = std::min(lo, v); hi = std::max(hi, v); }
  for (double v : test.x) { lo = std::min(lo, v); hi = std::max(hi, v); }
  if (!(hi > lo)) fail(ErrorCode::bad_value, "blobs: degenerate feature range");
  double inv = 1.0 / (hi - lo);
  for (double& v : train.x) v = (v - lo) * inv;
  for (double& v : test.x) v = (v - lo) * inv;

  // Train-only label corruption: each corrupted point moves to a uniformly
  // random *different* class.
  std::size_t flips = static_cast<std::size_t>(
      std::llround(cfg.label_noise * static_cast<double>(train_count)));
  if (flips > 0) {
    Rng noise_rng = base.substream("blobs-noise");
    std::vector<std::size_t> order(train_count);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    noise_rng.shuffle(order);
    for (std::size_t i = 0; i < flips; ++i) {
      std::size_t idx = order[i];
      std::size_t bump = 1 + noise_rng.uniform_int(cfg.num_classes - 1);
      train.labels[idx] = (train.labels[idx] + bump) % cfg.num_classes;
    }
  }
  return {std::move(train), std::move(test)};
}

IdxData load_idx(const std::string& path) {
  std::vector<std::uint8_t> bytes = read_bytes(path);
  if (bytes.size() < 4) {
    fail(ErrorCode::truncated, path + ": " + std::to_string(bytes.size()) +
                                   " bytes, header needs at least 4");
  }
  if (bytes[0] != 0 || bytes[1] != 0 || bytes[2] != 0x08) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%02x %02x %02x", bytes[0], bytes[1], bytes[2]);
    fail(ErrorCode::bad_magic,
         path + ": bad magic " + buf + ", expected 00 00 08 (unsigned-byte payload)");
  }
  std::size_t ndim = bytes[3];
  if (ndim == 0) fail(ErrorCode::bad_value, path + ": zero-rank payload");
  std::size_t header = 4 + 4 * ndim;
  if (bytes.size() < header) {
    fail(ErrorCode::truncated, path + ": header wants " + std::to_string(header) +
                                   " bytes for " + std::to_string(ndim) + " dims, file has " +
                                   std::to_string(bytes.size()));
  }
  IdxData data;
  std::size_t payload = 1;
  for (std::size_t d = 0; d < ndim; ++d) {
    std::uint32_t dim = read_u32_be(bytes.data() + 4 + 4 * d);
    data.dims.push_back(dim);
    payload *= dim;
  }
  std::size_t have = bytes.size() - header;
  if (have < payload) {
    fail(ErrorCode::truncated, path + ": payload has " + std::to_string(have) +
                                   " bytes, dims want " + std::to_string(payload));
  }
  if (have > payload) {
    fail(ErrorCode::bad_value, path + ": " + std::to_string(have - payload) +
                                   " trailing bytes after payload");
  }
  data.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return data;
}

void save_idx(const std::string& path, const IdxData& data) {
  if (data.dims.empty() || data.dims.size() > 255) {
    fail(ErrorCode::bad_value, "save_idx: rank must be 1..255");
  }
  std::size_t payload = 1;
  for (std::size_t d : data.dims) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      fail(ErrorCode::bad_value, "save_idx: dim does not fit in 32 bits");
    }
    payload *= d;
  }
  if (payload != data.bytes.size()) {
    fail(ErrorCode::count_mismatch, "save_idx: dims want " + std::to_string(payload) +
                                        " bytes, got " + std::to_string(data.bytes.size()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * data.dims.size() + data.bytes.size());
  out.push_back(0);
  out.push_back(0);
  out.push_back(0x08);
  out.push_back(static_cast<std::uint8_t>(data.dims.size()));
  for (std::size_t d : data.dims) push_u32_be(out, static_cast<std::uint32_t>(d));
  out.insert(out.end(), data.bytes.begin(), data.bytes.end());
  write_bytes_atomic(path, out);
}

Dataset load_idx_dataset(const std::string& images_path, const std::string& labels_path,
                         std::size_t num_classes) {
  IdxData images = load_idx(images_path);
  IdxData labels = load_idx(labels_path);
  if (images.dims.size() != 3) {
    fail(ErrorCode::bad_value, images_path + ": expected rank-3 image payload, got rank " +
                                   std::to_string(images.dims.size()));
  }
  if (labels.dims.size() != 1) {
    fail(ErrorCode::bad_value, labels_path + ": expected rank-1 label payload, got rank " +
                                   std::to_string(labels.dims.size()));
  }
  if (images.dims[0] != labels.dims[0]) {
    fail(ErrorCode::count_mismatch, images_path + " has " + std::to_string(images.dims[0]) +
                                        " images but " + labels_path + " has " +
                                        std::to_string(labels.dims[0]) + " labels");
  }
  Dataset ds;
  ds.sample_shape = {1, images.dims[1], images.dims[2]};
  ds.num_classes = num_classes;
  ds.x.resize(images.bytes.size());
  for (std::size_t i = 0; i < images.bytes.size(); ++i) ds.x[i] = images.bytes[i] / 255.0;
  ds.labels.resize(labels.bytes.size());
  for (std::size_t i = 0; i < labels.bytes.size(); ++i) {
    if (labels.bytes[i] >= num_classes) {
      fail(ErrorCode::bad_value, labels_path + ": label " + std::to_string(labels.bytes[i]) +
                                     " at index " + std::to_string(i) + " exceeds class count " +
                                     std::to_string(num_classes));
    }
    ds.labels[i] = labels.bytes[i];
  }
  return ds;
}

void save_idx_dataset(const Dataset& ds, const std::string& images_path,
                      const std::string& labels_path) {
  if (ds.sample_shape.size() != 3 || ds.sample_shape[0] != 1) {
    fail(ErrorCode::bad_value, "save_idx_dataset: samples must be (1, rows, cols), got " +
                                   shape_str(ds.sample_shape));
  }
  IdxData images;
  images.dims = {ds.size(), ds.sample_shape[1], ds.sample_shape[2]};
  images.bytes.resize(ds.x.size());
  for (std::size_t i = 0; i < ds.x.size(); ++i) {
    double v = std::clamp(ds.x[i], 0.0, 1.0);
    images.bytes[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  IdxData labels;
  labels.dims = {ds.size()};
  labels.bytes.resize(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    labels.bytes[i] = static_cast<std::uint8_t>(ds.labels[i]);
  }
  save_idx(images_path, images);
  save_idx(labels_path, labels);
}

Cifar10Data load_cifar10_raw(const std::string& path) {
  std::vector<std::uint8_t> bytes = read_bytes(path);
  if (bytes.empty()) fail(ErrorCode::truncated, path + ": empty file");
  if (bytes.size() % kCifarRecord != 0) {
    fail(ErrorCode::truncated, path + ": " + std::to_string(bytes.size()) +
                                   " bytes is not a whole number of " +
                                   std::to_string(kCifarRecord) + "-byte records");
  }
  std::size_t n = bytes.size() / kCifarRecord;
  Cifar10Data data;
  data.labels.resize(n);
  data.pixels.resize(n * (kCifarRecord - 1));
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t label = bytes[i * kCifarRecord];
    if (label > 9) {
      fail(ErrorCode::bad_value, path + ": label " + std::to_string(label) + " at record " +
                                     std::to_string(i) + " exceeds 9");
    }
    data.labels[i] = label;
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(i * kCifarRecord + 1),
                kCifarRecord - 1,
                data.pixels.begin() + static_cast<std::ptrdiff_t>(i * (kCifarRecord - 1)));
  }
  return data;
}

void save_cifar10_raw(const std::string& path, const Cifar10Data& data) {
  if (data.pixels.size() != data.labels.size() * (kCifarRecord - 1)) {
    fail(ErrorCode::count_mismatch,
         "save_cifar10: " + std::to_string(data.labels.size()) + " labels need " +
             std::to_string(data.labels.size() * (kCifarRecord - 1)) + " pixel bytes, got " +
             std::to_string(data.pixels.size()));
  }
  std::vector<std::uint8_t> out;
  out.reserve(data.labels.size() * kCifarRecord);
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    out.push_back(data.labels[i]);
    out.insert(out.end(),
               data.pixels.begin() + static_cast<std::ptrdiff_t>(i * (kCifarRecord - 1)),
               data.pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * (kCifarRecord - 1)));
  }
  write_bytes_atomic(path, out);
}

Dataset cifar10_to_dataset(const Cifar10Data& data) {
  Dataset ds;
  ds.sample_shape = {3, 32, 32};
  ds.num_classes = 10;
  ds.x.resize(data.pixels.size());
  for (std::size_t i = 0; i < data.pixels.size(); ++i) ds.x[i] = data.pixels[i] / 255.0;
  ds.labels.assign(data.labels.begin(), data.labels.end());
  return ds;
}

Dataset load_cifar10(const std::vector<std::string>& paths) {
  if (paths.empty()) fail(ErrorCode::config, "load_cifar10: no batch files given");
  Cifar10Data all;
  for (const auto& p : paths) {
    Cifar10Data batch = load_cifar10_raw(p);
    all.labels.insert(all.labels.end(), batch.labels.begin(), batch.labels.end());
    all.pixels.insert(all.pixels.end(), batch.pixels.begin(), batch.pixels.end());
  }
  return cifar10_to_dataset(all);
}

Dataset subsample(const Dataset& ds, std::size_t total, bool stratified, std::uint64_t seed) {
  if (total == 0 || total > ds.size()) {
    fail(ErrorCode::bad_value, "subsample: want " + std::to_string(total) + " of " +
                                   std::to_string(ds.size()) + " points");
  }
  if (ds.num_classes == 0) fail(ErrorCode::bad_value, "subsample: dataset has no class count");

  std::uint64_t base = mix_seed(seed, "subsample");
  std::vector<std::size_t> picked;
  if (!stratified) {
    std::vector<std::size_t> pool(ds.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    Rng rng(base);
    rng.shuffle(pool);
    picked.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(total));
  } else {
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.labels[i] >= ds.num_classes) {
        fail(ErrorCode::bad_value, "subsample: label out of range at index " + std::to_string(i));
      }
      by_class[ds.labels[i]].push_back(i);
    }

    // Largest-remainder apportionment of per-class quotas.
    std::vector<std::size_t> quota(ds.num_classes);
    std::vector<std::pair<std::size_t, std::size_t>> rem;  // (remainder, class)
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
      std::size_t scaled = total * by_class[c].size();
      quota[c] = scaled / ds.size();
      assigned += quota[c];
      rem.emplace_back(scaled % ds.size(), c);
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t k = 0; assigned < total; ++k) {
      ++quota[rem[k].second];
      ++assigned;
    }

    for (std::size_t c = 0; c < ds.num_classes; ++c) {
      if (quota[c] == 0) continue;
      Rng rng(mix_seed(base, static_cast<std::uint64_t>(c)));
      std::vector<std::size_t> pool = by_class[c];
      rng.shuffle(pool);
      picked.insert(picked.end(), pool.begin(),
                    pool.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
  }
  std::sort(picked.begin(), picked.end());

  Dataset out;
  out.sample_shape = ds.sample_shape;
  out.num_classes = ds.num_classes;
  std::size_t d = ds.sample_size();
  out.x.resize(picked.size() * d);
  out.labels.resize(picked.size());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    std::copy_n(ds.x.begin() + static_cast<std::ptrdiff_t>(picked[i] * d), d,
                out.x.begin() + static_cast<std::ptrdiff_t>(i * d));
    out.labels[i] = ds.labels[picked[i]];
  }
  return out;
}

BatchIterator::BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_size_(batch_size), seed_(seed) {
  if (n == 0) fail(ErrorCode::bad_value, "batch iterator: empty dataset");
  if (batch_size == 0) fail(ErrorCode::bad_value, "batch iterator: zero batch size");
}

std::size_t BatchIterator::batches_per_epoch() const {
  return (n_ + batch_size_ - 1) / batch_size_;
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch_batches(std::uint64_t epoch) const {
  std::vector<std::size_t> perm(n_);
  for (std::size_t i = 0; i < n_; ++i) perm[i] = i;
  Rng rng(mix_seed(mix_seed(seed_, "shuffle"), epoch));
  rng.shuffle(perm);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n_; at += batch_size_) {
    std::size_t end = std::min(n_, at + batch_size_);
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(at),
                         perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace selb
