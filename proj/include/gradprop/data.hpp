#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "gradprop/numerics.hpp"

namespace gradprop {

class DataFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Matrix inputs;            // sample-major
    std::vector<int> labels;  // in [0, num_classes)
    int num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t input_dim() const noexcept { return inputs.cols(); }
};

/// Gaussian class clusters around means placed on a sphere.
struct SyntheticSpec {
    int num_classes = 10;
    std::size_t input_dim = 64;
    double radius = 4.0;
    double sigma = 1.0;
    std::size_t per_class = 500;
    std::uint64_t seed = 0;
};

/// Samples are grouped by class (class 0 first). Returned inputs are raw, not
/// standardized.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Shifts and scales every feature to mean 0 and variance 1 in place.
/// Constant features are only centered.
void standardize(Dataset& ds);

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarPixels;

/// Reads CIFAR-10 binary batches (1 label byte + 3072 pixel bytes per record),
/// scales pixels to [0, 1] and standardizes per feature.
Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths);
/// Same record layout; pixels are taken unscaled from `pixels` (values 0..255).
void write_cifar10_binary(const std::filesystem::path& path, const std::vector<int>& labels,
                          const std::vector<std::vector<std::uint8_t>>& pixels);
/// data_batch_1.bin .. data_batch_5.bin under dir.
std::vector<std::filesystem::path> cifar10_train_files(const std::filesystem::path& dir);

/// CSV with header `label,f0,...,f{d-1}`; values written with round-trip precision.
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path, int num_classes);

struct LabeledBatch {
    Batch inputs;
    std::vector<int> labels;
    std::vector<std::size_t> indices;
};

/// Shuffled mini-batches without replacement; a fresh permutation each pass,
/// and the trailing partial batch of a pass is dropped.
class BatchIterator {
public:
    BatchIterator(const Dataset& ds, std::size_t batch_size, SeededRng rng);

    LabeledBatch next();
    std::size_t batches_per_pass() const noexcept { return order_.size() / batch_size_; }
    std::size_t pass() const noexcept { return pass_; }

private:
    void reshuffle();

    const Dataset* ds_;
    std::size_t batch_size_;
    SeededRng rng_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::size_t pass_ = 0;
};

}  // namespace gradprop
