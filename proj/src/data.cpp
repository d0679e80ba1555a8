#include "gradprop/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace gradprop {

Dataset generate_synthetic(const SyntheticSpec& spec) {
    if (spec.num_classes < 2) throw std::invalid_argument("synthetic: need at least two classes");
    if (!(spec.radius > 0.0) || !(spec.sigma >= 0.0)) throw std::invalid_argument("synthetic: radius must be positive");
    if (spec.input_dim == 0 || spec.per_class == 0) throw std::invalid_argument("synthetic: empty dataset");

    SeededRng rng(spec.seed);
    const std::size_t d = spec.input_dim;
    Matrix means(static_cast<std::size_t>(spec.num_classes), d);
    for (std::size_t c = 0; c < means.rows(); ++c) {
        auto row = means.row(c);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (double& v : row) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm == 0.0);
        const double s = spec.radius / std::sqrt(norm);
        for (double& v : row) v *= s;
    }

    Dataset ds;
    ds.num_classes = spec.num_classes;
    ds.inputs = Matrix(means.rows() * spec.per_class, d);
    ds.labels.reserve(ds.inputs.rows());
    std::size_t r = 0;
    for (std::size_t c = 0; c < means.rows(); ++c) {
        for (std::size_t i = 0; i < spec.per_class; ++i, ++r) {
            auto row = ds.inputs.row(r);
            const auto mu = means.row(c);
            for (std::size_t j = 0; j < d; ++j) row[j] = mu[j] + spec.sigma * rng.normal();
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    return ds;
}

void standardize(Dataset& ds) {
    if (ds.inputs.rows() < 2) return;
    const auto mean = batch_mean(ds.inputs);
    const auto var = batch_var(ds.inputs);
    for (std::size_t r = 0; r < ds.inputs.rows(); ++r) {
        auto row = ds.inputs.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double centered = row[c] - mean[c];
            row[c] = var[c] > 0.0 ? centered / std::sqrt(var[c]) : centered;
        }
    }
}

Dataset load_cifar10_binary(const std::vector<std::filesystem::path>& paths) {
    if (paths.empty()) throw DataFormatError("cifar10: no input files");
    std::vector<std::uint8_t> bytes;
    std::vector<int> labels;
    std::vector<double> pixels;
    for (const auto& path : paths) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw DataFormatError("cifar10: cannot open " + path.string());
        bytes.assign(std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>());
        if (bytes.size() % kCifarRecordBytes != 0) {
            throw DataFormatError("cifar10: size of " + path.string() + " (" + std::to_string(bytes.size()) +
                                  " bytes) is not a multiple of " + std::to_string(kCifarRecordBytes));
        }
        const std::size_t n = bytes.size() / kCifarRecordBytes;
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint8_t* rec = bytes.data() + i * kCifarRecordBytes;
            if (rec[0] > 9) {
                throw DataFormatError("cifar10: corrupt record " + std::to_string(i) + " in " + path.string() +
                                      " (label " + std::to_string(rec[0]) + ")");
            }
            labels.push_back(rec[0]);
            for (std::size_t p = 1; p <= kCifarPixels; ++p) pixels.push_back(rec[p] / 255.0);
        }
    }
    Dataset ds;
    ds.num_classes = 10;
    ds.labels = std::move(labels);
    ds.inputs = Matrix(ds.labels.size(), kCifarPixels, std::move(pixels));
    standardize(ds);
    return ds;
}

void write_cifar10_binary(const std::filesystem::path& path, const std::vector<int>& labels,
                          const std::vector<std::vector<std::uint8_t>>& pixels) {
    if (labels.size() != pixels.size()) throw std::invalid_argument("cifar10: label/pixel count mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataFormatError("cifar10: cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (pixels[i].size() != kCifarPixels) throw std::invalid_argument("cifar10: each record needs 3072 pixels");
        const char label = static_cast<char>(labels[i]);
        os.write(&label, 1);
        os.write(reinterpret_cast<const char*>(pixels[i].data()), static_cast<std::streamsize>(kCifarPixels));
    }
}

std::vector<std::filesystem::path> cifar10_train_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (int i = 1; i <= 5; ++i) out.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
    return out;
}

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataFormatError("csv: cannot open " + path.string() + " for writing");
    os << "label";
    for (std::size_t j = 0; j < ds.input_dim(); ++j) os << ",f" << j;
    os << '\n' << std::setprecision(17);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        os << ds.labels[r];
        for (double v : ds.inputs.row(r)) os << ',' << v;
        os << '\n';
    }
}

Dataset read_dataset_csv(const std::filesystem::path& path, int num_classes) {
    std::ifstream is(path);
    if (!is) throw DataFormatError("csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || line.rfind("label", 0) != 0) throw DataFormatError("csv: missing header");
    const std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));

    Dataset ds;
    ds.num_classes = num_classes;
    std::vector<double> values;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        const int label = std::stoi(cell);
        if (label < 0 || label >= num_classes) throw DataFormatError("csv: label out of range");
        ds.labels.push_back(label);
        std::size_t n = 0;
        while (std::getline(ss, cell, ',')) {
            values.push_back(std::stod(cell));
            ++n;
        }
        if (n != d) throw DataFormatError("csv: row with wrong number of features");
    }
    ds.inputs = Matrix(ds.labels.size(), d, std::move(values));
    return ds;
}

BatchIterator::BatchIterator(const Dataset& ds, std::size_t batch_size, SeededRng rng)
    : ds_(&ds), batch_size_(batch_size), rng_(rng), order_(ds.size()) {
    if (batch_size == 0 || batch_size > ds.size()) throw std::invalid_argument("BatchIterator: batch_size must be in [1, dataset size]");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    reshuffle();
}

void BatchIterator::reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    shuffle_indices(order_, rng_);
    cursor_ = 0;
}

LabeledBatch BatchIterator::next() {
    if (cursor_ + batch_size_ > order_.size()) {
        reshuffle();
        ++pass_;
    }
    LabeledBatch b;
    b.inputs = Batch(batch_size_, ds_->input_dim());
    b.labels.reserve(batch_size_);
    b.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_size_));
    for (std::size_t i = 0; i < batch_size_; ++i) {
        const std::size_t src = b.indices[i];
        const auto in = ds_->inputs.row(src);
        std::copy(in.begin(), in.end(), b.inputs.row(i).begin());
        b.labels.push_back(ds_->labels[src]);
    }
    cursor_ += batch_size_;
    return b;
}

}  // namespace gradprop
