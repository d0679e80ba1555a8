#pragma once

#include <filesystem>
#include <vector>

#include "gradprop/data.hpp"
#include "gradprop/probes.hpp"
#include "gradprop/resnet.hpp"

namespace gradprop {

struct SgdConfig {
    double learning_rate = 0.01;
    std::size_t batch_size = 128;
    long total_steps = 2000;
    long probe_every = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainRecord {
    long step = 0;
    double loss = 0.0;
    double train_accuracy = 0.0;  // on the step's mini-batch
};

struct XentResult {
    double loss = 0.0;
    Batch dlogits;
    bool finite = true;
    std::size_t correct = 0;  // argmax hits
};

/// Mean softmax cross-entropy and its gradient (softmax − onehot) / m.
/// Non-finite logits set `finite = false` instead of throwing.
XentResult softmax_xent(const Batch& logits, const std::vector<int>& labels);

/// θ ← θ − lr · ∇θ for every tensor, including γ and β.
void sgd_step(Model& m, const Model& grads, double lr);

struct TrainResult {
    std::vector<TrainRecord> records;
    VarTrace trace;
    std::vector<AStatRow> a_stats;
    /// Set when the loss or any gradient turned non-finite; training stopped there.
    ExplosionReport explosion;
    /// First probe whose cross-block variance spread crossed the explosion
    /// threshold. Informational: it does not stop training.
    ExplosionReport variance_alarm;
    double final_train_accuracy = 0.0;

    bool exploded() const noexcept { return explosion.flagged; }
};

/// Fraction of samples classified correctly, evaluated in training-mode
/// batches (BN uses batch statistics) over a permutation fixed by `seed`; a
/// trailing partial batch with fewer than two samples is skipped.
double evaluate_accuracy(const Model& m, const Dataset& ds, std::size_t batch_size, std::uint64_t seed);

/// Runs `cfg.total_steps` SGD steps. Probes (gradient trace and β/γ stats) are
/// taken at step 0, every `probe_every` steps and at the last step, always on
/// the gradients of that step before the update. Training stops at the first
/// non-finite loss or gradient and reports it as an explosion; that is a
/// normal outcome, not an error.
TrainResult train(Model& m, const Dataset& ds, const SgdConfig& cfg);

}  // namespace gradprop
