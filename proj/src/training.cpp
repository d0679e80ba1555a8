#include "gradprop/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace gradprop {

namespace {

int first_nonfinite_block(const VarTrace& rows) {
    for (const auto& r : rows)
        if (!r.finite()) return r.block_index;
    return -1;
}

// Boundary gradients can stay finite while a weight gradient overflows. The
// rows of the affected blocks then carry the marker instead; a bad stem or
// head tensor marks every row.
void mark_nonfinite_parameters(VarTrace& rows, const std::vector<std::string>& bad_tensors) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    bool marked = false;
    for (auto& r : rows) {
        const std::string prefix = "block" + std::to_string(r.block_index) + ".";
        for (const auto& name : bad_tensors) {
            if (name.starts_with(prefix)) {
                r.mean_grad_variance = r.grad_l2 = nan;
                marked = true;
                break;
            }
        }
    }
    if (!marked)
        for (auto& r : rows) r.mean_grad_variance = r.grad_l2 = nan;
}

}  // namespace

void SgdConfig::validate() const {
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("sgd: learning_rate must be non-negative");
    if (batch_size < 2) throw std::invalid_argument("sgd: batch_size must be >= 2");
    if (total_steps < 0) throw std::invalid_argument("sgd: total_steps must be non-negative");
    if (probe_every < 1 || (total_steps > 0 && probe_every > total_steps))
        throw std::invalid_argument("sgd: probe_every must be in [1, total_steps]");
}

XentResult softmax_xent(const Batch& logits, const std::vector<int>& labels) {
    if (labels.size() != logits.rows()) throw std::invalid_argument("softmax_xent: label count does not match batch");
    XentResult out;
    out.dlogits = Batch(logits.rows(), logits.cols());
    if (!all_finite(logits)) {
        out.finite = false;
        out.loss = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    const double inv_m = 1.0 / static_cast<double>(logits.rows());
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto z = logits.row(r);
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= z.size()) throw std::invalid_argument("softmax_xent: label out of range");
        const auto max_it = std::max_element(z.begin(), z.end());
        const double zmax = *max_it;
        if (static_cast<int>(max_it - z.begin()) == y) ++out.correct;
        double sum = 0.0;
        for (double v : z) sum += std::exp(v - zmax);
        const double log_sum = std::log(sum);
        total += log_sum + zmax - z[static_cast<std::size_t>(y)];
        auto d = out.dlogits.row(r);
        for (std::size_t c = 0; c < z.size(); ++c) d[c] = std::exp(z[c] - zmax - log_sum) * inv_m;
        d[static_cast<std::size_t>(y)] -= inv_m;
    }
    out.loss = total * inv_m;
    out.finite = std::isfinite(out.loss) && all_finite(out.dlogits);
    return out;
}

void sgd_step(Model& m, const Model& grads, double lr) {
    std::vector<std::span<const double>> g;
    for_each_tensor(grads, [&](const std::string&, TensorShape, std::span<const double> t) { g.push_back(t); });
    std::size_t i = 0;
    for_each_tensor(m, [&](const std::string& name, TensorShape, std::span<double> t) {
        if (i >= g.size() || g[i].size() != t.size()) throw std::invalid_argument("sgd_step: gradient layout mismatch at " + name);
        const auto& gt = g[i++];
        for (std::size_t k = 0; k < t.size(); ++k) t[k] -= lr * gt[k];
    });
    if (i != g.size()) throw std::invalid_argument("sgd_step: gradient layout mismatch");
}

double evaluate_accuracy(const Model& m, const Dataset& ds, std::size_t batch_size, std::uint64_t seed) {
    // Batch statistics make the prediction depend on batch composition, so
    // evaluate over a fixed shuffle rather than the (possibly class-sorted)
    // storage order.
    std::vector<std::size_t> order(ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto rng = SeededRng(seed).fork(2);
    shuffle_indices(order, rng);

    std::size_t correct = 0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
        const std::size_t n = std::min(batch_size, ds.size() - start);
        if (n < 2) break;
        Batch x(n, ds.input_dim());
        for (std::size_t i = 0; i < n; ++i) {
            const auto src = ds.inputs.row(order[start + i]);
            std::copy(src.begin(), src.end(), x.row(i).begin());
        }
        const auto fwd = network_forward(m, x);
        for (std::size_t i = 0; i < n; ++i) {
            const auto z = fwd.logits.row(i);
            if (!all_finite(z)) continue;
            const auto arg = std::max_element(z.begin(), z.end()) - z.begin();
            if (arg == ds.labels[order[start + i]]) ++correct;
        }
        seen += n;
    }
    return seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
}

TrainResult train(Model& m, const Dataset& ds, const SgdConfig& cfg) {
    cfg.validate();
    TrainResult result;
    if (cfg.total_steps == 0) return result;

    BatchIterator batches(ds, cfg.batch_size, SeededRng(cfg.seed).fork(1));
    for (long step = 0; step < cfg.total_steps; ++step) {
        const auto batch = batches.next();
        const auto fwd = network_forward(m, batch.inputs);
        const auto xent = softmax_xent(fwd.logits, batch.labels);
        result.records.push_back({step, xent.loss,
                                  static_cast<double>(xent.correct) / static_cast<double>(batch.labels.size())});

        GradientTape tape;
        bool grads_finite = xent.finite;
        std::vector<std::string> bad_tensors;
        if (grads_finite) {
            tape = network_backward(m, fwd, xent.dlogits);
            for_each_tensor(tape.params, [&](const std::string& name, TensorShape, std::span<const double> t) {
                if (!all_finite(t)) bad_tensors.push_back(name);
            });
            if (!bad_tensors.empty()) grads_finite = false;
            for (const auto& b : tape.boundary)
                if (!all_finite(b)) grads_finite = false;
        }

        const bool probe = step % cfg.probe_every == 0 || step == cfg.total_steps - 1 || !grads_finite;
        if (probe) {
            VarTrace rows;
            if (xent.finite) {
                rows = probe_boundaries(step, m, tape);
                if (!grads_finite) mark_nonfinite_parameters(rows, bad_tensors);
            } else {
                // No usable gradient: mark every boundary explicitly.
                for (std::size_t i = 0; i < m.blocks.size(); ++i) {
                    const double nan = std::numeric_limits<double>::quiet_NaN();
                    rows.push_back({step, static_cast<int>(i + 1), m.blocks[i].scale_index + 1, nan, nan, nan});
                }
            }
            result.trace.insert(result.trace.end(), rows.begin(), rows.end());
            const auto a = record_a_stats(step, m);
            result.a_stats.insert(result.a_stats.end(), a.begin(), a.end());

            if (!grads_finite) {
                result.explosion = {true, step, first_nonfinite_block(rows), "non-finite loss or gradient"};
                break;
            }
            if (!result.variance_alarm.flagged) {
                const auto alarm = detect_explosion(rows);
                if (alarm.flagged) result.variance_alarm = alarm;
            }
        }
        sgd_step(m, tape.params, cfg.learning_rate);
    }
    result.final_train_accuracy = evaluate_accuracy(m, ds, cfg.batch_size, cfg.seed);
    return result;
}

}  // namespace gradprop
