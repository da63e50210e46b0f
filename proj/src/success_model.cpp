#include "svgg/success_model.hpp"

#include <cmath>
#include <stdexcept>

namespace svgg::success {

void OutcomeBuffer::push(Vec goal, bool success) {
    if (items_.size() < capacity_) {
        items_.push_back({std::move(goal), success});
        if (success) ++successes_;
    } else {
        if (items_[head_].success) --successes_;
        items_[head_] = {std::move(goal), success};
        if (success) ++successes_;
        head_ = (head_ + 1) % capacity_;
    }
}

SuccessPredictor SuccessPredictor::make(int goal_dim, const std::vector<int>& hidden, double lr,
                                        Rng& rng) {
    std::vector<int> dims;
    dims.push_back(goal_dim);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(1);
    SuccessPredictor m{nn::Mlp::make(dims, nn::Activation::Gelu, nn::Activation::Sigmoid),
                       nn::AdamState{}};
    nn::init_uniform_fanin(m.net, rng);
    m.adam = nn::AdamState::make(m.net.param_count(), lr);
    return m;
}

double bce_loss(double p, double target) {
    return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

TrainStats train_success_model(SuccessPredictor& model, const OutcomeBuffer& buffer,
                               int batch_size, int n_steps, Rng& rng) {
    if (buffer.empty()) throw std::invalid_argument("train_success_model: empty outcome buffer");
    if (batch_size <= 0 || n_steps <= 0)
        throw std::invalid_argument("train_success_model: batch_size and n_steps must be positive");

    TrainStats stats;
    const size_t n = buffer.size();
    const size_t n_succ = buffer.success_count();
    const size_t n_fail = n - n_succ;
    stats.single_class = (n_succ == 0 || n_fail == 0);
    stats.minority_fraction = static_cast<double>(std::min(n_succ, n_fail)) / n;

    std::vector<Vec> inputs(batch_size);
    std::vector<double> targets(batch_size);
    std::vector<size_t> succ_idx, fail_idx;

    nn::MlpGrads grads;
    std::vector<double> preds(batch_size);

    for (int step = 0; step < n_steps; ++step) {
        // raw uniform draw, then resample the minority class inside the batch
        // until the expected class balance is 50/50
        succ_idx.clear();
        fail_idx.clear();
        for (int b = 0; b < batch_size; ++b) {
            const size_t i = rng.bounded(n);
            (buffer.at(i).success ? succ_idx : fail_idx).push_back(i);
        }
        if (!stats.single_class) {
            auto& minority = (succ_idx.size() < fail_idx.size()) ? succ_idx : fail_idx;
            auto& majority = (succ_idx.size() < fail_idx.size()) ? fail_idx : succ_idx;
            if (minority.empty()) {
                // draw directly from the minority class of the buffer
                const bool want_success = (&minority == &succ_idx);
                while (minority.size() < majority.size()) {
                    size_t i;
                    do { i = rng.bounded(n); } while (buffer.at(i).success != want_success);
                    minority.push_back(i);
                }
            } else {
                while (minority.size() < majority.size())
                    minority.push_back(minority[rng.bounded(minority.size())]);
            }
        }

        const size_t total = succ_idx.size() + fail_idx.size();
        inputs.resize(total);
        targets.resize(total);
        preds.resize(total);
        size_t b = 0;
        for (size_t i : fail_idx) {
            inputs[b] = buffer.at(i).goal;
            targets[b++] = 0.0;
        }
        for (size_t i : succ_idx) {
            inputs[b] = buffer.at(i).goal;
            targets[b++] = 1.0;
        }

        const double inv = 1.0 / static_cast<double>(total);
        double loss_sum = 0.0;
        nn::batch_param_grads(
            model.net, inputs,
            [&](std::ptrdiff_t i, const Vec& out, Vec& upstream) {
                const double p = out[0];
                preds[i] = p;
                upstream.assign(1, (p - targets[i]) * inv); // dBCE/dlogit
            },
            grads, /*on_preactivation=*/true);
        for (size_t i = 0; i < total; ++i) loss_sum += bce_loss(preds[i], targets[i]);
        nn::adam_step(model.net.params, grads.params, model.adam);
        if (step == n_steps - 1) stats.mean_loss = loss_sum * inv;
        stats.mean_batch_positive_fraction +=
            static_cast<double>(succ_idx.size()) / static_cast<double>(total);
    }
    stats.mean_batch_positive_fraction /= n_steps;
    return stats;
}

double predict_success_and_grad(const SuccessPredictor& model, std::span<const double> g,
                                std::span<double> grad) {
    thread_local nn::ForwardCache cache;
    thread_local Vec input_grad;
    const Vec& out = nn::mlp_forward_cached(model.net, g, cache);
    const double upstream[1] = {1.0};
    nn::mlp_backward_input(model.net, cache, upstream, input_grad);
    for (size_t i = 0; i < grad.size(); ++i) grad[i] = input_grad[i];
    return out[0];
}

double predict_success(const SuccessPredictor& model, std::span<const double> g) {
    return nn::mlp_forward(model.net, g)[0];
}

} // namespace svgg::success
